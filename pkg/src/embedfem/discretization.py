"""Bilinear quad basis, reference-physical mapping, and weak-form kernels.

Everything here is written once against generic scalar storage: the mapping
runs in the mesh scalar kind (so shape derivatives flow through the geometry)
and interpolation/integration promote between the mesh and solution kinds
through plain arithmetic. No kernel in this module knows which evaluation
type it is running under.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import scalars as sc
from .graph import Evaluator, FieldSpec
from .mesh import MeshError

#: reference-square corner coordinates, counterclockwise
REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


@dataclass(frozen=True)
class BasisSet:
    """Reference-element basis values and gradients at quadrature points."""

    values: np.ndarray         # (4, nq)
    ref_gradients: np.ndarray  # (4, nq, 2)
    points: np.ndarray         # (nq, 2)
    weights: np.ndarray        # (nq,)

    @property
    def num_nodes(self):
        return self.values.shape[0]

    @property
    def num_qp(self):
        return self.values.shape[1]


def shape_values(points):
    """Bilinear shape functions phi_i = (1 + xi xi_i)(1 + eta eta_i)/4."""
    pts = np.atleast_2d(points)
    return 0.25 * (1.0 + np.outer(REF_NODES[:, 0], pts[:, 0])) \
                * (1.0 + REF_NODES[:, 1][:, None] * pts[:, 1][None, :])


def shape_gradients(points):
    pts = np.atleast_2d(points)
    grads = np.empty((4, pts.shape[0], 2))
    grads[:, :, 0] = 0.25 * REF_NODES[:, 0][:, None] \
        * (1.0 + REF_NODES[:, 1][:, None] * pts[:, 1][None, :])
    grads[:, :, 1] = 0.25 * REF_NODES[:, 1][:, None] \
        * (1.0 + REF_NODES[:, 0][:, None] * pts[:, 0][None, :])
    return grads


def bilinear_basis(quad_order=2):
    """Tensor-product Gauss quadrature basis tables on [-1, 1]^2."""
    if quad_order not in (1, 2, 3):
        raise ValueError(f"unsupported quadrature order {quad_order}")
    x1, w1 = np.polynomial.legendre.leggauss(quad_order)
    pts = np.array([(xa, xb) for xa in x1 for xb in x1])
    wts = np.array([wa * wb for wa in w1 for wb in w1])
    return BasisSet(shape_values(pts), shape_gradients(pts), pts, wts)


# ---------------------------------------------------------------------------
# generic element geometry
# ---------------------------------------------------------------------------

def mapping_jacobian(coords, basis):
    """2x2 mapping Jacobian entries J[a][b] = d x_a / d xi_b, each (e, q).

    ``coords`` is generic storage shaped (e, n, 2); the result scalars share
    its kind, so dual-valued coordinates yield dual-valued geometry.
    """
    dphi = basis.ref_gradients
    jac = [[None, None], [None, None]]
    for a in range(2):
        for b in range(2):
            acc = None
            for n in range(basis.num_nodes):
                term = coords[:, n, a][:, None] * dphi[n, :, b]
                acc = term if acc is None else acc + term
            jac[a][b] = acc
    return jac


def element_geometry(coords, basis):
    """Determinant, physical gradients, and weighted basis tables.

    Returns (det, phys_grad, det_w) where det has shape (e, q), ``phys_grad``
    is a list [n][d] of (e, q) scalars, and det_w = det * w_q. Raises if the
    determinant is non-positive anywhere (ids are workset-local).
    """
    jac = mapping_jacobian(coords, basis)
    det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
    det_values = sc.strip_derivatives(det)
    if np.any(det_values <= 0.0):
        bad = np.unique(np.nonzero(det_values <= 0.0)[0])
        raise MeshError(
            f"non-positive mapping determinant in workset elements {bad[:8].tolist()}")
    # inverse transpose applied to reference gradients:
    #   d phi / dx = (d phi/d xi) (d xi/dx),  d xi_b / d x_a = adj(J)/det
    inv = [[jac[1][1] / det, -jac[0][1] / det],
           [-jac[1][0] / det, jac[0][0] / det]]
    dphi = basis.ref_gradients
    phys_grad = [[None, None] for _ in range(basis.num_nodes)]
    for n in range(basis.num_nodes):
        for d in range(2):
            phys_grad[n][d] = (inv[0][d] * dphi[n, :, 0]
                               + inv[1][d] * dphi[n, :, 1])
    det_w = det * basis.weights
    return det, phys_grad, det_w


def interpolate_to_qp(nodal, basis):
    """u(q) = sum_i phi_i(q) u_i; (e, n) storage -> (e, q) storage."""
    acc = None
    for n in range(basis.num_nodes):
        term = nodal[:, n][:, None] * basis.values[n]
        acc = term if acc is None else acc + term
    return acc


def gradient_component_at_qp(nodal, phys_grad, d):
    """One component of grad u at quadrature points, (e, q) storage."""
    acc = None
    for n in range(len(phys_grad)):
        term = nodal[:, n][:, None] * phys_grad[n][d]
        acc = term if acc is None else acc + term
    return acc


def integrate(accum_field, integrand, weighted):
    """accum(e, i) += sum_q integrand(e, q, .) * weighted(e, i, q, .).

    Scalar integrands contract with the weighted basis values, vector
    integrands with the weighted basis gradients; the call accumulates so a
    residual can be built up term by term.
    """
    w_rank = len(weighted.shape if isinstance(weighted, (sc.Dual, sc.PCE))
                 else np.shape(weighted))
    i_rank = len(integrand.shape if isinstance(integrand, (sc.Dual, sc.PCE))
                 else np.shape(integrand))
    if w_rank != i_rank + 1:
        raise ValueError(
            f"integrand rank {i_rank} does not match weighted basis rank {w_rank}")
    axes = (2,) if w_rank == 3 else (2, 3)
    contribution = (weighted * integrand[:, None]).sum(axis=axes)
    accum_field.accumulate(contribution)


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

class ElementGeometryEvaluator(Evaluator):
    """Maps gathered coordinates to weighted basis tables and qp coordinates."""

    name = "element_geometry"

    def __init__(self, basis):
        self.basis = basis
        self.depends = (FieldSpec("coords_node", ("elem", "node", "dim"), "mesh"),)
        self.evaluates = (
            FieldSpec("weighted_bf", ("elem", "node", "qp"), "mesh"),
            FieldSpec("grad_bf", ("elem", "node", "qp", "dim"), "mesh"),
            FieldSpec("weighted_grad_bf", ("elem", "node", "qp", "dim"), "mesh"),
            FieldSpec("det_w", ("elem", "qp"), "mesh"),
            FieldSpec("coords_qp", ("elem", "qp", "dim"), "mesh"),
        )

    def evaluate(self, ctx):
        basis = self.basis
        coords = ctx.field("coords_node").data
        det, phys_grad, det_w = element_geometry(coords, basis)
        ctx.field("det_w").assign(det_w)
        wbf = ctx.field("weighted_bf")
        gbf = ctx.field("grad_bf")
        wgbf = ctx.field("weighted_grad_bf")
        for n in range(basis.num_nodes):
            wbf[:, n] = det_w * basis.values[n]
            for d in range(2):
                gbf[:, n, :, d] = phys_grad[n][d]
                wgbf[:, n, :, d] = phys_grad[n][d] * det_w
        xqp = ctx.field("coords_qp")
        for d in range(2):
            xqp[:, :, d] = interpolate_to_qp(coords[:, :, d], basis)


class SolutionAtQPEvaluator(Evaluator):
    """Interpolates one nodal unknown and its gradient to quadrature points."""

    def __init__(self, unknown, basis):
        self.unknown = unknown
        self.basis = basis
        self.name = f"{unknown}_at_qp"
        self.depends = (
            FieldSpec(f"{unknown}_node", ("elem", "node"), "solution"),
            FieldSpec("grad_bf", ("elem", "node", "qp", "dim"), "mesh"),
        )
        self.evaluates = (
            FieldSpec(f"{unknown}_qp", ("elem", "qp"), "solution"),
            FieldSpec(f"grad_{unknown}_qp", ("elem", "qp", "dim"), "solution"),
        )

    def evaluate(self, ctx):
        nodal = ctx.field(f"{self.unknown}_node").data
        ctx.field(f"{self.unknown}_qp").assign(interpolate_to_qp(nodal, self.basis))
        gbf = ctx.field("grad_bf").data
        phys_grad = [[gbf[:, n, :, d] for d in range(2)]
                     for n in range(self.basis.num_nodes)]
        grad = ctx.field(f"grad_{self.unknown}_qp")
        for d in range(2):
            grad[:, :, d] = gradient_component_at_qp(nodal, phys_grad, d)
