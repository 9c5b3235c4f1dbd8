"""Basis tables, mapping geometry, interpolation, and the integrate kernel."""

import numpy as np
import pytest

from embedfem import scalars as sc
from embedfem.discretization import (REF_NODES, bilinear_basis,
                                     element_geometry,
                                     gradient_component_at_qp, integrate,
                                     interpolate_to_qp, shape_values)
from embedfem.fields import Field, Layout, make_storage
from embedfem.mesh import MeshError


def square_coords(h=1.0, n_elems=1):
    """Axis-aligned h x h elements at the origin, shaped (e, 4, 2)."""
    quad = np.array([[0.0, 0.0], [h, 0.0], [h, h], [0.0, h]])
    return np.broadcast_to(quad, (n_elems, 4, 2)).copy()


def test_basis_is_kronecker_delta_at_nodes():
    vals = shape_values(REF_NODES)
    assert np.allclose(vals, np.eye(4), atol=1e-15)


def test_quad_order_two_points_and_weights():
    b = bilinear_basis(2)
    assert b.num_qp == 4
    assert np.allclose(np.abs(b.points), 1.0 / np.sqrt(3.0))
    assert np.allclose(b.weights, 1.0)


def test_quadrature_integrates_xi_squared_exactly():
    b = bilinear_basis(2)
    assert np.sum(b.weights * b.points[:, 0] ** 2) == pytest.approx(4.0 / 3.0, rel=1e-15)


def test_partition_of_unity_and_gradient_sum():
    for order in (1, 2, 3):
        b = bilinear_basis(order)
        assert np.allclose(b.values.sum(axis=0), 1.0, atol=1e-14)
        assert np.allclose(b.ref_gradients.sum(axis=0), 0.0, atol=1e-14)


def test_unsupported_quadrature_order():
    with pytest.raises(ValueError):
        bilinear_basis(4)


def test_square_element_determinant():
    b = bilinear_basis(2)
    for h in (0.5, 1.0, 2.0):
        det, _, _ = element_geometry(square_coords(h), b)
        assert np.allclose(det, h * h / 4.0, atol=1e-15)


def test_identity_mapped_reference_element_gradients():
    b = bilinear_basis(2)
    coords = np.broadcast_to(2.0 * REF_NODES / 2.0, (1, 4, 2)).copy()
    coords = REF_NODES[None].copy()
    _, phys_grad, _ = element_geometry(coords, b)
    for n in range(4):
        for d in range(2):
            assert np.allclose(phys_grad[n][d], b.ref_gradients[n, :, d], atol=1e-14)


def test_uniform_scaling_law():
    b = bilinear_basis(2)
    det1, grad1, _ = element_geometry(square_coords(1.0), b)
    det2, grad2, _ = element_geometry(square_coords(2.0), b)
    assert np.allclose(det2, 4.0 * det1, atol=1e-14)
    for n in range(4):
        for d in range(2):
            assert np.allclose(grad2[n][d], 0.5 * np.asarray(grad1[n][d]), atol=1e-14)


def test_non_positive_determinant_reports_element():
    b = bilinear_basis(2)
    coords = square_coords(1.0, n_elems=2)
    coords[1, 2] = [-2.0, -2.0]  # fold the second element
    with pytest.raises(MeshError, match="\\[1\\]"):
        element_geometry(coords, b)


def test_interpolation_partition_of_unity():
    b = bilinear_basis(2)
    nodal = np.full((3, 4), 7.25)
    assert np.allclose(interpolate_to_qp(nodal, b), 7.25, atol=1e-14)


def test_interpolation_reproduces_linear_fields():
    b = bilinear_basis(2)
    coords = square_coords(2.0)
    nodal = coords[:, :, 0]  # u = x
    _, phys_grad, _ = element_geometry(coords, b)
    gx = gradient_component_at_qp(nodal, phys_grad, 0)
    gy = gradient_component_at_qp(nodal, phys_grad, 1)
    assert np.allclose(gx, 1.0, atol=1e-14)
    assert np.allclose(gy, 0.0, atol=1e-14)


def test_interpolation_is_linear_in_dual_seeds():
    b = bilinear_basis(2)
    nodal = sc.Dual(np.zeros((1, 4)), np.eye(4)[None])
    u = interpolate_to_qp(nodal, b)
    # du(q)/du_i = phi_i(q)
    assert np.allclose(u.dx[0], b.values.T, atol=1e-15)


def test_shape_dual_determinant_matches_finite_differences():
    b = bilinear_basis(2)
    base = square_coords(1.0, n_elems=2)
    base[1] += 0.3
    direction = np.zeros_like(base)
    direction[:, 2, 1] = 1.0  # move one corner upward per element
    h = 1e-6
    coords = sc.Dual(base, direction[..., None])
    det, _, _ = element_geometry(coords, b)
    det_p, _, _ = element_geometry(base + h * direction, b)
    det_m, _, _ = element_geometry(base - h * direction, b)
    fd = (det_p - det_m) / (2.0 * h)
    assert np.allclose(det.dx[..., 0], fd, rtol=1e-6, atol=1e-12)


def accum_field(n_elems=1):
    return Field("r", Layout((n_elems, 4)), make_storage("real", (n_elems, 4)))


def test_integrate_constant_scalar_on_square():
    b = bilinear_basis(2)
    h = 0.5
    det, _, det_w = element_geometry(square_coords(h), b)
    wbf = np.stack([b.values[n] * det_w[0] for n in range(4)])[None]  # (1,4,q)
    acc = accum_field()
    integrate(acc, np.ones((1, b.num_qp)), wbf)
    assert np.allclose(acc.data, h * h / 4.0, atol=1e-15)
    before = acc.data.copy()
    integrate(acc, np.zeros((1, b.num_qp)), wbf)
    assert np.array_equal(acc.data, before)


def test_integrate_accumulates():
    b = bilinear_basis(2)
    det, _, det_w = element_geometry(square_coords(1.0), b)
    wbf = np.stack([b.values[n] * det_w[0] for n in range(4)])[None]
    acc = accum_field()
    integrate(acc, np.ones((1, b.num_qp)), wbf)
    integrate(acc, np.ones((1, b.num_qp)), wbf)
    assert np.allclose(acc.data, 2.0 * 0.25, atol=1e-15)


def test_integrate_constant_vector_with_gradients_sums_to_zero():
    b = bilinear_basis(2)
    coords = REF_NODES[None].copy()
    det, phys_grad, det_w = element_geometry(coords, b)
    wgbf = np.empty((1, 4, b.num_qp, 2))
    for n in range(4):
        for d in range(2):
            wgbf[0, n, :, d] = phys_grad[n][d][0] * det_w[0]
    integrand = np.zeros((1, b.num_qp, 2))
    integrand[:, :, 0] = 1.0
    acc = accum_field()
    integrate(acc, integrand, wgbf)
    assert abs(acc.data.sum()) < 1e-14


def test_integrate_layout_mismatch():
    acc = accum_field()
    with pytest.raises(ValueError):
        integrate(acc, np.ones((1, 4, 2)), np.ones((1, 4, 4)))


def test_patch_test_linear_reproduction_on_distorted_mesh():
    # a distorted but valid quad still reproduces globally linear fields
    b = bilinear_basis(2)
    coords = np.array([[[0.0, 0.0], [1.1, 0.1], [1.3, 0.9], [-0.2, 1.0]]])
    a0, ax, ay = 0.7, -1.3, 2.1
    nodal = a0 + ax * coords[:, :, 0] + ay * coords[:, :, 1]
    det, phys_grad, _ = element_geometry(coords, b)
    u = interpolate_to_qp(nodal, b)
    x_qp = interpolate_to_qp(coords[:, :, 0], b)
    y_qp = interpolate_to_qp(coords[:, :, 1], b)
    assert np.allclose(u, a0 + ax * x_qp + ay * y_qp, atol=1e-13)
    assert np.allclose(gradient_component_at_qp(nodal, phys_grad, 0), ax, atol=1e-13)
    assert np.allclose(gradient_component_at_qp(nodal, phys_grad, 1), ay, atol=1e-13)
