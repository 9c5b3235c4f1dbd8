"""Thermo-electric demonstration physics and the string-keyed parameter library.

The model couples a potential equation with a heat balance,

    -div(sigma grad psi) = 0
    -div(kappa grad T) - v . grad T = sigma |grad psi|^2

with conductivity sigma(T) = sigma0 / (1 + beta (T - T0)) per material region
and an optional volumetric source s = alpha + beta_s T^2. Every kernel below
is written once against generic scalar storage; the evaluation type decides
what flows through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scalars as sc
from .discretization import integrate
from .graph import (Evaluator, FieldSpec, JACOBIAN, RESIDUAL, SG_JACOBIAN,
                    SG_RESIDUAL, SHAPE_TANGENT, TANGENT)
from .mesh import REGIONS


class NonPhysicalStateError(ArithmeticError):
    """A constitutive law left its validity range (element ids attached)."""


class ParameterError(KeyError):
    pass


# ---------------------------------------------------------------------------
# parameter library (push semantics)
# ---------------------------------------------------------------------------

class ParameterLibrary:
    """Registry of named model parameters with push-style updates.

    Evaluators register parameters during construction; after the library is
    frozen, analysis code changes values through :meth:`set_value` and the
    library pushes the promoted scalar into every per-type evaluator instance.
    Under the sensitivity (tangent) type, active parameters carry their unit
    seed; under the spectral types, uncertain parameters carry their chaos
    expansion.
    """

    def __init__(self):
        self._values = {}
        self._accessors = {}   # name -> {ev_type tag -> accessor}
        self._order = []
        self._frozen = False

    def register(self, name, accessor, ev_type, default):
        if self._frozen:
            raise ParameterError(
                f"registration of {name!r} after the library was frozen")
        per_type = self._accessors.setdefault(name, {})
        if ev_type.tag in per_type:
            raise ParameterError(
                f"duplicate registration of {name!r} for {ev_type.tag}")
        per_type[ev_type.tag] = accessor
        if name not in self._values:
            self._values[name] = float(default)
            self._order.append(name)

    def freeze(self):
        self._frozen = True

    def names(self):
        return list(self._order)

    def value(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise ParameterError(f"unknown parameter {name!r}") from None

    def set_value(self, name, value):
        if name not in self._values:
            raise ParameterError(f"unknown parameter {name!r}")
        self._values[name] = float(value)

    def push(self, ev_type, *, tangent_params=(), uncertain=None, basis=None):
        """Push promoted parameter scalars into one evaluation type's kernels."""
        uncertain = uncertain or {}
        for name, per_type in self._accessors.items():
            accessor = per_type.get(ev_type.tag)
            if accessor is None:
                continue
            value = self._values[name]
            if ev_type is TANGENT and name in tangent_params:
                seed = np.zeros(len(tangent_params))
                seed[list(tangent_params).index(name)] = 1.0
                scalar = sc.Dual(value, seed)
            elif ev_type in (SG_RESIDUAL, SG_JACOBIAN) and name in uncertain:
                coeffs = np.asarray(uncertain[name], dtype=float)
                scalar = sc.PCE(coeffs, basis)
            else:
                scalar = value
            accessor.set_parameter(name, scalar)


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionMaterial:
    sigma0: float
    kappa: float
    velocity: tuple
    beta: float
    T0: float


@dataclass(frozen=True)
class MaterialTable:
    """Per-region constitutive constants for the strip demo."""

    conductor: RegionMaterial
    pad: RegionMaterial
    slider: RegionMaterial

    def __post_init__(self):
        for name in REGIONS:
            mat = self.region(REGIONS.index(name))
            if mat.sigma0 <= 0.0 or mat.kappa <= 0.0:
                raise ValueError(f"{name}: sigma0 and kappa must be positive")
        if any(v != 0.0 for v in self.slider.velocity):
            raise ValueError("the slider moves with the frame, its velocity is 0")

    def region(self, region_index):
        return (self.conductor, self.pad, self.slider)[region_index]


def default_materials(sigma0_conductor=100.0, sigma0_pad=35.0,
                      sigma0_slider=100.0, kappa=1.0, beta=0.2, T0=0.0,
                      v0=(-10.0, 0.0)):
    """Documented demo defaults: resistive pads inside conducting beams.

    The convective weak-form term is -(v . grad T) phi, so the beam velocity
    v0 = (-10, 0) transports heat toward the slider and makes the fixed-
    temperature set at the far conductor end the true inflow; the opposite
    sign has no bounded steady solution on this geometry (the exponential
    boundary-layer mode grows like e^(|v| L / kappa)).
    """
    return MaterialTable(
        conductor=RegionMaterial(sigma0_conductor, kappa, tuple(v0), beta, T0),
        pad=RegionMaterial(sigma0_pad, kappa, (0.0, 0.0), beta, T0),
        slider=RegionMaterial(sigma0_slider, kappa, (0.0, 0.0), beta, T0),
    )


# ---------------------------------------------------------------------------
# compute-phase evaluators (generic over the scalar type)
# ---------------------------------------------------------------------------

class ConductivityEvaluator(Evaluator):
    """sigma(T) = sigma0 / (1 + beta (T - T0)), region-resolved sigma0.

    The pad conductivity is the registered parameter "PadSigma0", so it can be
    a design variable or an uncertain spectral input; the other regions use
    their table constants.
    """

    name = "conductivity"
    depends = (FieldSpec("temp_qp", ("elem", "qp"), "solution"),)
    evaluates = (FieldSpec("sigma_qp", ("elem", "qp"), "solution"),)

    def __init__(self, materials, library, ev_type):
        self.materials = materials
        self.pad_sigma0 = materials.pad.sigma0
        library.register("PadSigma0", self, ev_type, materials.pad.sigma0)

    def set_parameter(self, name, scalar):
        if name != "PadSigma0":
            raise ParameterError(f"{type(self).__name__} does not own {name!r}")
        self.pad_sigma0 = scalar

    def evaluate(self, ctx):
        region = ctx.workset.region
        mat = self.materials.region(region)
        sigma0 = self.pad_sigma0 if REGIONS[region] == "pad" else mat.sigma0
        temp = ctx.field("temp_qp").data
        denom = 1.0 + mat.beta * (temp - mat.T0)
        denom_values = sc.strip_derivatives(denom)
        if np.any(denom_values <= 0.0):
            bad = np.unique(np.nonzero(np.any(
                np.atleast_2d(denom_values <= 0.0), axis=-1))[0])
            raise NonPhysicalStateError(
                "conductivity denominator non-positive in elements "
                f"{(bad + ctx.workset.start)[:8].tolist()}")
        ctx.field("sigma_qp").assign(sigma0 / denom)


class JouleHeatingEvaluator(Evaluator):
    """Joule source sigma |grad psi|^2 at quadrature points."""

    name = "joule_heating"
    depends = (FieldSpec("sigma_qp", ("elem", "qp"), "solution"),
               FieldSpec("grad_psi_qp", ("elem", "qp", "dim"), "solution"))
    evaluates = (FieldSpec("joule_qp", ("elem", "qp"), "solution"),)

    def evaluate(self, ctx):
        sigma = ctx.field("sigma_qp").data
        g = ctx.field("grad_psi_qp").data
        ctx.field("joule_qp").assign(
            sigma * (g[:, :, 0] * g[:, :, 0] + g[:, :, 1] * g[:, :, 1]))


class QuadraticSourceEvaluator(Evaluator):
    """Volumetric source s = alpha + beta_s u^2 with registered parameters."""

    name = "source_term"
    depends = (FieldSpec("temp_qp", ("elem", "qp"), "solution"),)
    evaluates = (FieldSpec("source_qp", ("elem", "qp"), "solution"),)

    def __init__(self, library, ev_type, alpha=0.0, beta=0.0):
        self.alpha = alpha
        self.beta = beta
        library.register("Alpha", self, ev_type, alpha)
        library.register("Beta", self, ev_type, beta)

    def set_parameter(self, name, scalar):
        if name == "Alpha":
            self.alpha = scalar
        elif name == "Beta":
            self.beta = scalar
        else:
            raise ParameterError(f"{type(self).__name__} does not own {name!r}")

    def evaluate(self, ctx):
        u = ctx.field("temp_qp").data
        ctx.field("source_qp").assign(self.alpha + self.beta * u * u)


class TabulatedSourceEvaluator(Evaluator):
    """Source given as a function of position (manufactured-solution runs)."""

    name = "source_term"
    depends = (FieldSpec("coords_qp", ("elem", "qp", "dim"), "mesh"),)
    evaluates = (FieldSpec("source_qp", ("elem", "qp"), "solution"),)

    def __init__(self, forcing):
        self.forcing = forcing

    def evaluate(self, ctx):
        xq = ctx.field("coords_qp").data
        ctx.field("source_qp").assign(self.forcing(xq[:, :, 0], xq[:, :, 1]))


class PotentialResidualEvaluator(Evaluator):
    """R_psi(e, i) += sum_q sigma grad psi . grad phi_i |j| w_q."""

    name = "potential_residual"
    depends = (FieldSpec("sigma_qp", ("elem", "qp"), "solution"),
               FieldSpec("grad_psi_qp", ("elem", "qp", "dim"), "solution"),
               FieldSpec("weighted_grad_bf", ("elem", "node", "qp", "dim"), "mesh"))
    evaluates = (FieldSpec("psi_residual", ("elem", "node"), "solution"),)

    def evaluate(self, ctx):
        sigma = ctx.field("sigma_qp").data
        g = ctx.field("grad_psi_qp").data
        wgbf = ctx.field("weighted_grad_bf").data
        out = ctx.field("psi_residual")
        for d in range(2):
            integrate(out, sigma * g[:, :, d], wgbf[:, :, :, d])


class HeatResidualEvaluator(Evaluator):
    """Diffusive, convective, Joule, and source contributions to R_T.

    R_T(e, i) += sum_q [kappa grad T . grad phi_i
                        + (-v . grad T - joule + source) phi_i] |j| w_q
    """

    name = "heat_residual"
    evaluates = (FieldSpec("temp_residual", ("elem", "node"), "solution"),)

    def __init__(self, materials, with_joule=True, with_source=True):
        self.materials = materials
        self.with_joule = with_joule
        self.with_source = with_source
        depends = [
            FieldSpec("grad_temp_qp", ("elem", "qp", "dim"), "solution"),
            FieldSpec("weighted_bf", ("elem", "node", "qp"), "mesh"),
            FieldSpec("weighted_grad_bf", ("elem", "node", "qp", "dim"), "mesh"),
        ]
        if with_joule:
            depends.append(FieldSpec("joule_qp", ("elem", "qp"), "solution"))
        if with_source:
            depends.append(FieldSpec("source_qp", ("elem", "qp"), "solution"))
        self.depends = tuple(depends)

    def evaluate(self, ctx):
        mat = self.materials.region(ctx.workset.region)
        gt = ctx.field("grad_temp_qp").data
        wbf = ctx.field("weighted_bf").data
        wgbf = ctx.field("weighted_grad_bf").data
        out = ctx.field("temp_residual")
        for d in range(2):
            integrate(out, mat.kappa * gt[:, :, d], wgbf[:, :, :, d])
        bulk = -(mat.velocity[0] * gt[:, :, 0] + mat.velocity[1] * gt[:, :, 1])
        if self.with_joule:
            bulk = bulk - ctx.field("joule_qp").data
        if self.with_source:
            bulk = bulk + ctx.field("source_qp").data
        integrate(out, bulk, wbf)


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectiveResult:
    """Max-temperature objective: value plus the hand-coded subgradient."""

    value: float
    argmax_dof: int

    def dense_gradient(self, num_dofs):
        g = np.zeros(num_dofs)
        g[self.argmax_dof] = 1.0
        return g


def objective_max_temperature(x, n_eq=2, temp_eq=1):
    """g = max over temperature dofs; gradient is the argmax basis vector.

    Ties break to the lowest dof id (numpy argmax returns the first hit).
    """
    temp = np.asarray(x)[temp_eq::n_eq]
    i = int(np.argmax(temp))
    return ObjectiveResult(float(temp[i]), i * n_eq + temp_eq)
