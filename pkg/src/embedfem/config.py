"""Run configuration: sectioned key=value text files plus CLI overrides.

The dataclass defaults below are the single source of truth: the parser reads
them, and the CLI help is generated from them, so documentation and code can
not drift apart. Overrides are ``section.key=value`` tokens.
"""

from __future__ import annotations

import configparser
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .analysis import NewtonConfig
from .mesh import GeometryParams, Resolution, build_slider_mesh
from .model import ThermoElectricModel
from .physics import MaterialTable, RegionMaterial
from . import scalars as sc


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    """Analysis mode and output destination."""

    mode: str = "solve"            # solve | continuation | optimize | uq | verify
    output_dir: str = "out"


@dataclass
class GeometrySection:
    """Strip dimensions and mesh resolution (defaults: the 16x16 demo)."""

    conductor_length: float = 2.0
    pad_length: float = 0.25
    slider_length: float = 1.0
    height: float = 1.0
    nx_conductor: int = 8
    nx_pad: int = 2
    nx_slider: int = 6
    ny: int = 16
    quad_order: int = 2


@dataclass
class MaterialsSection:
    """Region constants; the pad conductivity doubles as a model parameter."""

    sigma0_conductor: float = 100.0
    sigma0_pad: float = 35.0
    sigma0_slider: float = 100.0
    kappa: float = 1.0
    beta: float = 0.2
    T0: float = 0.0
    v0_x: float = -10.0
    v0_y: float = 0.0
    joule: bool = True


@dataclass
class SolverSection:
    """Newton and linear-solver settings plus workset execution knobs."""

    abs_tol: float = 1e-11
    rel_tol: float = 1e-12
    max_iters: int = 30
    dense_dof_limit: int = 2000
    gmres_tol: float = 1e-10
    gmres_restart: int = 80
    gmres_max_iters: int = 400
    workset_size: int = 0
    threads: int = 1


@dataclass
class ContinuationSection:
    """Uniform parameter sweep with Newton correction at each step."""

    parameter: str = "deflection"
    start: float = -0.3
    stop: float = 0.3
    steps: int = 21


@dataclass
class OptimizeSection:
    """Projected-BFGS bound-constrained shape/parameter optimization."""

    parameters: str = "deflection"
    start: str = "0.15"
    lower: float = -0.3
    upper: float = 0.3
    tol: float = 1e-6
    max_iters: int = 40


@dataclass
class UqSection:
    """Intrusive spectral solve with its non-intrusive verification oracle."""

    parameter: str = "PadSigma0"
    expansion: str = "35.0, 15.0"
    degree: int = 3
    nisp_order: int = 6


_SECTION_CLASSES = {
    "run": RunSection,
    "geometry": GeometrySection,
    "materials": MaterialsSection,
    "solver": SolverSection,
    "continuation": ContinuationSection,
    "optimize": OptimizeSection,
    "uq": UqSection,
}

#: free-form sections: Dirichlet values keyed "unknown.node_set" and model
#: parameter values keyed by registered name
_DEFAULT_BOUNDARY = {
    "psi.left_conductor_end": 0.0,
    "psi.symmetry_plane": 0.5,
    "temp.left_conductor_end": 0.0,
}
_DEFAULT_PARAMETERS = {"Alpha": 0.0, "Beta": 0.0, "PadSigma0": 35.0}

_MODES = ("solve", "continuation", "optimize", "uq", "verify")
_MODE_SECTIONS = {"continuation": "continuation", "optimize": "optimize",
                  "uq": "uq"}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    materials: MaterialsSection = field(default_factory=MaterialsSection)
    solver: SolverSection = field(default_factory=SolverSection)
    continuation: ContinuationSection = None
    optimize: OptimizeSection = None
    uq: UqSection = None
    boundary: dict = field(default_factory=lambda: dict(_DEFAULT_BOUNDARY))
    parameters: dict = field(default_factory=lambda: dict(_DEFAULT_PARAMETERS))


def _coerce(raw, to_type, where):
    try:
        if to_type is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return to_type(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {where} = {raw!r} as {to_type.__name__}")


def _fill_section(cls, items):
    obj = cls()
    known = {f.name: f.type for f in fields(cls)}
    types = {f.name: type(getattr(obj, f.name)) for f in fields(cls)}
    for key, raw in items:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{_section_name(cls)}]")
        setattr(obj, key, _coerce(raw, types[key], f"{_section_name(cls)}.{key}"))
    return obj


def _section_name(cls):
    for name, c in _SECTION_CLASSES.items():
        if c is cls:
            return name
    return cls.__name__


def parse_config(path, overrides=()):
    """Parse a config file and apply ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # parameter names are case sensitive
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    data = {name: list(parser.items(name)) for name in parser.sections()}
    for token in overrides:
        if "=" not in token or "." not in token.split("=", 1)[0]:
            raise ConfigError(f"override {token!r} is not of the form section.key=value")
        target, value = token.split("=", 1)
        section, key = target.split(".", 1)
        data.setdefault(section, []).append((key.strip(), value.strip()))

    known = set(_SECTION_CLASSES) | {"boundary", "parameters"}
    for name in data:
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")

    cfg = RunConfig()
    for name, cls in _SECTION_CLASSES.items():
        if name in data:
            setattr(cfg, name, _fill_section(cls, data[name]))
    if "boundary" in data:
        cfg.boundary = {k: _coerce(v, float, f"boundary.{k}")
                        for k, v in data["boundary"]}
    if "parameters" in data:
        for k, v in data["parameters"]:
            cfg.parameters[k] = _coerce(v, float, f"parameters.{k}")

    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg.run.mode not in _MODES:
        raise ConfigError(f"unknown mode {cfg.run.mode!r}; expected one of {_MODES}")
    needed = _MODE_SECTIONS.get(cfg.run.mode)
    if needed and getattr(cfg, needed) is None:
        raise ConfigError(f"mode {cfg.run.mode!r} requires section [{needed}]")
    for key in cfg.boundary:
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in ("psi", "temp"):
            raise ConfigError(f"boundary key {key!r} is not unknown.node_set")
    g = cfg.geometry
    if g.quad_order not in (1, 2, 3):
        raise ConfigError(f"geometry.quad_order must be 1, 2, or 3")
    m = cfg.materials
    speed = float(np.hypot(m.v0_x, m.v0_y))
    if speed > 0.0 and g.nx_conductor > 0:
        h = g.conductor_length / max(g.nx_conductor, 1)
        peclet = speed * h / (2.0 * m.kappa)
        if peclet > 2.0:
            warnings.warn(
                f"element Peclet number {peclet:.2f} exceeds 2; the unstabilized "
                "convective term may oscillate", stacklevel=2)


def config_documentation():
    """Every config key with its default, generated from the dataclasses."""
    lines = []
    for name, cls in _SECTION_CLASSES.items():
        obj = cls()
        lines.append(f"[{name}]  {cls.__doc__.strip()}")
        for f in fields(cls):
            lines.append(f"  {f.name} = {getattr(obj, f.name)}")
        lines.append("")
    lines.append("[boundary]  Dirichlet values keyed unknown.node_set")
    for k, v in _DEFAULT_BOUNDARY.items():
        lines.append(f"  {k} = {v}")
    lines.append("")
    lines.append("[parameters]  model parameter values keyed by registered name")
    for k, v in _DEFAULT_PARAMETERS.items():
        lines.append(f"  {k} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_mesh(cfg):
    g = cfg.geometry
    return build_slider_mesh(
        GeometryParams(g.conductor_length, g.pad_length, g.slider_length,
                       g.height),
        Resolution(g.nx_conductor, g.nx_pad, g.nx_slider, g.ny))


def build_materials(cfg):
    m = cfg.materials
    pad_sigma0 = cfg.parameters.get("PadSigma0", m.sigma0_pad)
    v0 = (m.v0_x, m.v0_y)
    return MaterialTable(
        conductor=RegionMaterial(m.sigma0_conductor, m.kappa, v0, m.beta, m.T0),
        pad=RegionMaterial(pad_sigma0, m.kappa, (0.0, 0.0), m.beta, m.T0),
        slider=RegionMaterial(m.sigma0_slider, m.kappa, (0.0, 0.0), m.beta, m.T0),
    )


def build_dirichlet(cfg, mesh):
    out = []
    for key, value in cfg.boundary.items():
        unknown, set_name = key.split(".", 1)
        if set_name not in mesh.node_sets:
            raise ConfigError(f"boundary set {set_name!r} does not exist in the mesh")
        if len(mesh.node_sets[set_name]) == 0:
            continue
        out.append((set_name, unknown, value))
    return out


def newton_config(cfg):
    s = cfg.solver
    return NewtonConfig(abs_tol=s.abs_tol, rel_tol=s.rel_tol,
                        max_iters=s.max_iters,
                        dense_dof_limit=s.dense_dof_limit,
                        gmres_tol=s.gmres_tol, gmres_restart=s.gmres_restart,
                        gmres_max_iters=s.gmres_max_iters)


def build_model(cfg, sg_basis=None):
    if sg_basis is None and cfg.uq is not None:
        sg_basis = sc.build_basis_data(cfg.uq.degree)
    mesh = build_mesh(cfg)
    model = ThermoElectricModel(
        mesh, build_materials(cfg), quad_order=cfg.geometry.quad_order,
        workset_size=cfg.solver.workset_size, sg_basis=sg_basis,
        with_joule=cfg.materials.joule, dirichlet=build_dirichlet(cfg, mesh),
        threads=cfg.solver.threads)
    for name, value in cfg.parameters.items():
        try:
            model.library.set_value(name, value)
        except Exception:
            raise ConfigError(f"parameter {name!r} is not registered by the model")
    return model


def uncertain_expansion(cfg, basis):
    coeffs = [float(t) for t in cfg.uq.expansion.replace(",", " ").split()]
    out = np.zeros(basis.size)
    if len(coeffs) > basis.size:
        raise ConfigError("uncertain expansion longer than the basis")
    out[:len(coeffs)] = coeffs
    return {cfg.uq.parameter: out}
