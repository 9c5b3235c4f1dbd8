"""Solver and analysis drivers consuming the assembled quantities.

Newton with the embedded-derivative Jacobian, natural parameter continuation,
forward-sensitivity reduced gradients, projected-BFGS bound optimization, the
intrusive spectral Newton solve, and the non-intrusive spectral projection
oracle used to verify it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import scalars as sc
from .graph import SG_JACOBIAN, SG_RESIDUAL


class SolveFailure(RuntimeError):
    def __init__(self, message, history=None, best=None):
        super().__init__(message)
        self.history = history or []
        self.best = best


@dataclass
class NewtonConfig:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-12
    max_iters: int = 30
    dense_dof_limit: int = 2000    # dense LU below, ILU(0) + GMRES above
    gmres_tol: float = 1e-10
    gmres_restart: int = 80
    gmres_max_iters: int = 400

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class NewtonResult:
    x: np.ndarray
    history: list
    iterations: int
    converged: bool


def _linear_solve(jacobian, rhs, config):
    n = rhs.size
    if n <= config.dense_dof_limit:
        return sla.lu_solve(sla.lu_factor(jacobian.toarray()), rhs)
    ilu = spla.spilu(jacobian.tocsc(), drop_tol=0.0, fill_factor=1.0)
    precond = spla.LinearOperator((n, n), ilu.solve)
    sol, info = spla.gmres(jacobian, rhs, rtol=config.gmres_tol, atol=0.0,
                           restart=config.gmres_restart,
                           maxiter=config.gmres_max_iters, M=precond)
    if info != 0:
        raise SolveFailure(f"GMRES did not converge (info={info})")
    return sol


def newton_solve(model, config=None, x0=None):
    """Newton on f(x) = 0 with the embedded-derivative Jacobian.

    Steps are damped by a backtracking line search on ||f||, which guards the
    first iterations from the default (discontinuous) initial guess and from
    leaving the validity range of the constitutive laws; near the root the
    full step always passes, so terminal convergence stays quadratic.
    Converges when ||f|| <= abs_tol or ||f|| <= rel_tol * ||f(x0)||.
    """
    from .physics import NonPhysicalStateError

    config = config or NewtonConfig()
    if x0 is None:
        warm = getattr(model, "warm_start", None)
        x = warm() if warm is not None else model.initial_guess()
    else:
        x = np.asarray(x0, dtype=float).copy()
    history = []
    norm = float(np.linalg.norm(model.residual(x)))
    history.append(norm)
    norm0 = norm
    if norm <= config.abs_tol:
        return NewtonResult(x, history, 0, True)
    for it in range(1, config.max_iters + 1):
        f, jac = model.jacobian(x)
        step = _linear_solve(jac, f, config)
        alpha = 1.0
        for _ in range(40):
            candidate = x - alpha * step
            try:
                new_norm = float(np.linalg.norm(model.residual(candidate)))
            except NonPhysicalStateError:
                new_norm = np.inf
            if np.isfinite(new_norm) and new_norm <= (1.0 - 1e-4 * alpha) * norm:
                break
            alpha *= 0.5
        else:
            raise SolveFailure("Newton line search failed to find a decrease",
                               history, x)
        x, norm = candidate, new_norm
        history.append(norm)
        if norm <= config.abs_tol or norm <= config.rel_tol * norm0:
            return NewtonResult(x, history, it, True)
    raise SolveFailure(f"Newton did not converge in {config.max_iters} iterations",
                       history, x)


def convergence_order_estimate(history):
    """Order estimate log(e_k+1/e_k)/log(e_k/e_k-1) from the last useful triple.

    Entries at the machine-precision residual floor are dropped first; ratios
    across the floor say nothing about the iteration itself.
    """
    floor = max(1e-13, 1e-13 * max(history))
    h = [e for e in history if e > floor]
    if len(h) < 3:
        return float("nan")
    e0, e1, e2 = h[-3], h[-2], h[-1]
    return float(np.log(e2 / e1) / np.log(e1 / e0))


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------

@dataclass
class ContinuationStep:
    parameter: float
    objective: float
    iterations: int
    residual_norm: float


def continuation(model, set_parameter, values, config=None, objective=None,
                 max_bisections=4):
    """Natural continuation: previous solution predicts, Newton corrects.

    ``set_parameter`` applies one parameter value to the model (a library
    value or a shape morph); ``values`` is the uniform sweep. On a failed
    corrector the step is bisected up to ``max_bisections`` times; if the
    target value still fails, the partial table is returned inside the error.
    """
    config = config or NewtonConfig()
    objective = objective or (lambda m, x: m.objective(x).value)
    table = []
    x = None
    current = None
    for target in values:
        start = current
        queue = [target]
        ok = True
        while queue:
            p = queue[0]
            set_parameter(model, p)
            try:
                result = newton_solve(model, config, x0=x)
            except SolveFailure:
                if start is None or len(queue) > max_bisections:
                    ok = False
                    break
                queue.insert(0, 0.5 * (start + p))
                continue
            x = result.x
            current = p
            start = p
            queue.pop(0)
        if not ok:
            raise SolveFailure(
                f"continuation failed at parameter {target!r}",
                history=[s.__dict__ for s in table])
        table.append(ContinuationStep(float(target), float(objective(model, x)),
                                      result.iterations, result.history[-1]))
    return table, x


# ---------------------------------------------------------------------------
# reduced gradient and optimization
# ---------------------------------------------------------------------------

def reduced_gradient(jacobian, f_p, objective_gradient, config=None):
    """dg/dp = -(dg/dx)^T J^{-1} f_p via the forward-sensitivity solves.

    ``f_p`` holds one column per parameter, ``objective_gradient`` the dense
    dg/dx. The explicit dg/dp term is zero for the shape problem (parameters
    never appear in the objective directly).
    """
    config = config or NewtonConfig()
    f_p = np.atleast_2d(np.asarray(f_p, dtype=float))
    if f_p.shape[0] != jacobian.shape[0]:
        f_p = f_p.T
    sens = np.column_stack([_linear_solve(jacobian, f_p[:, k], config)
                            for k in range(f_p.shape[1])])
    return -(np.asarray(objective_gradient) @ sens)


@dataclass
class OptimizeResult:
    p: np.ndarray
    value: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _project(p, lower, upper):
    return np.minimum(np.maximum(p, lower), upper)


def optimize(func, p0, bounds, tol=1e-6, max_iters=50, armijo=1e-4,
             shrink=0.5, max_backtracks=25):
    """Projected-gradient BFGS with a backtracking Armijo line search.

    ``func(p) -> (g, dg/dp)``; ``bounds`` is (lower, upper) arrays. Stops when
    the projected gradient norm falls below ``tol`` or the step shrinks under
    1e-8. Steps are only accepted when they decrease the objective; on an
    inner failure the best point so far is returned with ``converged=False``.
    """
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    p = _project(np.asarray(p0, dtype=float).copy(), lower, upper)
    try:
        g, grad = func(p)
    except SolveFailure as err:
        raise SolveFailure(f"objective evaluation failed at start: {err}")
    history = [(p.copy(), g)]
    hess_inv = np.eye(p.size)
    for it in range(1, max_iters + 1):
        projected = p - _project(p - grad, lower, upper)
        if np.linalg.norm(projected, ord=np.inf) <= tol:
            return OptimizeResult(p, g, it - 1, True, history)
        direction = -hess_inv @ grad
        if np.dot(direction, grad) >= 0.0:
            direction = -grad
        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks):
            candidate = _project(p + alpha * direction, lower, upper)
            step = candidate - p
            if np.linalg.norm(step, ord=np.inf) < 1e-8:
                break
            try:
                g_new, grad_new = func(candidate)
            except SolveFailure:
                alpha *= shrink
                continue
            if g_new <= g + armijo * np.dot(grad, step):
                accepted = True
                break
            alpha *= shrink
        if not accepted:
            return OptimizeResult(p, g, it, np.linalg.norm(
                projected, ord=np.inf) <= tol, history)
        s = candidate - p
        y = grad_new - grad
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            eye = np.eye(p.size)
            hess_inv = (eye - rho * np.outer(s, y)) @ hess_inv @ \
                       (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
        p, g, grad = candidate, g_new, grad_new
        history.append((p.copy(), g))
    return OptimizeResult(p, g, max_iters, False, history)


# ---------------------------------------------------------------------------
# spectral (stochastic Galerkin) solve and its projection oracle
# ---------------------------------------------------------------------------

@dataclass
class SGSystem:
    """Block operator (J . dX)_k = sum_ij C_ijk / <P_k^2> J_i dx_j."""

    blocks: list
    basis: object

    @property
    def num_coeffs(self):
        return self.basis.size

    @property
    def num_dofs(self):
        return self.blocks[0].shape[0]

    def operator(self):
        n, p1 = self.num_dofs, self.num_coeffs
        scaled = self.basis.triple_scaled

        def matvec(flat):
            x = np.asarray(flat, dtype=float).reshape(p1, n)
            out = np.zeros((p1, n))
            for i, block in enumerate(self.blocks):
                bx = np.stack([block @ x[j] for j in range(p1)])
                out += scaled[i].T @ bx
            return out.ravel()

        return spla.LinearOperator((p1 * n, p1 * n), matvec)

    def mean_preconditioner(self):
        lu = spla.splu(self.blocks[0].tocsc())
        n, p1 = self.num_dofs, self.num_coeffs

        def apply(flat):
            x = flat.reshape(p1, n)
            return np.stack([lu.solve(x[k]) for k in range(p1)]).ravel()

        return spla.LinearOperator((p1 * n, p1 * n), apply)


@dataclass
class SGResult:
    coefficients: np.ndarray   # (num_coeffs, num_dofs)
    history: list
    iterations: int
    converged: bool


def sg_newton_solve(model, uncertain, config=None, x0=None,
                    hot_start=True):
    """Block Newton on the spectral residual with a mean-based preconditioner.

    The mean block starts from the deterministic solve (hot start), which is
    the natural initial expansion and makes the zero-uncertainty case reduce
    to the deterministic solution immediately.
    """
    config = config or NewtonConfig()
    basis = model.sg_basis
    if basis is None:
        raise ValueError("model was built without spectral basis tables")
    n = model.num_dofs
    x_block = np.zeros((basis.size, n))
    if x0 is not None:
        x_block[...] = x0
    elif hot_start:
        # solve the deterministic problem at the expansion means
        nominal = {name: model.library.value(name) for name in uncertain}
        try:
            for name, coeffs in uncertain.items():
                model.library.set_value(name, float(np.asarray(coeffs)[0]))
            x_block[0] = newton_solve(model, config).x
        finally:
            for name, value in nominal.items():
                model.library.set_value(name, value)
    else:
        x_block[0] = model.initial_guess()

    history = []
    f = model.sg_residual(x_block, uncertain)
    norm0 = float(np.linalg.norm(f))
    history.append(norm0)
    if norm0 <= config.abs_tol:
        return SGResult(x_block, history, 0, True)
    for it in range(1, config.max_iters + 1):
        f, blocks = model.sg_jacobian(x_block, uncertain)
        system = SGSystem(blocks, basis)
        update, info = spla.gmres(system.operator(), f.ravel(),
                                  rtol=config.gmres_tol, atol=0.0,
                                  restart=config.gmres_restart,
                                  maxiter=config.gmres_max_iters,
                                  M=system.mean_preconditioner())
        if info != 0:
            raise SolveFailure(f"spectral GMRES did not converge (info={info})",
                               history)
        x_block = x_block - update.reshape(basis.size, n)
        norm = float(np.linalg.norm(model.sg_residual(x_block, uncertain)))
        history.append(norm)
        if not np.isfinite(norm):
            raise SolveFailure("spectral Newton diverged", history)
        if norm <= config.abs_tol or norm <= config.rel_tol * norm0:
            return SGResult(x_block, history, it, True)
    raise SolveFailure(
        f"spectral Newton did not converge in {config.max_iters} iterations",
        history)


def shape_objective_gradient(model, params, config=None):
    """Objective and reduced gradient of the shape problem at one design.

    Morphs the base mesh, solves, and evaluates dg/dp = -(dg/dx)^T J^{-1} f_p
    with f_p from the shape-tangent assembly seeded by the finite-difference
    coordinate sensitivities. The explicit dg/dp term is identically zero
    (the parameters never appear in the objective).
    """
    from .morphing import mesh_sensitivity, morph

    config = config or NewtonConfig()
    params = np.atleast_1d(np.asarray(params, dtype=float))
    base = model.mesh.replace_coords(model.base_coords)
    model.set_coords(morph(base, params).coords)
    result = newton_solve(model, config)
    objective = model.objective(result.x)
    x_p = mesh_sensitivity(base, params)
    _, f_p = model.shape_tangent(result.x, x_p.reshape(len(base.coords),
                                                       2, params.size))
    _, jacobian = model.jacobian(result.x)
    grad = reduced_gradient(jacobian, f_p,
                            objective.dense_gradient(model.num_dofs), config)
    return objective.value, np.atleast_1d(grad), result


def nisp_project(sample, basis, quad_order):
    """Non-intrusive spectral projection of ``sample(xi) -> value(s)``.

    Solves/evaluates at the Gauss-Legendre nodes and projects onto the basis,
    c_k = sum_q (w_q / 2) out(xi_q) P_k(xi_q) / <P_k^2>.
    """
    nodes, weights = sc.gauss_legendre(quad_order)
    samples = np.stack([np.atleast_1d(np.asarray(sample(x), dtype=float))
                        for x in nodes])
    coeffs = sc.project_samples(samples, nodes, weights, basis)
    return coeffs[0] if coeffs.shape[0] == 1 else coeffs


def sg_functional_expansion(result, basis, functional, quad_order):
    """Project a functional of the spectral solution onto the basis.

    Evaluates the block solution at quadrature nodes (a plain polynomial
    evaluation), applies ``functional`` to each realized state, and projects.
    Using the same rule as the non-intrusive oracle makes the two expansions
    directly comparable.
    """
    nodes, weights = sc.gauss_legendre(quad_order)
    vals = sc.legendre_values(basis.degree, nodes)   # (size, nq)
    samples = []
    for q in range(len(nodes)):
        state = result.coefficients.T @ vals[:, q]
        samples.append(functional(state))
    return sc.project_samples(np.asarray(samples), nodes, weights, basis)
