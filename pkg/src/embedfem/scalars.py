"""Scalar types that carry derivative or spectral payloads through arithmetic.

Plain floats and numpy arrays are the baseline scalars. ``Dual`` attaches a
fixed-length partial-derivative array propagated by the chain rule (forward
mode AD). ``PCE`` attaches Legendre polynomial-chaos coefficients combined by
Galerkin projection. A ``Dual`` whose components are ``PCE`` objects is the
nested scalar used for spectral Jacobians; the chain-rule code is written once
and works for either component algebra, so nesting costs no extra code.

Value storage may be a single number or a numpy array: one object then
represents a whole batch of scalars, with arithmetic broadcasting over the
leading (value) axes. The derivative axis of ``Dual.dx`` and the coefficient
axis of ``PCE.coeffs`` always stay trailing.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "BasisData",
    "BasisMismatchError",
    "DerivativeDimensionError",
    "Dual",
    "NestedDual",
    "PCE",
    "SpectralDivisionError",
    "add_into",
    "build_basis_data",
    "copy_into",
    "dual_constant",
    "exp",
    "fill_zero",
    "gauss_legendre",
    "legendre_values",
    "log",
    "pce_constant",
    "project_samples",
    "sqrt",
    "strip_derivatives",
]

_NUMBER = (int, float, np.integer, np.floating)


class DerivativeDimensionError(ValueError):
    """Two duals with different (nonzero) derivative lengths were mixed."""


class BasisMismatchError(ValueError):
    """Two spectral operands do not share the same basis tables."""


class SpectralDivisionError(ArithmeticError):
    """The spectral divisor induces a (numerically) singular system."""


# ---------------------------------------------------------------------------
# Legendre basis tables
# ---------------------------------------------------------------------------

def legendre_values(degree, xi):
    """Values of P_0..P_degree at ``xi`` via the three-term recurrence.

    Returns an array of shape ``(degree + 1,) + xi.shape``; the polynomials
    are unnormalized, P_k(1) = 1.
    """
    xi = np.asarray(xi, dtype=float)
    out = np.empty((degree + 1,) + xi.shape)
    out[0] = 1.0
    if degree >= 1:
        out[1] = xi
    for k in range(2, degree + 1):
        out[k] = ((2 * k - 1) * xi * out[k - 1] - (k - 1) * out[k - 2]) / k
    return out


def gauss_legendre(n):
    """n-point Gauss-Legendre rule on [-1, 1] (nodes, weights)."""
    return np.polynomial.legendre.leggauss(n)


class BasisData:
    """Shared Legendre basis tables for spectral (polynomial chaos) scalars.

    Convention: unnormalized Legendre polynomials, P_k(1) = 1, with the
    uniform probability measure (weight 1/2) on [-1, 1], so the squared norms
    are E[P_k^2] = 1/(2k+1) and E[P_0^2] = 1.

    ``triple[i, j, k]`` holds E[P_i P_j P_k]. The structurally known entries
    (parity and triangle zeros, entries with a zero index) are stored exactly
    so that deterministic inputs propagate through spectral arithmetic without
    roundoff; the remaining entries come from Gauss-Legendre quadrature that
    is exact for polynomials of degree 3 * degree.
    """

    __slots__ = ("degree", "norms", "triple", "triple_scaled",
                 "quad_nodes", "quad_weights")

    def __init__(self, degree, norms, triple, quad_nodes, quad_weights):
        self.degree = degree
        self.norms = norms
        self.triple = triple
        # triple_scaled[i, j, k] = E[P_i P_j P_k] / E[P_k^2], the projection
        # tensor used by Galerkin products.
        self.triple_scaled = triple / norms[None, None, :]
        self.quad_nodes = quad_nodes
        self.quad_weights = quad_weights

    @property
    def size(self):
        return self.degree + 1

    def __repr__(self):
        return f"BasisData(degree={self.degree})"


def build_basis_data(degree):
    """Build the shared tables for a Legendre basis of the given degree."""
    if degree < 0:
        raise ValueError("basis degree must be >= 0")
    norms = 1.0 / (2.0 * np.arange(degree + 1) + 1.0)
    n_quad = max(1, (3 * degree + 2) // 2)
    nodes, weights = gauss_legendre(n_quad)
    vals = legendre_values(degree, nodes)
    raw = np.einsum("iq,jq,kq,q->ijk", vals, vals, vals, 0.5 * weights)

    triple = np.zeros_like(raw)
    for i in range(degree + 1):
        for j in range(i, degree + 1):
            for k in range(j, degree + 1):
                if (i + j + k) % 2 == 1 or k > i + j:
                    v = 0.0
                elif i == 0:
                    v = norms[j] if j == k else 0.0
                else:
                    v = raw[i, j, k]
                for p, q, r in itertools.permutations((i, j, k)):
                    triple[p, q, r] = v
    return BasisData(degree, norms, triple, nodes, weights)


def project_samples(samples, nodes, weights, basis):
    """Project sampled values at quadrature nodes onto the Legendre basis.

    ``samples`` has shape ``(len(nodes),) + value_shape``. Returns the
    coefficient array c with c_k = sum_q (w_q / 2) f(x_q) P_k(x_q) / E[P_k^2],
    the discrete spectral projection under the uniform measure.
    """
    samples = np.asarray(samples, dtype=float)
    vals = legendre_values(basis.degree, np.asarray(nodes, dtype=float))
    coeffs = np.tensordot(vals * (0.5 * np.asarray(weights)), samples, axes=(1, 0))
    coeffs /= basis.norms.reshape((basis.size,) + (1,) * (samples.ndim - 1))
    return np.moveaxis(coeffs, 0, -1)


# ---------------------------------------------------------------------------
# index/axis helpers shared by Dual and PCE
#
# Indexing and reductions address the *value* axes only; the trailing
# derivative/coefficient axis is preserved automatically because numpy basic
# indexing leaves unindexed trailing axes alone. Ellipsis is rejected since it
# would reach the trailing axis.
# ---------------------------------------------------------------------------

def _check_index(idx, value_ndim):
    if not isinstance(idx, tuple):
        idx = (idx,)
    consuming = sum(1 for i in idx if i is not None)
    if any(i is Ellipsis for i in idx):
        raise IndexError("Ellipsis is not supported; index value axes explicitly")
    if consuming > value_ndim:
        raise IndexError(f"too many indices for value shape with {value_ndim} axes")
    return idx


def _norm_axes(axis, value_ndim):
    if axis is None:
        axis = tuple(range(value_ndim))
    elif isinstance(axis, int):
        axis = (axis,)
    return tuple(a % value_ndim for a in axis)


def _mean_of(x):
    if isinstance(x, Dual):
        return _mean_of(x.val)
    if isinstance(x, PCE):
        return x.mean
    return x


def strip_derivatives(x):
    """Explicitly cast away embedded data: dual value and/or spectral mean."""
    if isinstance(x, Dual):
        return strip_derivatives(x.val)
    if isinstance(x, PCE):
        return x.mean
    return x


def _require_nonzero(v):
    if isinstance(v, PCE):
        return  # the spectral divide reports singularity itself
    if np.any(np.asarray(v) == 0.0):
        raise ZeroDivisionError("division by zero value")


# ---------------------------------------------------------------------------
# Polynomial chaos scalars
# ---------------------------------------------------------------------------

class PCE:
    """Legendre chaos expansion: coefficient array plus shared basis tables.

    ``coeffs[..., k]`` multiplies P_k(xi); leading axes are value axes.
    Products are Galerkin-projected back onto the basis (degree truncation),
    quotients solve the dense spectral system induced by the divisor.
    """

    __slots__ = ("coeffs", "basis")
    __array_ufunc__ = None  # force reflected dunders in numpy mixed expressions

    def __init__(self, coeffs, basis):
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape[-1] != basis.size:
            raise BasisMismatchError(
                f"coefficient axis {self.coeffs.shape[-1]} does not match "
                f"basis size {basis.size}")
        self.basis = basis

    # -- structure ---------------------------------------------------------

    @property
    def mean(self):
        return self.coeffs[..., 0]

    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    def __getitem__(self, idx):
        return PCE(self.coeffs[_check_index(idx, self.coeffs.ndim - 1)], self.basis)

    def sum(self, axis=None):
        return PCE(self.coeffs.sum(axis=_norm_axes(axis, self.coeffs.ndim - 1)),
                   self.basis)

    def evaluate(self, xi):
        """Pointwise value sum_k c_k P_k(xi) via the three-term recurrence."""
        vals = legendre_values(self.basis.degree, xi)
        return np.tensordot(self.coeffs, vals, axes=(-1, 0))

    def _check(self, other):
        if other.basis is not self.basis:
            raise BasisMismatchError("operands use different basis tables")

    def _lift(self, other):
        """Coefficients of a deterministic operand, broadcast to match."""
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.shape, other.shape)
        c = np.zeros(shape + (self.basis.size,))
        c[..., 0] = other
        return c

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, PCE):
            self._check(other)
            return PCE(self.coeffs + other.coeffs, self.basis)
        return PCE(self.coeffs + self._lift(other), self.basis)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, PCE):
            self._check(other)
            return PCE(self.coeffs - other.coeffs, self.basis)
        return PCE(self.coeffs - self._lift(other), self.basis)

    def __rsub__(self, other):
        return PCE(self._lift(other) - self.coeffs, self.basis)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, PCE):
            self._check(other)
            c = np.einsum("...i,...j,ijk->...k", self.coeffs, other.coeffs,
                          self.basis.triple_scaled)
            return PCE(c, self.basis)
        other = np.asarray(other, dtype=float)
        return PCE(self.coeffs * other[..., None], self.basis)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, PCE):
            self._check(other)
            return PCE(_spectral_divide(self.coeffs, other.coeffs, self.basis),
                       self.basis)
        other = np.asarray(other, dtype=float)
        _require_nonzero(other)
        return PCE(self.coeffs / other[..., None], self.basis)

    def __rtruediv__(self, other):
        return PCE(_spectral_divide(self._lift(other), self.coeffs, self.basis),
                   self.basis)

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = pce_constant(np.ones(self.shape), self.basis)
            for _ in range(int(p)):
                out = out * self
            return out
        raise TypeError("only non-negative integer powers of spectral values")

    def __neg__(self):
        return PCE(-self.coeffs, self.basis)

    def __pos__(self):
        return self

    # -- comparisons act on the mean ----------------------------------------

    def __lt__(self, other):
        return self.mean < _mean_of(other)

    def __le__(self, other):
        return self.mean <= _mean_of(other)

    def __gt__(self, other):
        return self.mean > _mean_of(other)

    def __ge__(self, other):
        return self.mean >= _mean_of(other)

    def __eq__(self, other):
        return self.mean == _mean_of(other)

    def __ne__(self, other):
        return self.mean != _mean_of(other)

    def __repr__(self):
        return f"PCE(coeffs={self.coeffs!r})"


def _spectral_divide(num, den, basis):
    """Coefficients of num / den by solving the spectral system M x = num.

    M_kj = sum_i den_i E[P_i P_j P_k] / E[P_k^2] is the (truncated)
    multiply-by-den operator. A divisor with exactly zero higher coefficients
    makes M diagonal, so that case reduces to a plain componentwise division
    (this keeps deterministic data exact through the quotient).
    """
    if not np.any(den[..., 1:]):
        d0 = den[..., 0]
        if np.any(d0 == 0.0):
            raise ZeroDivisionError("division by zero value")
        return num / d0[..., None]
    m = np.einsum("...i,ijk->...kj", den, basis.triple_scaled)
    try:
        return np.linalg.solve(m, num[..., None])[..., 0]
    except np.linalg.LinAlgError as err:
        cond = float(np.max(np.linalg.cond(m)))
        raise SpectralDivisionError(
            f"singular spectral divisor (condition estimate {cond:.3e})") from err


def pce_constant(value, basis):
    """Deterministic value promoted to a chaos expansion (mean only)."""
    value = np.asarray(value, dtype=float)
    c = np.zeros(value.shape + (basis.size,))
    c[..., 0] = value
    return PCE(c, basis)


# ---------------------------------------------------------------------------
# Dual numbers (forward-mode AD), generic over the component algebra
# ---------------------------------------------------------------------------

def _dxpand(c):
    """Append a broadcast axis so a value can multiply a derivative array."""
    if isinstance(c, PCE):
        return PCE(c.coeffs[..., None, :], c.basis)
    if isinstance(c, np.ndarray):
        return c[..., None]
    return c


class Dual:
    """Value plus fixed-length partial-derivative array (forward-mode AD).

    ``dx[..., k]`` is the partial with respect to independent variable k; the
    derivative length is fixed at construction and never changes under
    arithmetic. Components may be arrays (batched scalars) or ``PCE`` objects
    (the nested dual-over-chaos scalar).
    """

    __slots__ = ("val", "dx")
    __array_ufunc__ = None

    def __init__(self, val, dx):
        self.val = val if isinstance(val, PCE) else np.asarray(val, dtype=float)
        self.dx = dx if isinstance(dx, PCE) else np.asarray(dx, dtype=float)

    # -- structure ---------------------------------------------------------

    @property
    def n(self):
        """Derivative length (number of independent variables)."""
        d = self.dx
        return d.coeffs.shape[-2] if isinstance(d, PCE) else d.shape[-1]

    @property
    def shape(self):
        v = self.val
        return v.shape if isinstance(v, PCE) else np.shape(v)

    def _value_ndim(self):
        v = self.val
        return len(v.shape) if isinstance(v, PCE) else np.ndim(v)

    def __getitem__(self, idx):
        idx = _check_index(idx, self._value_ndim())
        return Dual(self.val[idx], self.dx[idx])

    def sum(self, axis=None):
        ax = _norm_axes(axis, self._value_ndim())
        return Dual(self.val.sum(axis=ax), self.dx.sum(axis=ax))

    def _check(self, other):
        if self.n != other.n:
            raise DerivativeDimensionError(
                f"derivative lengths differ: {self.n} vs {other.n}")

    # -- arithmetic (chain rule) ---------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(self.val + other.val, self.dx + other.dx)
        return Dual(self.val + other, self.dx)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(self.val - other.val, self.dx - other.dx)
        return Dual(self.val - other, self.dx)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.dx)

    def __mul__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            return Dual(self.val * other.val,
                        self.dx * _dxpand(other.val) + _dxpand(self.val) * other.dx)
        return Dual(self.val * other, self.dx * _dxpand(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            self._check(other)
            _require_nonzero(other.val)
            val = self.val / other.val
            return Dual(val, (self.dx - _dxpand(val) * other.dx) / _dxpand(other.val))
        _require_nonzero(other)
        return Dual(self.val / other, self.dx / _dxpand(other))

    def __rtruediv__(self, other):
        _require_nonzero(self.val)
        val = other / self.val
        return Dual(val, -(_dxpand(val) * self.dx) / _dxpand(self.val))

    def __pow__(self, p):
        if not isinstance(p, _NUMBER):
            raise TypeError("exponent must be a plain number")
        if isinstance(self.val, PCE):
            if isinstance(p, (int, np.integer)) and p >= 0:
                out = self * 0.0 + 1.0
                for _ in range(int(p)):
                    out = out * self
                return out
            raise TypeError("only non-negative integer powers of nested duals")
        val = self.val ** p
        return Dual(val, self.dx * _dxpand(p * self.val ** (p - 1.0)))

    def __neg__(self):
        return Dual(-self.val, -self.dx)

    def __pos__(self):
        return self

    # -- comparisons act on the value/mean ------------------------------------

    def __lt__(self, other):
        return _mean_of(self) < _mean_of(other)

    def __le__(self, other):
        return _mean_of(self) <= _mean_of(other)

    def __gt__(self, other):
        return _mean_of(self) > _mean_of(other)

    def __ge__(self, other):
        return _mean_of(self) >= _mean_of(other)

    def __eq__(self, other):
        return _mean_of(self) == _mean_of(other)

    def __ne__(self, other):
        return _mean_of(self) != _mean_of(other)

    def __repr__(self):
        return f"Dual(val={self.val!r}, dx={self.dx!r})"


#: A dual whose value and partials are chaos expansions. The arithmetic is the
#: plain Dual chain rule executed on the PCE component algebra, so no separate
#: implementation exists (or is needed).
NestedDual = Dual


def dual_constant(value, n):
    """Value promoted to a dual with all ``n`` partials exactly zero."""
    value = np.asarray(value, dtype=float)
    return Dual(value, np.zeros(value.shape + (n,)))


# ---------------------------------------------------------------------------
# transcendental functions (real or dual-over-real arguments)
# ---------------------------------------------------------------------------

def exp(x):
    if isinstance(x, Dual):
        v = exp(x.val)
        return Dual(v, x.dx * _dxpand(v))
    if isinstance(x, PCE):
        raise TypeError("transcendental functions of spectral values are not supported")
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        if isinstance(x.val, PCE):
            raise TypeError("transcendental functions of spectral values are not supported")
        if np.any(x.val <= 0.0):
            raise ValueError("log requires a positive value")
        return Dual(np.log(x.val), x.dx / _dxpand(x.val))
    if isinstance(x, PCE):
        raise TypeError("transcendental functions of spectral values are not supported")
    if np.any(np.asarray(x) <= 0.0):
        raise ValueError("log requires a positive value")
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        if isinstance(x.val, PCE):
            raise TypeError("transcendental functions of spectral values are not supported")
        if np.any(x.val <= 0.0):
            raise ValueError("sqrt requires a positive value for differentiation")
        v = np.sqrt(x.val)
        return Dual(v, x.dx * _dxpand(0.5 / v))
    if isinstance(x, PCE):
        raise TypeError("transcendental functions of spectral values are not supported")
    if np.any(np.asarray(x) < 0.0):
        raise ValueError("sqrt requires a non-negative value")
    return np.sqrt(x)


# ---------------------------------------------------------------------------
# structure-aware storage operations (used by field buffers)
# ---------------------------------------------------------------------------

def fill_zero(dst):
    if isinstance(dst, Dual):
        fill_zero(dst.val)
        fill_zero(dst.dx)
    elif isinstance(dst, PCE):
        dst.coeffs[...] = 0.0
    else:
        dst[...] = 0.0


def copy_into(dst, src):
    """Copy ``src`` into preallocated storage ``dst`` of equal or richer kind.

    Plain data copied into dual/spectral storage is promoted (zero partials,
    mean-only coefficients). Copying embedded scalars into plain storage is
    refused; call :func:`strip_derivatives` to make the cast explicit.
    """
    if isinstance(dst, Dual):
        if isinstance(src, Dual):
            if dst.n != src.n:
                raise DerivativeDimensionError(
                    f"derivative lengths differ: {dst.n} vs {src.n}")
            copy_into(dst.val, src.val)
            copy_into(dst.dx, src.dx)
        else:
            copy_into(dst.val, src)
            fill_zero(dst.dx)
    elif isinstance(dst, PCE):
        if isinstance(src, Dual):
            raise TypeError("use strip_derivatives(...) to discard derivative data")
        if isinstance(src, PCE):
            dst._check(src)
            np.copyto(dst.coeffs, src.coeffs)
        else:
            dst.coeffs[...] = 0.0
            dst.coeffs[..., 0] = src
    else:
        if isinstance(src, (Dual, PCE)):
            raise TypeError(
                "assigning embedded scalars into plain storage requires "
                "strip_derivatives(...)")
        np.copyto(dst, np.asarray(src, dtype=float))


def add_into(dst, src):
    """Accumulate ``src`` into preallocated storage ``dst`` (see copy_into)."""
    if isinstance(dst, Dual):
        if isinstance(src, Dual):
            if dst.n != src.n:
                raise DerivativeDimensionError(
                    f"derivative lengths differ: {dst.n} vs {src.n}")
            add_into(dst.val, src.val)
            add_into(dst.dx, src.dx)
        else:
            add_into(dst.val, src)
    elif isinstance(dst, PCE):
        if isinstance(src, Dual):
            raise TypeError("use strip_derivatives(...) to discard derivative data")
        if isinstance(src, PCE):
            dst._check(src)
            dst.coeffs += src.coeffs
        else:
            dst.coeffs[..., 0] += src
    else:
        if isinstance(src, (Dual, PCE)):
            raise TypeError(
                "accumulating embedded scalars into plain storage requires "
                "strip_derivatives(...)")
        dst += np.asarray(src, dtype=float)
