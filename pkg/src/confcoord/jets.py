"""Truncated multivariate Taylor ("jet") arithmetic.

A jet stores the Taylor coefficients c_alpha of a scalar function at a
center point, for all multi-indices alpha with |alpha| <= order, so that
the partial derivative d^alpha at the center equals alpha! * c_alpha.
Arithmetic (+, -, *, /) and elementary maps (exp, log, pow, sqrt, sin,
cos) propagate coefficients exactly up to the truncation order, which
gives curvature tensors built on top of this module exact pointwise
derivatives of analytic metrics -- no finite-difference noise.

Coefficients are stored densely over graded multi-indices.  The leading
axes of the coefficient array are an arbitrary batch shape, so one Jet
can represent the expansion of the same expression at many points at
once; all operations are vectorized over the batch.

Differentiating a jet (``Jet.derivative``) shifts coefficients down one
order; the top-degree coefficients of the result are zeroed because the
information is not contained in the operand.  Consumers that chain
derivatives must budget one order per differentiation (the curvature
module does exactly that).
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import JetCompatibilityError, JetDomainError, JetOrderError

DEFAULT_ORDER = 5


@lru_cache(maxsize=None)
def jet_tables(dim: int, order: int):
    """Index tables for dense jet arithmetic in a given (dim, order)."""
    if dim < 1:
        raise JetCompatibilityError(f"jet dimension must be >= 1, got {dim}")
    if order < 0:
        raise JetCompatibilityError(f"jet order must be >= 0, got {order}")
    indices = [a for a in product(range(order + 1), repeat=dim) if sum(a) <= order]
    indices.sort(key=lambda a: (sum(a), a))
    pos = {a: i for i, a in enumerate(indices)}
    m = len(indices)

    # Multiplication pairs (i, j) grouped by the position of idx_i + idx_j.
    pairs = []
    for i, ai in enumerate(indices):
        for j, aj in enumerate(indices):
            s = tuple(x + y for x, y in zip(ai, aj))
            if sum(s) <= order:
                pairs.append((pos[s], i, j))
    pairs.sort()
    mul_p = np.array([p for p, _, _ in pairs], dtype=np.intp)
    mul_i = np.array([i for _, i, _ in pairs], dtype=np.intp)
    mul_j = np.array([j for _, _, j in pairs], dtype=np.intp)
    starts = np.searchsorted(mul_p, np.arange(m))

    # Derivative shift tables: position of idx + e_axis (or -1) and the
    # factor (idx[axis] + 1) relating Taylor coefficients.
    dsrc = np.full((dim, m), -1, dtype=np.intp)
    dfac = np.zeros((dim, m))
    for i, a in enumerate(indices):
        for axis in range(dim):
            up = tuple(x + (1 if k == axis else 0) for k, x in enumerate(a))
            if sum(up) <= order:
                dsrc[axis, i] = pos[up]
                dfac[axis, i] = a[axis] + 1

    idx_arr = np.array(indices, dtype=np.intp)
    factorials = np.array([math.prod(math.factorial(x) for x in a) for a in indices])
    return {
        "indices": indices,
        "index_array": idx_arr,
        "pos": pos,
        "size": m,
        "mul_i": mul_i,
        "mul_j": mul_j,
        "mul_starts": starts,
        "dsrc": dsrc,
        "dfac": dfac,
        "alpha_factorial": factorials,
    }


def jet_size(dim: int, order: int) -> int:
    return jet_tables(dim, order)["size"]


class Jet:
    """Dense truncated Taylor expansion of a scalar at a point.

    Parameters
    ----------
    center : (..., dim) array
        Expansion point(s).  Leading axes are the batch shape.
    coeffs : (..., M) array
        Taylor coefficients over graded multi-indices, same batch shape.
    """

    __slots__ = ("dim", "order", "center", "coeffs")

    def __init__(self, center, coeffs, dim: int, order: int):
        self.dim = int(dim)
        self.order = int(order)
        self.center = np.asarray(center, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)
        m = jet_size(self.dim, self.order)
        if self.center.shape[-1:] != (self.dim,):
            raise JetCompatibilityError(
                f"center shape {self.center.shape} does not end in dim {self.dim}")
        if self.coeffs.shape[-1:] != (m,):
            raise JetCompatibilityError(
                f"coefficient block of length {self.coeffs.shape[-1]} "
                f"does not match dim {self.dim}, order {self.order} (need {m})")

    # -- seeds ---------------------------------------------------------

    @classmethod
    def constant(cls, value, center, order: int = DEFAULT_ORDER) -> "Jet":
        """Jet of a constant: only the |alpha| = 0 coefficient is set."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        dim = center.shape[-1]
        m = jet_size(dim, order)
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise JetDomainError("constant jet seeded with non-finite value")
        batch = np.broadcast_shapes(value.shape, center.shape[:-1])
        coeffs = np.zeros(batch + (m,))
        coeffs[..., 0] = value
        return cls(np.broadcast_to(center, batch + (dim,)), coeffs, dim, order)

    @classmethod
    def variable(cls, axis: int, center, order: int = DEFAULT_ORDER) -> "Jet":
        """Jet of the coordinate function x^axis at the given center."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        dim = center.shape[-1]
        if not 0 <= axis < dim:
            raise JetCompatibilityError(
                f"variable axis {axis} out of range for dimension {dim}")
        if not np.all(np.isfinite(center)):
            raise JetDomainError("variable jet seeded at non-finite center")
        tab = jet_tables(dim, order)
        coeffs = np.zeros(center.shape[:-1] + (tab["size"],))
        coeffs[..., 0] = center[..., axis]
        e = tuple(1 if k == axis else 0 for k in range(dim))
        if order >= 1:
            coeffs[..., tab["pos"][e]] = 1.0
        return cls(center, coeffs, dim, order)

    @classmethod
    def variables(cls, center, order: int = DEFAULT_ORDER) -> list["Jet"]:
        """Coordinate jets for every axis (the usual evaluation seeds)."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return [cls.variable(i, center, order) for i in range(center.shape[-1])]

    # -- bookkeeping ----------------------------------------------------

    @property
    def value(self):
        return self.coeffs[..., 0]

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    def _tables(self):
        return jet_tables(self.dim, self.order)

    def _like(self, coeffs) -> "Jet":
        return Jet(self.center, coeffs, self.dim, self.order)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if (other.dim != self.dim or other.order != self.order
                    or other.center.shape != self.center.shape
                    or not np.array_equal(other.center, self.center)):
                raise JetCompatibilityError(
                    "jet operands must share center, dimension and order")
            return other
        if np.isscalar(other) or isinstance(other, np.ndarray):
            return Jet.constant(other, self.center, self.order)
        return NotImplemented

    def copy(self) -> "Jet":
        return Jet(self.center, self.coeffs.copy(), self.dim, self.order)

    def __repr__(self):
        return (f"Jet(dim={self.dim}, order={self.order}, "
                f"batch={self.batch_shape}, value={self.value!r})")

    # -- ring operations -------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._like(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self._like(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        if np.isscalar(other):
            return self._like(self.coeffs * other)
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        tab = self._tables()
        prod = self.coeffs[..., tab["mul_i"]] * other.coeffs[..., tab["mul_j"]]
        return self._like(np.add.reduceat(prod, tab["mul_starts"], axis=-1))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self._like(self.coeffs / other)
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other._reciprocal()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other * self._reciprocal()

    def __pow__(self, exponent):
        return jet_pow(self, exponent)

    def _reciprocal(self) -> "Jet":
        v = self.value
        if np.any(v == 0.0) or not np.all(np.isfinite(v)):
            raise JetDomainError("division by a jet with zero value")
        series = [(-1.0) ** m / v ** (m + 1) for m in range(self.order + 1)]
        return self._compose_series(series)

    # -- composition with univariate series -------------------------------

    def _nilpotent(self) -> "Jet":
        coeffs = self.coeffs.copy()
        coeffs[..., 0] = 0.0
        return self._like(coeffs)

    def _compose_series(self, series) -> "Jet":
        """Evaluate sum_m series[m] * (self - value)^m by Horner's rule.

        series[m] must equal f^(m)(value)/m! for the function being
        composed; entries may be scalars or batch-shaped arrays.
        """
        u = self._nilpotent()
        out = Jet.constant(np.broadcast_to(np.asarray(series[-1], dtype=float),
                                           self.batch_shape),
                           self.center, self.order)
        for m in range(self.order - 1, -1, -1):
            out = out * u
            out.coeffs[..., 0] += series[m]
        return out

    # -- derivatives ------------------------------------------------------

    def partial(self, alpha) -> np.ndarray:
        """Partial derivative d^alpha of the represented function at the
        center (alpha! times the stored coefficient)."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim or any(a < 0 for a in alpha):
            raise JetCompatibilityError(f"bad multi-index {alpha} for dim {self.dim}")
        if sum(alpha) > self.order:
            raise JetOrderError(
                f"multi-index {alpha} exceeds jet order {self.order}")
        tab = self._tables()
        i = tab["pos"][alpha]
        return self.coeffs[..., i] * tab["alpha_factorial"][i]

    def gradient(self) -> np.ndarray:
        """All first partials, shape (..., dim)."""
        if self.order < 1:
            raise JetOrderError("gradient requires order >= 1")
        tab = self._tables()
        cols = [tab["pos"][tuple(1 if k == a else 0 for k in range(self.dim))]
                for a in range(self.dim)]
        return self.coeffs[..., cols]

    def hessian(self) -> np.ndarray:
        """All second partials, shape (..., dim, dim)."""
        if self.order < 2:
            raise JetOrderError("hessian requires order >= 2")
        out = np.empty(self.batch_shape + (self.dim, self.dim))
        for a in range(self.dim):
            for b in range(a, self.dim):
                alpha = [0] * self.dim
                alpha[a] += 1
                alpha[b] += 1
                out[..., a, b] = out[..., b, a] = self.partial(alpha)
        return out

    def derivative(self, axis: int) -> "Jet":
        """Jet of d/dx^axis of the represented function.

        The result's top-degree coefficients are zeroed (the operand does
        not determine them); each application therefore consumes one
        trustworthy order.
        """
        if not 0 <= axis < self.dim:
            raise JetCompatibilityError(f"derivative axis {axis} out of range")
        tab = self._tables()
        src = tab["dsrc"][axis]
        fac = tab["dfac"][axis]
        valid = src >= 0
        coeffs = np.zeros_like(self.coeffs)
        coeffs[..., valid] = self.coeffs[..., src[valid]] * fac[valid]
        return self._like(coeffs)

    def truncated(self, order: int) -> "Jet":
        """Copy of this jet truncated to a lower order."""
        if order > self.order:
            raise JetOrderError("cannot truncate to a higher order")
        if order == self.order:
            return self.copy()
        tab_lo = jet_tables(self.dim, order)
        tab_hi = self._tables()
        cols = [tab_hi["pos"][a] for a in tab_lo["indices"]]
        return Jet(self.center, self.coeffs[..., cols], self.dim, order)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))


# -- elementary maps ------------------------------------------------------

def jet_exp(a: Jet) -> Jet:
    v = a.value
    ev = np.exp(v)
    series = [ev / math.factorial(m) for m in range(a.order + 1)]
    return a._compose_series(series)


def jet_log(a: Jet) -> Jet:
    v = a.value
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise JetDomainError("log of a jet with non-positive value")
    series = [np.log(v)]
    for m in range(1, a.order + 1):
        series.append((-1.0) ** (m + 1) / (m * v ** m))
    return a._compose_series(series)


def jet_sqrt(a: Jet) -> Jet:
    return jet_pow(a, 0.5)


def jet_pow(a: Jet, r) -> Jet:
    """a**r.  Integer exponents use repeated multiplication and work for
    any nonzero value; non-integer exponents require a positive value."""
    r = float(r)
    if r.is_integer():
        k = int(r)
        if k == 0:
            return Jet.constant(np.ones(a.batch_shape), a.center, a.order)
        base = a if k > 0 else a._reciprocal()
        out = base
        for _ in range(abs(k) - 1):
            out = out * base
        return out
    v = a.value
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise JetDomainError("non-integer power of a jet with non-positive value")
    series = []
    coef = np.ones_like(v)
    for m in range(a.order + 1):
        series.append(coef * v ** (r - m))
        coef = coef * (r - m) / (m + 1)
    return a._compose_series(series)


def jet_sin(a: Jet) -> Jet:
    v = a.value
    cycle = [np.sin(v), np.cos(v), -np.sin(v), -np.cos(v)]
    series = [cycle[m % 4] / math.factorial(m) for m in range(a.order + 1)]
    return a._compose_series(series)


def jet_cos(a: Jet) -> Jet:
    v = a.value
    cycle = [np.cos(v), -np.sin(v), -np.cos(v), np.sin(v)]
    series = [cycle[m % 4] / math.factorial(m) for m in range(a.order + 1)]
    return a._compose_series(series)


JET_FUNCTIONS = {
    "exp": jet_exp,
    "log": jet_log,
    "sqrt": jet_sqrt,
    "sin": jet_sin,
    "cos": jet_cos,
}
