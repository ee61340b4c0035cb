"""Exact Mobius conformal maps of R^n and the Kelvin-transform checks.

Mobius maps (compositions of translations, rotations, dilations, and the
unit-sphere inversion x -> x/|x|^2) are the full conformal group of
(subsets of) flat space in dimension >= 3, so they provide exact test
cases: DF^T DF = c(x) I with a closed-form positive factor c, and the
Kelvin transform u -> c^{(n-2)/4} (u o F) carries flat-harmonic functions
to flat-harmonic functions.  Quotients of solutions therefore pull back
to quotients of solutions, which is the mechanism that transports
conformal harmonic coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, JetDomainError
from .jets import Jet, jet_pow
from .metrics import Box, RIEMANNIAN, MetricSpec, radius_squared
from . import curvature


@dataclass(frozen=True)
class Primitive:
    kind: str              # translation | rotation | dilation | inversion
    vector: tuple = None   # translation offset
    matrix: tuple = None   # rotation matrix rows
    factor: float = None   # dilation factor

    def __post_init__(self):
        if self.kind == "translation":
            if self.vector is None:
                raise ConfigError("translation needs a vector")
        elif self.kind == "rotation":
            q = np.asarray(self.matrix, dtype=float)
            if q.ndim != 2 or q.shape[0] != q.shape[1] or \
                    not np.allclose(q.T @ q, np.eye(q.shape[0]), atol=1e-12):
                raise ConfigError("rotation matrix must be orthogonal")
        elif self.kind == "dilation":
            if self.factor is None or self.factor <= 0.0:
                raise ConfigError("dilation needs a positive factor")
        elif self.kind != "inversion":
            raise ConfigError(f"unknown Mobius primitive {self.kind!r}")


def translation(v) -> Primitive:
    return Primitive("translation", vector=tuple(float(x) for x in v))


def rotation(q) -> Primitive:
    q = np.asarray(q, dtype=float)
    return Primitive("rotation", matrix=tuple(tuple(row) for row in q))


def dilation(lam: float) -> Primitive:
    return Primitive("dilation", factor=float(lam))


def inversion() -> Primitive:
    return Primitive("inversion")


@dataclass
class MobiusMap:
    """Ordered composition of Mobius primitives (first entry acts first)."""

    primitives: list
    dim: int

    def __call__(self, x):
        return mobius_eval(self, x)[0]


def mobius_eval(F: MobiusMap, x):
    """Exact image, differential and conformal factor of F at x.

    Returns (F(x), DF(x), c(x)) with DF^T DF = c(x) I.  Evaluating an
    inversion at its center raises JetDomainError.
    """
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    n = F.dim
    y = x.copy()
    DF = np.broadcast_to(np.eye(n), batch + (n, n)).copy()
    c = np.ones(batch)
    for prim in F.primitives:
        if prim.kind == "translation":
            y = y + np.asarray(prim.vector)
        elif prim.kind == "rotation":
            q = np.asarray(prim.matrix)
            y = y @ q.T
            DF = np.einsum("ab,...bc->...ac", q, DF)
        elif prim.kind == "dilation":
            lam = prim.factor
            y = lam * y
            DF = lam * DF
            c = lam ** 2 * c
        else:  # inversion
            r2 = np.sum(y * y, axis=-1)
            if np.any(r2 == 0.0):
                raise JetDomainError("Mobius inversion evaluated at its center")
            J = (np.eye(n) - 2.0 * np.einsum("...a,...b->...ab", y, y)
                 / r2[..., None, None]) / r2[..., None, None]
            DF = np.einsum("...ab,...bc->...ac", J, DF)
            c = c / r2 ** 2
            y = y / r2[..., None]
    return y, DF, c


def mobius_image_jets(F: MobiusMap, x_jets):
    """F's image coordinates and conformal factor as jets of the source
    coordinates (exact arithmetic on the closed forms)."""
    y = list(x_jets)
    order = y[0].order
    center = y[0].center
    c = Jet.constant(np.ones(y[0].batch_shape), center, order)
    n = F.dim
    for prim in F.primitives:
        if prim.kind == "translation":
            y = [y[a] + prim.vector[a] for a in range(n)]
        elif prim.kind == "rotation":
            q = np.asarray(prim.matrix)
            y = [sum_j([q[a, b] * y[b] for b in range(n)]) for a in range(n)]
        elif prim.kind == "dilation":
            y = [prim.factor * y[a] for a in range(n)]
            c = prim.factor ** 2 * c
        else:
            r2 = radius_squared(y)
            if np.any(r2.value == 0.0):
                raise JetDomainError("Mobius inversion evaluated at its center")
            y = [y[a] / r2 for a in range(n)]
            c = c / (r2 * r2)
    return y, c


def sum_j(terms):
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def kelvin_pullback_residual(F: MobiusMap, u_expr, points,
                             order: int = 3) -> np.ndarray:
    """L_delta(c^{(n-2)/4} u o F) at the given points, for flat-harmonic u.

    The Kelvin transform of a harmonic function is harmonic, so the
    returned values vanish to rounding away from singularities.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = F.dim
    flat = MetricSpec("flat", n, RIEMANNIAN,
                      lambda x: [[1.0 if a == b else 0.0 for b in range(n)]
                                 for a in range(n)], Box.cube(1e9, n))

    def transformed(x):
        y, c = mobius_image_jets(F, x)
        return jet_pow(c, (n - 2) / 4.0) * u_expr(y)

    return curvature.conformal_laplacian_apply(flat, transformed, points,
                                               order=order)


def pullback_chart_check(F: MobiusMap, numerators, denominator, points,
                         order: int = 3) -> dict:
    """Check that F pulls a quotient chart Z^k = u_k / v back to a quotient
    of flat-harmonic functions.

    Verifies that both c^{(n-2)/4} (u_k o F) and c^{(n-2)/4} (v o F) are
    annihilated by the flat conformal Laplacian (jet-exact residuals), and
    that the denominator stays positive at the evaluated points.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    den_res = kelvin_pullback_residual(F, denominator, points, order)
    num_res = np.stack([kelvin_pullback_residual(F, u, points, order)
                        for u in numerators], axis=-1)
    x = Jet.variables(points, 0)
    y, _ = mobius_image_jets(F, x)
    v = denominator(y)
    vval = v.value if isinstance(v, Jet) else np.broadcast_to(v, points.shape[:1])
    if np.any(vval <= 0.0):
        raise JetDomainError("quotient denominator not positive on the target")
    return {
        "numerator_residuals": num_res,
        "denominator_residual": den_res,
        "max_residual": float(max(np.max(np.abs(num_res)),
                                  np.max(np.abs(den_res)))),
    }


def composition_factor_check(F: MobiusMap, G: MobiusMap, points) -> float:
    """max |c_{F o G}(x) - c_F(G(x)) c_G(x)| over the points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    FG = MobiusMap(G.primitives + F.primitives, F.dim)
    _, _, c_fg = mobius_eval(FG, points)
    yg, _, c_g = mobius_eval(G, points)
    _, _, c_f = mobius_eval(F, yg)
    return float(np.max(np.abs(c_fg - c_f * c_g)))


def conformality_defect(F: MobiusMap, points) -> float:
    """max ||DF^T DF - c I||_inf / c over the points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _, DF, c = mobius_eval(F, points)
    gram = np.einsum("...ka,...kb->...ab", DF, DF)
    defect = gram - c[..., None, None] * np.eye(F.dim)
    return float(np.max(np.abs(defect) / c[..., None, None]))
