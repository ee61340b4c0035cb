"""Analytic metric fields evaluable to jets, and the metric zoo.

A :class:`MetricSpec` wraps a component function ``components(x)`` that
receives the list of coordinate jets ``x = [x^0, ..., x^{n-1}]`` and
returns the symmetric matrix ``g_ab`` as a nested list whose entries are
jets (or plain numbers, which are promoted to constant jets).  Scalar
fields used throughout the package (conformal factors, test functions)
use the same calling convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetricError, DimensionError, JetDomainError
from .jets import Jet, jet_cos, jet_exp, jet_sin

RIEMANNIAN = "riemannian"
LORENTZIAN = "lorentzian"

COND_LIMIT = 1e6


@dataclass(frozen=True)
class Box:
    """Axis-aligned validity box."""

    lo: tuple
    hi: tuple

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        return bool(np.all(x >= lo) and np.all(x <= hi))

    @classmethod
    def cube(cls, half_width: float, dim: int) -> "Box":
        return cls((-half_width,) * dim, (half_width,) * dim)


@dataclass
class MetricSpec:
    """An analytic metric field with dimension, signature and domain."""

    name: str
    dim: int
    signature: str
    components: callable  # components(x_jets) -> n x n nested list
    domain: Box = field(default=None)

    def __post_init__(self):
        if self.signature not in (RIEMANNIAN, LORENTZIAN):
            raise DimensionError(f"unknown signature {self.signature!r}")
        if self.domain is None:
            self.domain = Box.cube(1.0, self.dim)

    def component_jets(self, points, order: int):
        """Evaluate g_ab as jets at a batch of points.

        Returns an n x n nested list of jets; symmetry g_ab = g_ba is
        enforced by mirroring the upper triangle.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[-1] != self.dim:
            raise DimensionError(
                f"points of dimension {points.shape[-1]} passed to metric "
                f"{self.name!r} of dimension {self.dim}")
        x = Jet.variables(points, order)
        raw = self.components(x)
        n = self.dim
        out = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(a, n):
                entry = raw[a][b]
                if not isinstance(entry, Jet):
                    entry = Jet.constant(entry, points, order)
                out[a][b] = out[b][a] = entry
        return out, x

    def values(self, points) -> np.ndarray:
        comps, _ = self.component_jets(points, order=0)
        n = self.dim
        batch = comps[0][0].batch_shape
        g = np.empty(batch + (n, n))
        for a in range(n):
            for b in range(n):
                g[..., a, b] = comps[a][b].value
        return g

    def validate_values(self, g: np.ndarray):
        """Signature and conditioning guard at evaluated points."""
        w = np.linalg.eigvalsh(g)
        if self.signature == RIEMANNIAN:
            if np.any(w[..., 0] <= 0.0):
                raise DegenerateMetricError(
                    f"metric {self.name!r} is not positive definite at a "
                    "queried point")
            if np.any(w[..., -1] / w[..., 0] > COND_LIMIT):
                raise DegenerateMetricError(
                    f"metric {self.name!r} exceeds condition limit {COND_LIMIT:g}")
        else:
            neg = np.sum(w < 0.0, axis=-1)
            if np.any(neg != 1) or np.any(w[..., -1] <= 0.0):
                raise DegenerateMetricError(
                    f"metric {self.name!r} does not have Lorentzian signature "
                    "at a queried point")


# -- expression helpers ----------------------------------------------------

def scale_matrix(c, n):
    """c * identity as a nested component list."""
    return [[c if a == b else 0.0 for b in range(n)] for a in range(n)]


def radius_squared(x):
    r2 = x[0] * x[0]
    for xi in x[1:]:
        r2 = r2 + xi * xi
    return r2


# -- zoo -------------------------------------------------------------------

CONFORMAL_FACTORS = {
    # name -> (expression builder, safe cube half-width)
    "quartic-ramp": (lambda x: (1.0 + 0.3 * x[0]) ** 4, 1.5),
    "exp-linear": (lambda x: jet_exp(2.0 * x[0]), 2.0),
    "gauss-bump": (lambda x: 1.0 + 0.2 * jet_exp(-radius_squared(x)), 3.0),
}


def flat(dim: int = 3) -> MetricSpec:
    return MetricSpec("flat", dim, RIEMANNIAN,
                      lambda x: scale_matrix(1.0, dim),
                      Box.cube(4.0, dim))


def conformally_flat(dim: int = 3, factor: str = "quartic-ramp") -> MetricSpec:
    try:
        expr, half = CONFORMAL_FACTORS[factor]
    except KeyError:
        raise DegenerateMetricError(
            f"unknown conformal factor {factor!r}; choose from "
            f"{sorted(CONFORMAL_FACTORS)}") from None
    return MetricSpec(f"conformally-flat({factor})", dim, RIEMANNIAN,
                      lambda x: scale_matrix(expr(x), dim),
                      Box.cube(half, dim))


def sphere_stereographic(dim: int = 3) -> MetricSpec:
    """Round unit sphere in a stereographic chart: 4 (1 + |x|^2)^-2 delta."""

    def comps(x):
        c = 4.0 * (1.0 + radius_squared(x)) ** -2
        return scale_matrix(c, dim)

    return MetricSpec("sphere-stereographic", dim, RIEMANNIAN, comps,
                      Box.cube(3.0, dim))


def _trig_bumps(x, rng, n_terms, amplitude, axes, offset=0):
    """Deterministic sum of smooth trig perturbation matrices."""
    n = len(x)
    terms = []
    for _ in range(n_terms):
        k = rng.integers(1, 3, size=len(axes))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = amplitude * rng.uniform(0.5, 1.0) / n_terms
        i, j = rng.integers(offset, n, size=2)
        arg = phase
        for ax, kk in zip(axes, k):
            arg = arg + float(kk) * x[ax]
        wave = jet_sin(arg) if rng.random() < 0.5 else jet_cos(arg)
        terms.append((int(i), int(j), amp * wave))
    return terms


def perturbed_flat(dim: int = 3, seed: int = 0, amplitude: float = 0.05) -> MetricSpec:
    """delta plus a seeded sum of small smooth trig perturbations.

    Amplitudes are capped well below the conditioning guard.
    """
    amplitude = min(amplitude, 0.1)

    def comps(x):
        rng = np.random.default_rng(seed)
        g = scale_matrix(1.0, dim)
        for i, j, term in _trig_bumps(x, rng, 3, amplitude, range(dim)):
            g[i][j] = g[i][j] + term
            if i != j:
                g[j][i] = g[j][i] + term
        return g

    return MetricSpec(f"perturbed-flat(seed={seed})", dim, RIEMANNIAN, comps,
                      Box.cube(2.0, dim))


def minkowski(dim: int = 3) -> MetricSpec:
    def comps(x):
        g = scale_matrix(1.0, dim)
        g[0][0] = -1.0
        return g

    return MetricSpec("minkowski", dim, LORENTZIAN, comps, Box.cube(4.0, dim))


def perturbed_minkowski(dim: int = 3, seed: int = 0,
                        amplitude: float = 0.05) -> MetricSpec:
    """Minkowski with small trig perturbations in the spatial block.

    Time-space components stay zero, which the slab solver requires.
    """
    amplitude = min(amplitude, 0.1)

    def comps(x):
        rng = np.random.default_rng(seed)
        g = scale_matrix(1.0, dim)
        g[0][0] = -1.0
        for i, j, term in _trig_bumps(x, rng, 3, amplitude, range(dim), offset=1):
            g[i][j] = g[i][j] + term
            if i != j:
                g[j][i] = g[j][i] + term
        return g

    return MetricSpec(f"perturbed-minkowski(seed={seed})", dim, LORENTZIAN,
                      comps, Box.cube(2.0, dim))


ZOO = {
    "flat": flat,
    "conformally-flat": conformally_flat,
    "sphere-stereographic": sphere_stereographic,
    "perturbed-flat": perturbed_flat,
    "minkowski": minkowski,
    "perturbed-minkowski": perturbed_minkowski,
}


def get_metric(name: str, **params) -> MetricSpec:
    try:
        builder = ZOO[name]
    except KeyError:
        raise DegenerateMetricError(
            f"unknown zoo metric {name!r}; available: {sorted(ZOO)}") from None
    return builder(**params)


# -- random inputs for test suites ----------------------------------------

def random_metric(dim: int, rng, amplitude: float = 0.08) -> MetricSpec:
    """Small smooth random perturbation of delta, inside the condition guard."""
    seed = int(rng.integers(0, 2 ** 31))
    return perturbed_flat(dim, seed=seed, amplitude=amplitude)


def random_positive_scalar(dim: int, rng):
    """Random smooth strictly positive scalar expression."""
    a = float(rng.uniform(0.05, 0.25))
    k = rng.uniform(0.5, 1.5, size=dim)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))

    def expr(x):
        arg = phase
        for ax in range(len(x)):
            arg = arg + float(k[ax]) * x[ax]
        return 1.0 + a * jet_sin(arg)

    return expr


def random_scalar(dim: int, rng):
    a = float(rng.uniform(0.3, 1.0))
    k = rng.uniform(0.5, 1.5, size=dim)
    phase = float(rng.uniform(0.0, 2.0 * np.pi))

    def expr(x):
        arg = phase
        for ax in range(len(x)):
            arg = arg + float(k[ax]) * x[ax]
        return a * jet_cos(arg) + 0.5 * x[0] * x[min(1, len(x) - 1)]

    return expr


def check_positive(c_jet: Jet, what: str = "conformal factor"):
    if np.any(c_jet.value <= 0.0):
        raise JetDomainError(f"{what} is not positive at an evaluated point")
