"""Conformal wave coordinates on a Lorentzian slab.

Explicit second-order integration (leapfrog with a Taylor start) of the
conformal wave equation

    box_g u + (n-2)/(4(n-1)) R(g) u = 0,
    box_g u = -|g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b u),  |g| = -det g,

on a slab [0, T] x spatial box, for metrics whose time-space components
vanish (both Lorentzian zoo metrics).  Expanding the operator,

    d_t^2 u = [-g^{ij} d_i d_j u + Gamma^0 d_t u + Gamma^i d_i u + q u - s]
              / g^{00},

which the scheme discretizes with centered differences; the Gamma^0 d_t u
term is treated with a centered time difference, leaving the update
pointwise implicit only through a scalar factor.

A chart is built from n+1 Cauchy solves with data (0, 1), (x'_k, 0) and
(1, 0); the quotients Z^k = f^k/f restrict to (t, x') on the initial
surface with DZ = identity there.  Away from the initial surface the
gauge condition Gamma_a = 2 d_a log f (components taken in Z-coordinates)
is measured through the chain rule on the slab grid, inside the numerical
domain of dependence of the initial data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import curvature
from .errors import ChartFailure, ConfigError, DegenerateMetricError, StabilityError
from .fields import GridChart, derivative1
from .metrics import LORENTZIAN, MetricSpec

CFL_LIMIT = 0.5


@dataclass
class SlabChart:
    """Time slab over a spatial grid: n-1 spatial axes plus `steps` time
    levels of size dt, with dt/h <= 0.5 and dt bounded by the maximal
    characteristic speed of the metric on the slab."""

    spatial: GridChart
    steps: int
    dt: float

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError("slab needs at least two time steps")
        if self.dt <= 0:
            raise ConfigError("time step must be positive")
        if self.dt / self.spatial.spacing > CFL_LIMIT + 1e-12:
            raise ConfigError(
                f"CFL ratio dt/h = {self.dt / self.spatial.spacing:.3f} "
                f"exceeds {CFL_LIMIT}")

    @property
    def duration(self) -> float:
        return self.steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


def max_characteristic_speed(g: MetricSpec, slab_nodes: np.ndarray) -> float:
    """sqrt of the largest eigenvalue of g^{ij} / (-g^{00}) over the slab."""
    gv = g.values(slab_nodes)
    ginv = np.linalg.inv(gv)
    g00 = ginv[..., 0, 0]
    if np.any(g00 >= 0.0):
        raise DegenerateMetricError("time direction is not timelike on the slab")
    spatial = ginv[..., 1:, 1:] / (-g00)[..., None, None]
    w = np.linalg.eigvalsh(spatial)
    return float(np.sqrt(np.max(w)))


def make_slab(g: MetricSpec, half_width: float, resolution: int,
              duration: float, cfl: float = 0.4) -> SlabChart:
    """Slab with dt chosen against both the 0.5 grid-ratio bound and the
    metric's characteristic speed."""
    n = g.dim
    spatial = GridChart(tuple((-half_width, half_width) for _ in range(n - 1)),
                        (resolution,) * (n - 1))
    h = spatial.spacing
    t_sample = np.linspace(0.0, duration, 5)
    pts = spatial.nodes()
    nodes = np.concatenate([
        np.column_stack([np.full(len(pts), t), pts]) for t in t_sample])
    speed = max_characteristic_speed(g, nodes)
    dt = min(CFL_LIMIT * h, cfl * h / speed)
    steps = max(int(np.ceil(duration / dt)), 2)
    return SlabChart(spatial, steps, duration / steps)


@dataclass
class SpacetimeField:
    """Solution levels u[m] for m = 0..steps, plus the virtual level
    u[-1] produced by the Taylor start (used for centered time stencils
    on the initial surface)."""

    slab: SlabChart
    levels: np.ndarray          # (steps+1,) + spatial shape
    virtual_minus: np.ndarray   # spatial shape

    def time_derivative_initial(self) -> np.ndarray:
        return (self.levels[1] - self.virtual_minus) / (2.0 * self.slab.dt)


def _coefficients_at(g: MetricSpec, t: float, pts: np.ndarray, shape):
    """g^{ab}, Gamma^a and the conformal potential at one time level."""
    nodes = np.column_stack([np.full(len(pts), t), pts])
    geo = curvature._JetGeometry(g, nodes, 2)
    n = g.dim
    ginv = np.empty((len(pts), n, n))
    for a in range(n):
        for b in range(n):
            ginv[:, a, b] = geo.ginv[a][b].value
    gv = curvature.tensor_values(geo.g, (n, n))
    if np.max(np.abs(gv[:, 0, 1:])) > 1e-12:
        raise ConfigError(
            "slab solver requires vanishing time-space metric components")
    gup = np.stack([j.value for j in geo.gamma_up()], axis=-1)
    q = (n - 2) / (4.0 * (n - 1)) * geo.scalar.value
    return (ginv.reshape(shape + (n, n)), gup.reshape(shape + (n,)),
            q.reshape(shape))


def _centered1(u, axis, h):
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * h)


def _spatial_rhs(u, ginv, gup, q, h, nsp):
    """-g^{ij} d_i d_j u + Gamma^i d_i u + q u with second-order centered
    differences (one-cell reach, which keeps the numerical domain of
    dependence tight)."""
    out = q * u
    for i in range(nsp):
        d1 = _centered1(u, i, h)
        out += gup[..., i + 1] * d1
        d2 = (np.roll(u, -1, axis=i) - 2.0 * u + np.roll(u, 1, axis=i)) / h ** 2
        out -= ginv[..., i + 1, i + 1] * d2
        for j in range(i + 1, nsp):
            dij = _centered1(d1, j, h)
            out -= 2.0 * ginv[..., i + 1, j + 1] * dij
    return out


def slab_coefficients(g: MetricSpec, slab: SlabChart):
    """Per-level operator coefficients, shared across the Cauchy solves
    of one chart construction."""
    pts = slab.spatial.nodes()
    shape = slab.spatial.shape
    return [_coefficients_at(g, m * slab.dt, pts, shape)
            for m in range(slab.steps + 1)]


def solve_cauchy_wave(g: MetricSpec, u0, u1, slab: SlabChart,
                      source=None, boundary=None,
                      coeffs=None) -> SpacetimeField:
    """Integrate the conformal wave equation with Cauchy data (u0, u1).

    u0, u1 : arrays on the spatial grid (value and time derivative at t=0)
    source : optional callable s(points) -> values giving a right-hand
        side L_g u = s at spacetime points (used by manufactured-solution
        tests); None means the homogeneous equation.
    boundary : optional callable u(points) -> values injected on the
        spatial boundary at every level; None extrapolates the Cauchy
        data linearly in time on the edge (u0 + t u1), in which case
        results are only meaningful inside the numerical domain of
        dependence (see ``dependence_mask``).
    """
    if g.signature != LORENTZIAN:
        raise ConfigError("solve_cauchy_wave needs a Lorentzian metric")
    spatial = slab.spatial
    nsp = spatial.dim
    h = spatial.spacing
    dt = slab.dt
    pts = spatial.nodes()
    shape = spatial.shape
    u0 = np.asarray(u0, dtype=float).reshape(shape)
    u1 = np.asarray(u1, dtype=float).reshape(shape)
    bmask = spatial.boundary_mask()

    def src_at(t):
        if source is None:
            return 0.0
        nodes = np.column_stack([np.full(len(pts), t), pts])
        return np.asarray(source(nodes), dtype=float).reshape(shape)

    def bnd_at(t, arr):
        if boundary is None:
            return
        nodes = np.column_stack([np.full(len(pts), t), pts])
        vals = np.asarray(boundary(nodes), dtype=float).reshape(shape)
        arr[bmask] = vals[bmask]

    levels = np.empty((slab.steps + 1,) + shape)
    levels[0] = u0
    scale0 = float(np.max(np.abs(u0)) + np.max(np.abs(u1)) + 1.0)

    ginv, gup, q = coeffs[0] if coeffs is not None else \
        _coefficients_at(g, 0.0, pts, shape)
    g00 = ginv[..., 0, 0]
    rhs = _spatial_rhs(u0, ginv, gup, q, h, nsp)
    acc0 = (rhs + gup[..., 0] * u1 - src_at(0.0)) / g00
    levels[1] = u0 + dt * u1 + 0.5 * dt ** 2 * acc0
    virtual = u0 - dt * u1 + 0.5 * dt ** 2 * acc0
    bnd_at(dt, levels[1])
    if boundary is None:
        levels[1][bmask] = (u0 + dt * u1)[bmask]

    for m in range(1, slab.steps):
        t = m * dt
        ginv, gup, q = coeffs[m] if coeffs is not None else \
            _coefficients_at(g, t, pts, shape)
        g00 = ginv[..., 0, 0]
        rhs = _spatial_rhs(levels[m], ginv, gup, q, h, nsp)
        base = (rhs - src_at(t)) / g00
        beta = 0.5 * dt * gup[..., 0] / g00
        nxt = (2.0 * levels[m] - (1.0 + beta) * levels[m - 1]
               + dt ** 2 * base) / (1.0 - beta)
        bnd_at(t + dt, nxt)
        if boundary is None:
            nxt[bmask] = (u0 + (t + dt) * u1)[bmask]
        levels[m + 1] = nxt
        if np.max(np.abs(nxt)) > 1e6 * scale0:
            raise StabilityError(
                f"field norm exceeded 1e6 x initial scale at step {m + 1}")
    return SpacetimeField(slab, levels, virtual)


def dependence_mask(slab: SlabChart, g: MetricSpec, level: int,
                    halo_cells: int = 2) -> np.ndarray:
    """Spatial nodes at time level `level` outside the reach of the frozen
    spatial boundary.

    The guard uses the stencil's own propagation speed (one cell per
    step), which dominates the characteristic speed whenever the CFL
    bound holds; boundary contamination can travel no faster."""
    spatial = slab.spatial
    pts = spatial.nodes()
    h = spatial.spacing
    margin = (level + halo_cells) * h
    lo = np.array([b[0] for b in spatial.bounds])
    hi = np.array([b[1] for b in spatial.bounds])
    dist = np.minimum(pts - lo, hi - pts).min(axis=1)
    return (dist >= margin).reshape(spatial.shape)


@dataclass
class WaveChartResult:
    metric: MetricSpec
    slab: SlabChart
    fields: list                      # [f1 (time), f2..fn (spatial), f]
    Z: np.ndarray                     # (steps+1,) + spatial + (n,)
    dz_initial: np.ndarray            # spatial + (n, n), data route
    dz_initial_onesided: np.ndarray   # same, one-sided solver stencils
    max_dz_defect: float
    max_dz_defect_onesided: float
    gauge_residual: float
    guard_mask: np.ndarray
    shrink_count: int = 0


def _initial_dz(slab: SlabChart, data):
    """DZ on the initial surface from the Cauchy data by the quotient rule
    (rows Z^a, columns (t, x')); spatial derivatives by 4th-order stencils."""
    spatial = slab.spatial
    nsp = spatial.dim
    n = nsp + 1
    h = spatial.spacing
    shape = spatial.shape
    f0, f1 = data[-1]
    dz = np.empty(shape + (n, n))
    for k, (a0, a1) in enumerate(data[:-1]):
        dz[..., k, 0] = (a1 * f0 - a0 * f1) / f0 ** 2
        for i in range(nsp):
            da = derivative1(a0, i, h)
            df = derivative1(f0, i, h)
            dz[..., k, i + 1] = (da * f0 - a0 * df) / f0 ** 2
    return dz


def build_wave_chart(g: MetricSpec, slab: SlabChart, max_shrink: int = 3,
                     band_margin: int = 3) -> WaveChartResult:
    """Conformal wave chart from the canonical Cauchy data.

    f^1 has data (0, 1), the spatial f^k have data (x'_k, 0), and the
    denominator f has data (1, 0), so DZ = I on the initial surface; the
    slab gauge residual Gamma_a - 2 d_a log f (Z-coordinate components,
    chain rule) is reported over the guarded interior.  If f losesirs
    positivity inside the guard the slab duration is halved and the
    construction retried.
    """
    spatial = slab.spatial
    nsp = spatial.dim
    n = nsp + 1
    pts = spatial.nodes()
    shape = spatial.shape
    cur = slab
    for shrink in range(max_shrink + 1):
        data = [(np.zeros(shape), np.ones(shape))]
        for k in range(nsp):
            data.append((pts[:, k].reshape(shape), np.zeros(shape)))
        data.append((np.ones(shape), np.zeros(shape)))
        coeffs = slab_coefficients(g, cur)
        solved = [solve_cauchy_wave(g, a0, a1, cur, coeffs=coeffs)
                  for a0, a1 in data]
        fden = solved[-1]
        if np.any(fden.levels <= 0.0):
            cur = SlabChart(cur.spatial, max(cur.steps // 2, 2), cur.dt)
            continue
        Z = np.stack([s.levels / fden.levels for s in solved[:-1]], axis=-1)
        dz0 = _initial_dz(cur, [(d0, d1) for d0, d1 in data])
        dz0_solver = _solver_dz_initial(cur, solved)
        defect = np.max(np.abs(dz0 - np.eye(n)))
        og = dependence_mask(cur, g, 2, halo_cells=4)
        defect_onesided = np.max(np.abs((dz0_solver - np.eye(n))[og]))
        resid = _slab_gauge_residual(g, cur, solved, Z, band_margin)
        return WaveChartResult(
            metric=g, slab=cur, fields=solved, Z=Z, dz_initial=dz0,
            dz_initial_onesided=dz0_solver,
            max_dz_defect=float(defect),
            max_dz_defect_onesided=float(defect_onesided),
            gauge_residual=resid["max"],
            guard_mask=resid["mask"], shrink_count=shrink)
    raise ChartFailure("wave chart denominator lost positivity after "
                       f"{max_shrink} slab shrinks")


def _solver_dz_initial(slab: SlabChart, solved):
    """Diagnostic DZ|_{t=0} using evolved levels: one-sided second-order
    time stencils through levels 0..2 and 4th-order spatial stencils."""
    spatial = slab.spatial
    nsp = spatial.dim
    n = nsp + 1
    h = spatial.spacing
    dt = slab.dt
    shape = spatial.shape
    quot = [s.levels / solved[-1].levels for s in solved[:-1]]
    dz = np.empty(shape + (n, n))
    for k, zk in enumerate(quot):
        dz[..., k, 0] = (-3.0 * zk[0] + 4.0 * zk[1] - zk[2]) / (2.0 * dt)
        for i in range(nsp):
            dz[..., k, i + 1] = derivative1(zk[0], i, h)
    return dz


def _slab_gauge_residual(g: MetricSpec, slab: SlabChart, solved, Z,
                         band_margin: int):
    """max |Gamma_a(g in Z coords) - 2 d_{Z^a} log f| over guarded interior
    levels, all derivatives taken on the slab grid via the chain rule."""
    spatial = slab.spatial
    nsp = spatial.dim
    n = nsp + 1
    h = spatial.spacing
    dt = slab.dt
    levels = np.arange(2, slab.steps - 1)
    if len(levels) == 0:
        raise ConfigError("slab too short for interior gauge evaluation")
    pts = spatial.nodes()
    fden = solved[-1]

    def tderiv(arr):         # centered in time over all levels
        out = np.empty_like(arr)
        out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * dt)
        out[0] = out[1]
        out[-1] = out[-2]
        return out

    # spacetime Jacobian J[m, x, k, a] = d_a Z^k; nodes where the frozen
    # boundary has degenerated it are replaced by the identity and are
    # excluded from the guarded region below
    J = np.empty((slab.steps + 1,) + spatial.shape + (n, n))
    for k in range(n):
        J[..., k, 0] = tderiv(Z[..., k])
        for i in range(nsp):
            J[..., k, i + 1] = np.stack(
                [derivative1(Z[m][..., k], i, h) for m in range(slab.steps + 1)])
    bad = np.abs(np.linalg.det(J)) < 1e-8
    J[bad] = np.eye(n)
    Jinv = np.linalg.inv(J)

    # metric in Z components: gt = Jinv^T g Jinv
    gv = np.empty((slab.steps + 1,) + spatial.shape + (n, n))
    for m in range(slab.steps + 1):
        nodes = np.column_stack([np.full(len(pts), m * dt), pts])
        gv[m] = g.values(nodes).reshape(spatial.shape + (n, n))
    gt = np.einsum("...ka,...kl,...lb->...ab", Jinv, gv, Jinv)

    def chain_grad(scalar_levels):
        """d_{Z^a} of a sampled scalar: (Jinv)^mu_a d_mu."""
        dx = np.empty(scalar_levels.shape + (n,))
        dx[..., 0] = tderiv(scalar_levels)
        for i in range(nsp):
            dx[..., i + 1] = np.stack(
                [derivative1(scalar_levels[m], i, h)
                 for m in range(slab.steps + 1)])
        return np.einsum("...m,...ma->...a", dx, Jinv)

    # Gamma_a(gt) via the contracted-coordinate form with Z-derivatives
    gtinv = np.linalg.inv(gt)
    dgt = np.empty(gt.shape + (n,))
    for a in range(n):
        for b in range(a, n):
            der = chain_grad(gt[..., a, b])
            dgt[..., a, b, :] = dgt[..., b, a, :] = der
    dgt = np.moveaxis(dgt, -1, -3)       # [..., d, a, b] = d_{Z^d} gt_ab
    logdet = np.log(np.abs(np.linalg.det(gt)))
    dlogdet = chain_grad(logdet)
    gamma = (np.einsum("...bc,...bac->...a", gtinv, dgt)
             - 0.5 * dlogdet)
    dlogf = chain_grad(np.log(fden.levels))
    resid = gamma - 2.0 * dlogf

    # guard: inside the light cone and away from spatial faces
    mask = np.zeros(resid.shape[:-1], dtype=bool)
    for m in levels:
        mask[m] = dependence_mask(slab, g, m, halo_cells=7)
        band = spatial.interior_band(band_margin)
        sel = np.zeros(spatial.shape, dtype=bool)
        sel[band] = True
        mask[m] &= sel
    if not np.any(mask):
        raise ConfigError("guarded region is empty; enlarge the slab")
    return {"max": float(np.max(np.abs(resid[mask]))), "mask": mask,
            "field": resid}
