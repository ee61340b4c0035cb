"""Finite-difference Dirichlet solver for the conformal Laplacian.

Divergence-form, second-order discretization of

    L_g u = -|g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b u) + (n-2)/(4(n-1)) R(g) u

on a box or half-box chart, with face-averaged coefficients on the
diagonal flux terms and centered cross differences for the off-diagonal
ones.  On the flat metric the stencil reduces to the classical
(2n+1)-point Laplacian over h^2.

The prescribed-solution constructor below realizes, at one scale
epsilon, the scheme: find a positive unit solution f, conformally
rescale so the operator loses its zeroth-order term, solve for the
coordinate candidates against affine boundary values, and quotient.
When the solve fails or positivity is lost the scale is halved (the
operational substitute for "a small enough neighborhood so that the
maximum principle holds").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import curvature
from .errors import AssemblyError, ConfigError, ConstructionFailure
from .fields import FULL_BOX, HALF_SPACE, GridChart, ScalarField, gradient_at
from .metrics import MetricSpec

DEFAULT_TOL = 1e-10
MAX_ITER = 50_000


@dataclass
class SolverReport:
    iterations: int = 0
    residual: float = np.inf
    converged: bool = False
    shrink_count: int = 0
    tolerance: float = DEFAULT_TOL


@dataclass
class AssembledOperator:
    """Sparse operator with identity rows on the Dirichlet boundary."""

    chart: GridChart
    matrix: sp.csr_matrix           # full system, boundary rows = identity
    boundary_mask: np.ndarray       # grid-shaped bool
    weight: np.ndarray              # |g|^{1/2} at nodes (grid shape)

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return (self.matrix @ samples.ravel()).reshape(self.chart.shape)


def _coefficient_stencil(chart: GridChart, K: np.ndarray, w: np.ndarray,
                         q: np.ndarray) -> sp.csr_matrix:
    """Assemble -(1/w) D_a(K^{ab} D_b .) + q on interior nodes.

    K : nodes x n x n (already includes the |g|^{1/2} factor)
    w : nodes (|g|^{1/2})
    q : nodes (zeroth-order coefficient)
    """
    n = chart.dim
    shape = chart.shape
    h = chart.spacing
    size = int(np.prod(shape))
    K = K.reshape(shape + (n, n))
    w = w.reshape(shape)
    q = q.reshape(shape)
    if not np.all(np.isfinite(K)) or np.any(w <= 0.0):
        bad = np.argwhere(~np.isfinite(K).all(axis=(-2, -1)) | (w <= 0.0))
        raise AssemblyError(f"degenerate metric sample at node {tuple(bad[0])}")

    bmask = chart.boundary_mask()
    interior = ~bmask
    lin = np.arange(size).reshape(shape)

    rows, cols, vals = [], [], []

    strides = []
    for ax in range(n):
        s = [slice(None)] * n
        strides.append(int(np.ravel_multi_index(
            tuple(1 if k == ax else 0 for k in range(n)), shape)))

    inv_wh2 = 1.0 / (w * h * h)
    diag_accum = q.astype(float).copy()

    # diagonal flux terms with arithmetic face means
    for ax in range(n):
        Ka = K[..., ax, ax]
        plus = np.zeros(shape)
        minus = np.zeros(shape)
        sl_c = [slice(None)] * n
        sl_p = [slice(None)] * n
        sl_m = [slice(None)] * n
        sl_c[ax] = slice(1, -1)
        sl_p[ax] = slice(2, None)
        sl_m[ax] = slice(0, -2)
        plus[tuple(sl_c)] = 0.5 * (Ka[tuple(sl_c)] + Ka[tuple(sl_p)])
        minus[tuple(sl_c)] = 0.5 * (Ka[tuple(sl_c)] + Ka[tuple(sl_m)])
        cp = -plus * inv_wh2
        cm = -minus * inv_wh2
        diag_accum += (plus + minus) * inv_wh2
        sel = interior
        rows.append(lin[sel]); cols.append((lin + strides[ax])[sel]); vals.append(cp[sel])
        rows.append(lin[sel]); cols.append((lin - strides[ax])[sel]); vals.append(cm[sel])

    # cross terms: -(1/w) Dc_a(K^{ab} Dc_b u), centered differences
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            Kab = K[..., a, b]
            coef = 1.0 / (4.0 * w * h * h)
            sa, sb = strides[a], strides[b]

            def neighbor_K(offset_axis, off):
                sl = [slice(None)] * n
                sl[offset_axis] = slice(None)
                rolled = np.roll(Kab, -off, axis=offset_axis)
                return rolled

            Kp = neighbor_K(a, +1)   # K at node + e_a (cyclic; boundary rows unused)
            Km = neighbor_K(a, -1)
            sel = interior
            for s_b, sign_b in ((sb, +1.0), (-sb, -1.0)):
                rows.append(lin[sel]); cols.append((lin + sa + s_b)[sel])
                vals.append((-sign_b * Kp * coef)[sel])
                rows.append(lin[sel]); cols.append((lin - sa + s_b)[sel])
                vals.append((+sign_b * Km * coef)[sel])

    rows.append(lin[interior]); cols.append(lin[interior]); vals.append(diag_accum[interior])
    # identity rows on the boundary
    rows.append(lin[bmask]); cols.append(lin[bmask]); vals.append(np.ones(bmask.sum()))

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size)).tocsr()
    return mat


def assemble_operator(g: MetricSpec, chart: GridChart,
                      potential: bool = True,
                      scale_field: np.ndarray = None,
                      coeff=None) -> AssembledOperator:
    """Assemble L_g (or the pure Laplace-Beltrami part) on a chart.

    scale_field, when given, conformally rescales the metric by
    s^{p-2} with p = 2n/(n-2) using *sampled* values s at the nodes:
    the flux coefficient becomes s^2 |g|^{1/2} g^{ab} and the weight
    s^p |g|^{1/2}; the potential is dropped (the rescaled operator has
    zero scalar curvature when s solves L_g s = 0).

    coeff, when given, is a precomputed (K, w, q) triple from
    ``curvature.operator_coefficient_fields`` for this chart's nodes,
    so several operators on one grid share a single metric evaluation.
    """
    n = chart.dim
    if coeff is None:
        coeff = curvature.operator_coefficient_fields(g, chart.nodes())
    K, w, q = (np.array(c, copy=True) for c in coeff)
    if scale_field is not None:
        s = scale_field.ravel()
        if np.any(s <= 0.0):
            raise AssemblyError("conformal scale field must be positive")
        p = 2.0 * n / (n - 2.0)
        K = K * (s ** 2)[:, None, None]
        w = w * s ** p
        q = np.zeros_like(q)
    elif not potential:
        q = np.zeros_like(q)
    mat = _coefficient_stencil(chart, K, w, q)
    return AssembledOperator(chart, mat, chart.boundary_mask(),
                             w.reshape(chart.shape))


def solve_dirichlet(A: AssembledOperator, boundary_values: np.ndarray,
                    rhs: np.ndarray = None, tol: float = DEFAULT_TOL,
                    maxiter: int = MAX_ITER):
    """Solve A u = rhs with u = boundary_values on the Dirichlet set.

    Jacobi-preconditioned BiCGStab on the interior block (the operator is
    nonsymmetric in general); boundary values are injected exactly.
    Returns (ScalarField, SolverReport); non-convergence is reported, not
    raised, so callers may shrink their domain and retry.
    """
    chart = A.chart
    shape = chart.shape
    bmask = A.boundary_mask.ravel()
    imask = ~bmask
    bvals = np.asarray(boundary_values, dtype=float).ravel()
    if not np.all(np.isfinite(bvals[bmask])):
        raise ConfigError("boundary data contains non-finite values")
    full_rhs = np.zeros(bmask.size) if rhs is None else np.asarray(rhs, float).ravel()

    mat = A.matrix
    A_ii = mat[imask][:, imask]
    A_ib = mat[imask][:, bmask]
    b = full_rhs[imask] - A_ib @ bvals[bmask]

    diag = A_ii.diagonal()
    if np.any(diag == 0.0):
        raise AssemblyError("zero diagonal entry in interior block")
    M = spla.LinearOperator(A_ii.shape, matvec=lambda v: v / diag)

    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros(A_ii.shape[0])
        info = 0
    else:
        x, info = spla.bicgstab(A_ii, b, rtol=tol, atol=0.0, maxiter=maxiter,
                                M=M, callback=cb)
    res = np.linalg.norm(b - A_ii @ x) / (bnorm if bnorm > 0 else 1.0)
    report = SolverReport(iterations=count["n"], residual=float(res),
                          converged=(info == 0 and res <= max(tol * 10, 1e-15)),
                          tolerance=tol)
    u = np.empty(bmask.size)
    u[imask] = x
    u[bmask] = bvals[bmask]
    return ScalarField(chart, u.reshape(shape)), report


# -- prescribed solutions (the single-scale construction) --------------------

@dataclass
class PrescribedSolution:
    chart: GridChart
    f: ScalarField                    # positive unit solution
    solution: ScalarField             # f^sigma, f^k, or f^n depending on mode
    quotient_factor: ScalarField      # the pure-Laplacian solve u_eps (or None)
    gradient_at_center: np.ndarray
    report: SolverReport
    epsilon: float
    shrink_count: int = 0
    extras: dict = field(default_factory=dict)


def make_chart(eps: float, dim: int, resolution: int, kind: str = FULL_BOX,
               center=None) -> GridChart:
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    if resolution % 2 == 0:
        raise ConfigError("prescribed-solution charts need odd resolution")
    bounds = []
    res = []
    for ax in range(dim):
        if kind == HALF_SPACE and ax == dim - 1:
            bounds.append((0.0, eps))
            res.append((resolution - 1) // 2 + 1)
        else:
            bounds.append((center[ax] - eps, center[ax] + eps))
            res.append(resolution)
    return GridChart(tuple(bounds), tuple(res), kind)


def _positive_unit(g: MetricSpec, chart: GridChart, tol: float):
    A = assemble_operator(g, chart)
    ones = np.ones(chart.shape)
    f, rep = solve_dirichlet(A, ones, tol=tol)
    ok = rep.converged and np.all(f.samples > 0.0)
    return f, rep, ok


def prescribed_solution(g: MetricSpec, mode: str, sigma=None, eps: float = 0.2,
                        resolution: int = 33, tol: float = DEFAULT_TOL,
                        max_shrink: int = 6, center=None) -> PrescribedSolution:
    """Solutions of L_g u = 0 with prescribed behavior at the center.

    mode = "positive_unit": f > 0 with f(center) = 1 (interior charts) or
        boundary value 1 on the whole boundary (half-space charts).
    mode = "interior": requires sigma; returns f^sigma = f * u with
        Delta_{f^{p-2} g} u = 0, boundary value sigma.(x - center),
        u(center) = 0; the measured gradient at the center approaches
        sigma at rate O(eps).
    mode = "boundary_normal": half-space chart; f^n = 0 on the x^n = 0
        face, boundary value x^n elsewhere, rescaled so the normal
        derivative at the face center is exactly 1.

    Solver failure or loss of positivity halves eps, at most `max_shrink`
    times, before raising ConstructionFailure.
    """
    if mode not in ("positive_unit", "interior", "boundary_normal"):
        raise ConfigError(f"unknown prescribed-solution mode {mode!r}")
    kind = HALF_SPACE if mode == "boundary_normal" else FULL_BOX
    dim = g.dim
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    failures = []
    cur = float(eps)
    for shrink in range(max_shrink + 1):
        chart = make_chart(cur, dim, resolution, kind, center)
        try:
            result = _prescribed_at_scale(g, mode, sigma, chart, tol, center, cur)
        except AssemblyError as exc:
            failures.append(f"eps={cur:g}: {exc}")
            cur *= 0.5
            continue
        if result is not None:
            result.shrink_count = shrink
            result.report.shrink_count = shrink
            return result
        failures.append(f"eps={cur:g}: solver failure or nonpositive f")
        cur *= 0.5
    raise ConstructionFailure(
        f"prescribed solution ({mode}) failed after {max_shrink} shrinks",
        diagnostics={"history": failures, "metric": g.name})


def _prescribed_at_scale(g, mode, sigma, chart, tol, center, eps):
    f, rep_f, ok = _positive_unit(g, chart, tol)
    if not ok:
        return None
    cidx = chart.center_index()
    h = chart.spacing

    if mode == "positive_unit":
        if chart.boundary_kind == FULL_BOX:
            f = ScalarField(chart, f.samples / f.samples[cidx])
        grad = gradient_at(np.log(f.samples), cidx, h)
        return PrescribedSolution(chart, f, f, None, grad, rep_f, eps)

    if mode == "interior":
        if sigma is None:
            raise ConfigError("interior mode needs a covector sigma")
        sigma = np.asarray(sigma, dtype=float)
        A2 = assemble_operator(g, chart, scale_field=f.samples)
        pts = chart.nodes()
        bvals = ((pts - center) @ sigma).reshape(chart.shape)
        u, rep_u = solve_dirichlet(A2, bvals, tol=tol)
        if not rep_u.converged:
            return None
        u = ScalarField(chart, u.samples - u.samples[cidx])
        fsig = ScalarField(chart, f.samples * u.samples)
        grad = gradient_at(fsig.samples, cidx, h)
        rep = rep_u
        rep.iterations += rep_f.iterations
        return PrescribedSolution(chart, f, fsig, u, grad, rep, eps,
                                  extras={"target": sigma})

    # boundary_normal
    pts = chart.nodes()
    bvals = pts[:, -1].reshape(chart.shape)   # x^n, equals 0 on the gamma face
    A = assemble_operator(g, chart)
    fn, rep_n = solve_dirichlet(A, bvals, tol=tol)
    if not rep_n.converged:
        return None
    dn = gradient_at(fn.samples, cidx, h)[-1]
    if dn <= 0.0:
        return None
    fn = ScalarField(chart, fn.samples / dn)
    grad = gradient_at(fn.samples, cidx, h)
    rep = rep_n
    rep.iterations += rep_f.iterations
    return PrescribedSolution(chart, f, fn, None, grad, rep, eps,
                              extras={"normal_derivative_raw": float(dn)})
