"""Pointwise curvature calculus from metric jets.

Conventions (fixed once here, used everywhere):

* Laplace-Beltrami operator with positive spectrum,
  ``Delta_g u = -|g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b u)``;
  in Lorentzian signature the same formula is the wave operator with
  ``|g| = -det g``.
* Conformal Laplacian ``L_g = Delta_g + (n-2)/(4(n-1)) R(g)``.
* Christoffel symbols ``Gamma^c_ab = 1/2 g^{cd}(d_a g_bd + d_b g_ad - d_d g_ab)``,
  contracted ``Gamma^a = g^{bc} Gamma^a_bc`` and ``Gamma_a = g_ab Gamma^b``.
* Riemann tensor ``R_abc^d = d_a Gamma^d_bc - d_b Gamma^d_ac
  + Gamma^d_ae Gamma^e_bc - Gamma^d_be Gamma^e_ac``, lowered on the last
  slot; Ricci is the contraction ``R_bc = R_abc^a`` (round spheres have
  positive scalar curvature).
* Schouten ``P_ab = (R_ab - R g_ab / (2(n-1))) / (n-2)``, Weyl
  ``W_abcd = R_abcd + P_ac g_bd - P_bc g_ad + P_bd g_ac - P_ad g_bc``,
  Cotton ``C_abc = nab_a P_bc - nab_b P_ac``, Bach
  ``B_ab = nab^c nab_a P_bc - nab^c nab_c P_ab + P^cd W_acbd``.

The Weyl contraction in the last Bach term is written ``W_acdb`` in some
sources; the placement used here (``W_acbd``) is the one under which the
Schouten-form evaluation coincides with the independent
divergence-of-Weyl evaluation ``B_ab = nab^c nab^d W_acbd
+ 1/2 R^cd W_acbd`` in dimension four (see ``bach_two_ways``).

All covariant derivatives of curvature are obtained by rerunning the
pointwise formulas in jet arithmetic, so fourth-derivative quantities
(Bach) carry no finite-difference error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetricError, DimensionError, JetOrderError
from .jets import Jet, jet_log, jet_pow
from .metrics import LORENTZIAN, RIEMANNIAN, MetricSpec

GAMMA_ROUTE_RTOL = 1e-11


# -- jet linear algebra ----------------------------------------------------

def det_jets(G):
    """Determinant of a (nested-list) matrix of jets, n <= 4."""
    n = len(G)
    if n == 1:
        return G[0][0]
    if n == 2:
        return G[0][0] * G[1][1] - G[0][1] * G[1][0]
    det = None
    for j in range(n):
        minor = [[G[r][c] for c in range(n) if c != j] for r in range(1, n)]
        term = G[0][j] * det_jets(minor)
        if j % 2 == 1:
            term = -term
        det = term if det is None else det + term
    return det


def inverse_jets(G, det=None):
    """Inverse of a symmetric jet matrix via the adjugate, n <= 4."""
    n = len(G)
    if det is None:
        det = det_jets(G)
    if np.any(det.value == 0.0):
        raise DegenerateMetricError("metric determinant vanishes at a point")
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            minor = [[G[r][c] for c in range(n) if c != j]
                     for r in range(n) if r != i]
            cof = det_jets(minor) if n > 1 else Jet.constant(
                np.ones(G[0][0].batch_shape), G[0][0].center, G[0][0].order)
            if (i + j) % 2 == 1:
                cof = -cof
            inv[i][j] = inv[j][i] = cof / det
    return inv


def tensor_values(t, shape):
    """Nested list of jets -> ndarray (batch shape + tensor shape)."""
    first = t
    for _ in shape:
        first = first[0]
    out = np.empty(first.batch_shape + shape)
    def fill(node, idx):
        if len(idx) == len(shape):
            out[(Ellipsis,) + idx] = node.value
            return
        for k in range(shape[len(idx)]):
            fill(node[k], idx + (k,))
    fill(t, ())
    return out


def _abs_det(g: MetricSpec, G):
    det = det_jets(G)
    absdet = det if g.signature == RIEMANNIAN else -det
    if np.any(absdet.value <= 0.0):
        raise DegenerateMetricError(
            f"metric {g.name!r} has non-positive |det| at an evaluated point")
    return absdet


# -- core jet pipeline -----------------------------------------------------

class _JetGeometry:
    """All curvature quantities of one metric at a batch of points, kept
    as jets so that consumers may differentiate once more."""

    def __init__(self, g: MetricSpec, points, order: int):
        self.spec = g
        self.n = g.dim
        self.order = order
        G, x = g.component_jets(points, order)
        self.x = x
        self.g = G
        gv = tensor_values(G, (self.n, self.n))
        g.validate_values(gv)
        self.absdet = _abs_det(g, G)
        self.ginv = inverse_jets(G, det_jets(G))
        n = self.n
        # dg[a][b][c] = d_a g_bc
        self.dg = [[[G[b][c].derivative(a) for c in range(n)] for b in range(n)]
                   for a in range(n)]
        self._gamma = None
        self._riemann = None
        self._ricci = None
        self._scalar = None
        self._schouten = None
        self._weyl = None

    # Christoffel symbols -------------------------------------------------

    @property
    def gamma(self):
        if self._gamma is None:
            n, ginv, dg = self.n, self.ginv, self.dg
            gam = [[[None] * n for _ in range(n)] for _ in range(n)]
            for a in range(n):
                for b in range(a, n):
                    sym = [dg[a][b][d] + dg[b][a][d] - dg[d][a][b]
                           for d in range(n)]
                    for c in range(n):
                        s = ginv[c][0] * sym[0]
                        for d in range(1, n):
                            s = s + ginv[c][d] * sym[d]
                        s = 0.5 * s
                        gam[c][a][b] = gam[c][b][a] = s
            self._gamma = gam
        return self._gamma

    def gamma_up(self):
        n = self.n
        gam = self.gamma
        out = []
        for a in range(n):
            s = None
            for b in range(n):
                for c in range(n):
                    term = self.ginv[b][c] * gam[a][b][c]
                    s = term if s is None else s + term
            out.append(s)
        return out

    def gamma_down(self, gup=None):
        if gup is None:
            gup = self.gamma_up()
        n = self.n
        return [sum_jets([self.g[a][b] * gup[b] for b in range(n)])
                for a in range(n)]

    def gamma_down_contracted_form(self):
        """Gamma_a = g^{bc} d_b g_ac - 1/2 d_a log|g| (the second route)."""
        n = self.n
        logdet = jet_log(self.absdet)
        out = []
        for a in range(n):
            s = None
            for b in range(n):
                for c in range(n):
                    term = self.ginv[b][c] * self.dg[b][a][c]
                    s = term if s is None else s + term
            out.append(s - 0.5 * logdet.derivative(a))
        return out

    # curvature tensors ----------------------------------------------------

    @property
    def riemann_mixed(self):
        """R_abc^d stored as [a][b][c][d]."""
        if self._riemann is None:
            n, gam = self.n, self.gamma
            dgam = [[[[gam[d][b][c].derivative(a) for d in range(n)]
                      for c in range(n)] for b in range(n)] for a in range(n)]
            riem = [[[[None] * n for _ in range(n)] for _ in range(n)]
                    for _ in range(n)]
            for a in range(n):
                for b in range(n):
                    if a == b:
                        zero = 0.0 * gam[0][0][0]
                        for c in range(n):
                            for d in range(n):
                                riem[a][b][c][d] = zero
                        continue
                    if a > b:
                        for c in range(n):
                            for d in range(n):
                                riem[a][b][c][d] = -riem[b][a][c][d]
                        continue
                    for c in range(n):
                        for d in range(n):
                            s = dgam[a][b][c][d] - dgam[b][a][c][d]
                            for e in range(n):
                                s = s + gam[d][a][e] * gam[e][b][c] \
                                    - gam[d][b][e] * gam[e][a][c]
                            riem[a][b][c][d] = s
            self._riemann = riem
        return self._riemann

    def riemann_lowered(self):
        """R_abcd = R_abc^e g_ed."""
        n = self.n
        rm = self.riemann_mixed
        out = [[[[None] * n for _ in range(n)] for _ in range(n)]
               for _ in range(n)]
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    for d in range(n):
                        out[a][b][c][d] = sum_jets(
                            [rm[a][b][c][e] * self.g[e][d] for e in range(n)])
        return out

    @property
    def ricci(self):
        if self._ricci is None:
            n = self.n
            rm = self.riemann_mixed
            ric = [[None] * n for _ in range(n)]
            for b in range(n):
                for c in range(b, n):
                    s = sum_jets([rm[a][b][c][a] for a in range(n)])
                    ric[b][c] = ric[c][b] = s
            self._ricci = ric
        return self._ricci

    @property
    def scalar(self):
        if self._scalar is None:
            n = self.n
            self._scalar = sum_jets([self.ginv[a][b] * self.ricci[a][b]
                                     for a in range(n) for b in range(n)])
        return self._scalar

    @property
    def schouten(self):
        if self._schouten is None:
            n = self.n
            if n < 3:
                raise DimensionError("Schouten tensor needs n >= 3")
            coef = 1.0 / (n - 2)
            trace_coef = 1.0 / (2 * (n - 1))
            P = [[None] * n for _ in range(n)]
            for a in range(n):
                for b in range(a, n):
                    P[a][b] = P[b][a] = coef * (
                        self.ricci[a][b] - trace_coef * (self.scalar * self.g[a][b]))
            self._schouten = P
        return self._schouten

    @property
    def weyl(self):
        """Fully lowered W_abcd."""
        if self._weyl is None:
            n = self.n
            P, g = self.schouten, self.g
            rl = self.riemann_lowered()
            W = [[[[None] * n for _ in range(n)] for _ in range(n)]
                 for _ in range(n)]
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        for d in range(n):
                            W[a][b][c][d] = (rl[a][b][c][d]
                                             + P[a][c] * g[b][d] - P[b][c] * g[a][d]
                                             + P[b][d] * g[a][c] - P[a][d] * g[b][c])
            self._weyl = W
        return self._weyl

    # covariant derivatives -------------------------------------------------

    def cov_deriv(self, t, rank):
        """Covariant derivative of a rank-`rank` lowered tensor given as a
        nested list; returns rank+1 nested list indexed [e][...]."""
        n, gam = self.n, self.gamma
        def entry(e, idx):
            node = t
            for k in idx:
                node = node[k]
            s = node.derivative(e)
            for slot in range(rank):
                for p in range(n):
                    jdx = list(idx)
                    jdx[slot] = p
                    node_p = t
                    for k in jdx:
                        node_p = node_p[k]
                    s = s - gam[p][e][idx[slot]] * node_p
            return s
        def build(e, idx):
            if len(idx) == rank:
                return entry(e, tuple(idx))
            return [build(e, idx + [k]) for k in range(self.n)]
        return [build(e, []) for e in range(n)]

    def cotton(self):
        """C_abc = nab_a P_bc - nab_b P_ac."""
        n = self.n
        dP = self.cov_deriv(self.schouten, 2)
        C = [[[None] * n for _ in range(n)] for _ in range(n)]
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    C[a][b][c] = dP[a][b][c] - dP[b][a][c]
        return C

    def bach(self):
        """Schouten-form Bach tensor (n >= 4)."""
        n = self.n
        if n < 4:
            raise DimensionError("Bach tensor needs n >= 4")
        dP = self.cov_deriv(self.schouten, 2)
        ddP = self.cov_deriv(dP, 3)  # ddP[d][e][a][b] = nab_d nab_e P_ab
        ginv = self.ginv
        P, W = self.schouten, self.weyl
        Pup = [[None] * n for _ in range(n)]
        for c in range(n):
            for d in range(n):
                Pup[c][d] = sum_jets([ginv[c][a] * (P[a][b] * ginv[b][d])
                                      for a in range(n) for b in range(n)])
        B = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                t1 = sum_jets([ginv[c][e] * ddP[e][a][b][c]
                               for c in range(n) for e in range(n)])
                t2 = sum_jets([ginv[c][d] * ddP[c][d][a][b]
                               for c in range(n) for d in range(n)])
                t3 = sum_jets([Pup[c][d] * W[a][c][b][d]
                               for c in range(n) for d in range(n)])
                B[a][b] = t1 - t2 + t3
        return B

    def bach_divergence_of_weyl(self):
        """Independent Bach evaluation B_ab = nab^c nab^d W_acbd
        + 1/2 R^cd W_acbd (a four-dimensional identity)."""
        n = self.n
        if n != 4:
            raise DimensionError("divergence-of-Weyl Bach form is specific to n = 4")
        ginv = self.ginv
        W = self.weyl
        dW = self.cov_deriv(W, 4)  # dW[f][a][b][c][d]
        # E_acb = nab^d W_acbd
        E = [[[None] * n for _ in range(n)] for _ in range(n)]
        for a in range(n):
            for c in range(n):
                for b in range(n):
                    E[a][c][b] = sum_jets([ginv[d][f] * dW[f][a][c][b][d]
                                           for d in range(n) for f in range(n)])
        dE = self.cov_deriv(E, 3)  # dE[e][a][c][b]
        Rup = [[None] * n for _ in range(n)]
        for c in range(n):
            for d in range(n):
                Rup[c][d] = sum_jets([ginv[c][a] * (self.ricci[a][b] * ginv[b][d])
                                      for a in range(n) for b in range(n)])
        B = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                t1 = sum_jets([ginv[c][e] * dE[e][a][c][b]
                               for c in range(n) for e in range(n)])
                t2 = sum_jets([Rup[c][d] * W[a][c][b][d]
                               for c in range(n) for d in range(n)])
                B[a][b] = t1 + 0.5 * t2
        return B


def sum_jets(terms):
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


# -- public bundle ----------------------------------------------------------

@dataclass
class CurvatureBundle:
    """Pointwise curvature of one metric at a batch of points.

    Tensor components live in trailing axes; the leading axes are the
    batch of evaluation points.
    """

    point: np.ndarray
    gamma: np.ndarray          # Gamma^c_ab, axes [c, a, b]
    gamma_up: np.ndarray       # Gamma^a
    gamma_down: np.ndarray     # Gamma_a
    riemann: np.ndarray        # R_abcd fully lowered
    ricci: np.ndarray
    scalar: np.ndarray
    schouten: np.ndarray = None
    weyl: np.ndarray = None
    cotton: np.ndarray = None
    bach: np.ndarray = None
    obstruction4: np.ndarray = None


def _required_order(dim: int, depth: str) -> int:
    if depth == "basic":
        return 2
    if dim >= 4:
        return 4
    return 3


def curvature_bundle(g: MetricSpec, points, depth: str = "basic",
                     order: int = None) -> CurvatureBundle:
    """All pointwise curvature quantities of ``g`` at ``points``.

    depth="basic" fills Christoffel through scalar curvature;
    depth="full" adds Schouten, Weyl, Cotton, and (n >= 4) Bach with the
    n = 4 ambient obstruction equal to Bach.
    """
    if depth not in ("basic", "full"):
        raise DimensionError(f"unknown curvature depth {depth!r}")
    need = _required_order(g.dim, depth)
    if order is None:
        order = need
    elif order < need:
        raise JetOrderError(
            f"depth={depth!r} in dimension {g.dim} needs jet order >= {need}")
    if depth == "full" and g.dim < 3:
        raise DimensionError("depth='full' requires n >= 3")
    geo = _JetGeometry(g, points, order)
    n = g.dim
    gup = geo.gamma_up()
    bundle = CurvatureBundle(
        point=np.atleast_2d(np.asarray(points, dtype=float)),
        gamma=tensor_values(geo.gamma, (n, n, n)),
        gamma_up=np.stack([j.value for j in gup], axis=-1),
        gamma_down=np.stack([j.value for j in geo.gamma_down(gup)], axis=-1),
        riemann=tensor_values(geo.riemann_lowered(), (n, n, n, n)),
        ricci=tensor_values(geo.ricci, (n, n)),
        scalar=geo.scalar.value,
    )
    _check_gamma_routes(geo, bundle.gamma_down)
    if depth == "full":
        bundle.schouten = tensor_values(geo.schouten, (n, n))
        bundle.weyl = tensor_values(geo.weyl, (n, n, n, n))
        bundle.cotton = tensor_values(geo.cotton(), (n, n, n))
        if n >= 4:
            bundle.bach = tensor_values(geo.bach(), (n, n))
            if n == 4:
                bundle.obstruction4 = bundle.bach
    return bundle


def _check_gamma_routes(geo: _JetGeometry, lowered: np.ndarray):
    other = np.stack([j.value for j in geo.gamma_down_contracted_form()], axis=-1)
    scale = np.max(np.abs(lowered), axis=-1, keepdims=True)
    floor = np.max(np.abs(tensor_values(geo.dg, (geo.n,) * 3)),
                   axis=(-3, -2, -1), keepdims=False)
    tol = GAMMA_ROUTE_RTOL * (scale[..., 0] + floor + 1e-300)
    err = np.max(np.abs(lowered - other), axis=-1)
    if np.any(err > tol):
        raise DegenerateMetricError(
            "contracted Christoffel routes disagree beyond tolerance "
            f"(max {np.max(err):.3e}); metric data is inconsistent")


def christoffel(g: MetricSpec, points, order: int = 2):
    """Gamma^c_ab, Gamma^a, Gamma_a at ``points``.

    Gamma_a is evaluated both by lowering Gamma^a and by the contracted
    coordinate formula with the log-determinant; the routes must agree to
    relative 1e-11 and the lowered-index value is returned.
    """
    geo = _JetGeometry(g, points, order)
    n = g.dim
    gup = geo.gamma_up()
    down = np.stack([j.value for j in geo.gamma_down(gup)], axis=-1)
    _check_gamma_routes(geo, down)
    return (tensor_values(geo.gamma, (n, n, n)),
            np.stack([j.value for j in gup], axis=-1),
            down)


def scalar_curvature(g: MetricSpec, points, order: int = 2) -> np.ndarray:
    return _JetGeometry(g, points, order).scalar.value


def bach_two_ways(g: MetricSpec, points, order: int = 4):
    """Bach tensor via the Schouten form and via the divergence-of-Weyl
    form; the two independent evaluations must coincide for n = 4."""
    if g.dim != 4:
        raise DimensionError("bach_two_ways requires n = 4")
    geo = _JetGeometry(g, points, order)
    n = g.dim
    return (tensor_values(geo.bach(), (n, n)),
            tensor_values(geo.bach_divergence_of_weyl(), (n, n)))


# -- conformal machinery -----------------------------------------------------

def conformal_rescale(g: MetricSpec, c_expr) -> MetricSpec:
    """The metric c*g for a jet-evaluable positive scalar c."""

    def comps(x):
        c = c_expr(x)
        if not isinstance(c, Jet):
            c = Jet.constant(c, x[0].center, x[0].order)
        if np.any(c.value <= 0.0):
            raise DegenerateMetricError(
                "conformal factor is not positive at an evaluated point")
        base = g.components(x)
        n = g.dim
        return [[c * base[a][b] if isinstance(base[a][b], Jet)
                 else c * Jet.constant(base[a][b], x[0].center, x[0].order)
                 for b in range(n)] for a in range(n)]

    return MetricSpec(f"{g.name}*c", g.dim, g.signature, comps, g.domain)


def determinant_normalize(g: MetricSpec) -> MetricSpec:
    """ghat = |g|^{-1/n} g, the unit-determinant conformal representative."""

    def comps(x):
        n = g.dim
        base = g.components(x)
        G = [[base[a][b] if isinstance(base[a][b], Jet)
              else Jet.constant(base[a][b], x[0].center, x[0].order)
              for b in range(n)] for a in range(n)]
        det = det_jets(G)
        absdet = det if g.signature == RIEMANNIAN else -det
        if np.any(absdet.value <= 0.0):
            raise DegenerateMetricError(
                f"metric {g.name!r} has non-positive |det| at an evaluated point")
        s = jet_pow(absdet, -1.0 / n)
        return [[s * G[a][b] for b in range(n)] for a in range(n)]

    return MetricSpec(f"hat({g.name})", g.dim, g.signature, comps, g.domain)


def conformal_laplacian_jet(g: MetricSpec, u: Jet, geo: _JetGeometry = None,
                            points=None, order: int = None) -> Jet:
    """L_g u as a jet (value exact, higher coefficients lose two orders)."""
    if geo is None:
        geo = _JetGeometry(g, points, order if order is not None else u.order)
    n = g.dim
    half = jet_pow(geo.absdet, 0.5)
    flux = []
    for a in range(n):
        w = sum_jets([geo.ginv[a][b] * u.derivative(b) for b in range(n)])
        flux.append(half * w)
    div = sum_jets([flux[a].derivative(a) for a in range(n)])
    lap = -(div / half)
    coef = (n - 2) / (4.0 * (n - 1))
    return lap + coef * (geo.scalar * u)


def conformal_laplacian_apply(g: MetricSpec, u_expr, points,
                              order: int = 3) -> np.ndarray:
    """(L_g u)(x) with the positive-spectrum sign convention."""
    geo = _JetGeometry(g, points, order)
    u = u_expr(geo.x)
    if not isinstance(u, Jet):
        u = Jet.constant(u, geo.x[0].center, order)
    if u.order < 2:
        raise JetOrderError("conformal_laplacian_apply needs u jets of order >= 2")
    return conformal_laplacian_jet(g, u, geo=geo).value


def yamabe_scaling_residual(g: MetricSpec, f_expr, points,
                            order: int = 3) -> np.ndarray:
    """R(f^{p-2} g) - f^{1-p} (4(n-1)/(n-2)) L_g f with p = 2n/(n-2).

    This is an algebraic identity, so the residual vanishes (to rounding)
    for every positive f, not only for solutions of L_g f = 0.
    """
    n = g.dim
    p = 2.0 * n / (n - 2)
    geo = _JetGeometry(g, points, order)
    f = f_expr(geo.x)
    if np.any(f.value <= 0.0):
        raise DegenerateMetricError("Yamabe factor f must be positive")
    rescaled = conformal_rescale(g, lambda x: jet_pow(f_expr(x), p - 2.0))
    lhs = scalar_curvature(rescaled, points, order=max(2, order - 1))
    lf = conformal_laplacian_jet(g, f, geo=geo).value
    rhs = f.value ** (1.0 - p) * (4.0 * (n - 1) / (n - 2)) * lf
    return lhs - rhs


def ricci_gauge_remainder(g: MetricSpec, points, order: int = 3) -> np.ndarray:
    """Ricci minus its leading DeTurck part,
    R_ab - [-1/2 g^{cd} d_c d_d g_ab + 1/2 (d_a Gamma_b + d_b Gamma_a)].

    The remainder contains no second derivatives of g, which the
    frequency probes verify by scaling.
    """
    geo = _JetGeometry(g, points, order)
    n = g.dim
    gdown = geo.gamma_down(geo.gamma_up())
    lead = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            d2 = sum_jets([geo.ginv[c][d] * geo.g[a][b].derivative(c).derivative(d)
                           for c in range(n) for d in range(n)])
            sym = gdown[b].derivative(a) + gdown[a].derivative(b)
            lead[a][b] = lead[b][a] = -0.5 * d2 + 0.5 * sym
    ric = tensor_values(geo.ricci, (n, n))
    return ric - tensor_values(lead, (n, n))


def ricci_deturck_leading(g: MetricSpec, points, order: int = 3) -> np.ndarray:
    """The leading part alone (used by the frequency probes)."""
    geo = _JetGeometry(g, points, order)
    n = g.dim
    gdown = geo.gamma_down(geo.gamma_up())
    lead = [[None] * n for _ in range(n)]
    for a in range(n):
        for b in range(a, n):
            d2 = sum_jets([geo.ginv[c][d] * geo.g[a][b].derivative(c).derivative(d)
                           for c in range(n) for d in range(n)])
            sym = gdown[b].derivative(a) + gdown[a].derivative(b)
            lead[a][b] = lead[b][a] = -0.5 * d2 + 0.5 * sym
    return tensor_values(lead, (n, n))


def operator_coefficient_fields(g: MetricSpec, points):
    """Divergence-form coefficients |g|^{1/2} g^{ab}, weight |g|^{1/2} and
    conformal potential (n-2)/(4(n-1)) R(g), as plain value arrays.

    This is what the elliptic assembly consumes at every grid node.
    """
    geo = _JetGeometry(g, points, 2)
    n = g.dim
    half = np.sqrt(geo.absdet.value)
    K = np.empty(half.shape + (n, n))
    for a in range(n):
        for b in range(n):
            K[..., a, b] = geo.ginv[a][b].value * half
    q = (n - 2) / (4.0 * (n - 1)) * geo.scalar.value
    return K, half, q


# -- vectorized curvature from sampled derivative arrays ---------------------

def curvature_from_arrays(gv, dg, d2g=None):
    """Curvature algebra from plain derivative arrays (the finite-difference
    path used on sampled pulled-back metrics).

    gv  : (..., n, n)         metric components
    dg  : (..., n, n, n)      dg[..., d, a, b] = d_d g_ab
    d2g : (..., n, n, n, n)   d2g[..., c, d, a, b] = d_c d_d g_ab (optional)

    Returns a dict with gamma (Gamma^c_ab), gamma_up, gamma_down and, when
    second derivatives are supplied, ricci and scalar.  Mirrors the jet
    pipeline exactly; the two paths cross-check each other in the tests.
    """
    gv = np.asarray(gv, dtype=float)
    dg = np.asarray(dg, dtype=float)
    ginv = np.linalg.inv(gv)
    sym = (np.einsum("...abd->...abd", dg)
           + np.einsum("...bad->...abd", dg)
           - np.einsum("...dab->...abd", dg))
    gamma = 0.5 * np.einsum("...cd,...abd->...cab", ginv, sym)
    gamma_up = np.einsum("...bc,...abc->...a", ginv, gamma)
    gamma_down = np.einsum("...ab,...b->...a", gv, gamma_up)
    out = {"ginv": ginv, "gamma": gamma, "gamma_up": gamma_up,
           "gamma_down": gamma_down}
    if d2g is None:
        return out
    d2g = np.asarray(d2g, dtype=float)
    dginv = -np.einsum("...cp,...epq,...qd->...ecd", ginv, dg, ginv)
    dsym = (np.einsum("...eabd->...eabd", d2g)
            + np.einsum("...ebad->...eabd", d2g)
            - np.einsum("...edab->...eabd", d2g))
    dgamma = 0.5 * (np.einsum("...ecd,...abd->...ecab", dginv, sym)
                    + np.einsum("...cd,...eabd->...ecab", ginv, dsym))
    t1 = np.einsum("...ccab->...ab", dgamma)
    t2 = np.einsum("...accb->...ab", dgamma)
    tr = np.einsum("...ddc->...c", gamma)
    t3 = np.einsum("...cab,...c->...ab", gamma, tr)
    t4 = np.einsum("...dcb,...cad->...ab", gamma, gamma)
    ricci = t1 - t2 + t3 - t4
    out["ricci"] = ricci
    out["scalar"] = np.einsum("...ab,...ab->...", ginv, ricci)
    out["dgamma"] = dgamma
    return out
