"""Scenario-driven command-line front end.

A scenario is a flat key=value config with dotted section keys (see
docs/config-schema.md).  Running it produces a Report: a header with
wall-clock data (timestamp, per-check timings) and a deterministic body
whose checks carry (name, anchor, measured, tolerance, pass).  Identical
(config, seed) pairs produce byte-identical JSON bodies; timestamps and
timings are quarantined in the header so the numeric payload diffs clean.

Exit codes: 0 all checks pass, 1 checks failed, 2 config error,
3 runtime/solver error, 4 io error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import charts, curvature, lorentz, metrics, mobius, probes
from .errors import ConfcoordError, ConfigError
from .jets import Jet, jet_pow

SCHEMA = "confcoord-report/1"
EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3, 4

COMMANDS = ("identities", "chart", "boundary-chart", "converge", "lorentz",
            "probe", "mobius", "report")

DEFAULT_TOLERANCES = {
    "identity": 1e-9,
    "exact": 1e-10,
    "isothermal": 1e-11,
    "chart": 1e-8,
    "probe": 1e-5,
    "kelvin": 1e-10,
    "slope.gradient": 0.9,
    "slope.gauge": 0.9,
    "slope.mystique": 0.7,
    "slope.wave": 0.8,
}


def parse_config(text: str) -> dict:
    """Parse flat `key = value` lines with # comments into a dict."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {ln}: empty key")
        if key in out:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        out[key] = value
    return out


def _get(cfg, key, default=None, cast=str):
    if key not in cfg:
        if default is None and cast is not bool:
            return None
        return default
    raw = cfg[key]
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        if cast is list:
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        return cast(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {cast.__name__}")


@dataclass
class Scenario:
    command: str
    seed: int
    config: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: dict, seed_override=None) -> "Scenario":
        command = cfg.get("command")
        if command is None:
            raise ConfigError("missing required key 'command'")
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; choose from {COMMANDS}")
        seed = seed_override if seed_override is not None else \
            _get(cfg, "seed", 42, int)
        tolerances = dict(DEFAULT_TOLERANCES)
        for key, val in cfg.items():
            if key.startswith("tolerances."):
                name = key[len("tolerances."):]
                tolerances[name] = float(val)
        for name, val in tolerances.items():
            if val <= 0:
                raise ConfigError(f"tolerance {name!r} must be positive")
        return cls(command=command, seed=int(seed), config=dict(cfg),
                   tolerances=tolerances)

    def metric(self, default_name="perturbed-flat", default_dim=3):
        name = self.config.get("metric.name", default_name)
        params = {}
        dim = _get(self.config, "metric.dim", default_dim, int)
        if name in ("flat", "sphere-stereographic", "minkowski"):
            params["dim"] = dim
        elif name == "conformally-flat":
            params["dim"] = dim
            params["factor"] = self.config.get("metric.factor", "quartic-ramp")
        elif name in ("perturbed-flat", "perturbed-minkowski"):
            params["dim"] = dim
            params["seed"] = _get(self.config, "metric.seed", self.seed, int)
            params["amplitude"] = _get(self.config, "metric.amplitude", 0.05, float)
        return metrics.get_metric(name, **params)


@dataclass
class Check:
    name: str
    anchor: str
    measured: float
    tolerance: float
    passed: bool
    runtime_ms: float = 0.0

    def body_dict(self):
        return {"name": self.name, "anchor": self.anchor,
                "measured": float(self.measured),
                "tolerance": float(self.tolerance),
                "pass": bool(self.passed)}


class CheckList:
    def __init__(self):
        self.checks = []
        self._t0 = None

    def add_below(self, name, anchor, measured, tol):
        self._push(name, anchor, measured, tol, float(measured) <= tol)

    def add_above(self, name, anchor, measured, threshold):
        self._push(name, anchor, measured, threshold,
                   float(measured) >= threshold)

    def _push(self, name, anchor, measured, tol, ok):
        now = time.perf_counter()
        dt = 0.0 if self._t0 is None else (now - self._t0) * 1000.0
        self._t0 = now
        self.checks.append(Check(name, anchor, float(measured), float(tol),
                                 bool(ok), dt))

    def start(self):
        self._t0 = time.perf_counter()


@dataclass
class Report:
    scenario: Scenario
    checks: list
    header: dict

    @property
    def status(self) -> str:
        return "pass" if all(c.passed for c in self.checks) else "fail"

    def body(self) -> dict:
        return {
            "scenario": {"command": self.scenario.command,
                         "seed": self.scenario.seed,
                         "config": dict(sorted(self.scenario.config.items()))},
            "checks": [c.body_dict() for c in self.checks],
            "summary": {"total": len(self.checks),
                        "passed": sum(c.passed for c in self.checks),
                        "status": self.status},
        }

    def document(self) -> dict:
        return {"schema": SCHEMA, "header": self.header, "body": self.body()}

    def body_bytes(self) -> bytes:
        return json.dumps(self.body(), sort_keys=True,
                          separators=(",", ":")).encode()


# -- scenario runners ---------------------------------------------------------

def _relative(diff, scale):
    return float(np.max(np.abs(diff)) / max(float(np.max(np.abs(scale))), 1e-300))


def run_identities(sc: Scenario, checks: CheckList):
    rng = np.random.default_rng(sc.seed)
    tol = sc.tolerances["identity"]
    n_samples = _get(sc.config, "identities.samples", 20, int)

    for n in (3, 4):
        g = metrics.random_metric(n, rng)
        c = metrics.random_positive_scalar(n, rng)
        u = metrics.random_scalar(n, rng)
        pts = rng.uniform(-0.4, 0.4, size=(n_samples, n))
        cg = curvature.conformal_rescale(g, c)
        lhs = curvature.conformal_laplacian_apply(cg, u, pts)
        rhs_in = curvature.conformal_laplacian_apply(
            g, lambda x: jet_pow(c(x), (n - 2) / 4.0) * u(x), pts)
        cv = c(Jet.variables(pts, 0)).value
        rhs = cv ** (-(n + 2) / 4.0) * rhs_in
        checks.add_below(
            f"conformal-laplacian-covariance-n{n}",
            "L_cg u = c^{-(n+2)/4} L_g(c^{(n-2)/4} u)",
            _relative(lhs - rhs, lhs), tol)

        f = metrics.random_positive_scalar(n, rng)
        res = curvature.yamabe_scaling_residual(g, f, pts)
        p = 2.0 * n / (n - 2.0)
        scale = curvature.scalar_curvature(
            curvature.conformal_rescale(g, lambda x: jet_pow(f(x), p - 2.0)), pts)
        checks.add_below(
            f"yamabe-scaling-identity-n{n}",
            "R(f^{p-2}g) = f^{1-p}(4(n-1)/(n-2)) L_g f",
            _relative(res, scale), tol)

    # harmonic factor on flat space: exact zero scalar curvature
    gflat = metrics.flat(3)
    pts3 = rng.uniform(-0.4, 0.4, size=(n_samples, 3))
    rs = curvature.scalar_curvature(
        curvature.conformal_rescale(gflat, lambda x: (1.0 + 0.3 * x[0]) ** 4), pts3)
    checks.add_below("harmonic-yamabe-flat-zero", "R((1+0.3x)^4 delta) = 0",
                     float(np.max(np.abs(rs))), sc.tolerances["exact"])

    # conformal weights
    g3 = metrics.random_metric(3, rng)
    c3 = metrics.random_positive_scalar(3, rng)
    b3 = curvature.curvature_bundle(g3, pts3, depth="full")
    b3c = curvature.curvature_bundle(curvature.conformal_rescale(g3, c3), pts3,
                                     depth="full")
    checks.add_below("cotton-conformal-invariance-n3", "C(cg) = C(g)",
                     _relative(b3c.cotton - b3.cotton, b3.cotton), tol)

    g4 = metrics.random_metric(4, rng)
    c4 = metrics.random_positive_scalar(4, rng)
    pts4 = rng.uniform(-0.4, 0.4, size=(n_samples, 4))
    cv4 = c4(Jet.variables(pts4, 0)).value
    b4 = curvature.curvature_bundle(g4, pts4, depth="full")
    b4c = curvature.curvature_bundle(curvature.conformal_rescale(g4, c4), pts4,
                                     depth="full")
    checks.add_below("weyl-conformal-weight-n4", "W(cg) = c W(g)",
                     _relative(b4c.weyl - cv4[:, None, None, None, None] * b4.weyl,
                               b4.weyl), tol)
    checks.add_below("bach-conformal-weight-n4", "B(cg) = c^{-1} B(g)",
                     _relative(b4c.bach - b4.bach / cv4[:, None, None], b4.bach),
                     tol)

    # structural invariants
    gv = g4.values(pts4)
    ginv = np.linalg.inv(gv)
    checks.add_below("weyl-trace-free", "g^{bd} W_abcd = 0",
                     _relative(np.einsum("...bd,...abcd->...ac", ginv, b4.weyl),
                               b4.riemann), 1e-10)
    bianchi = (b4.riemann + np.einsum("...bcad->...abcd", b4.riemann)
               + np.einsum("...cabd->...abcd", b4.riemann))
    checks.add_below("first-bianchi", "R_abcd + R_bcad + R_cabd = 0",
                     _relative(bianchi, b4.riemann), 1e-11)
    checks.add_below("cotton-antisymmetry", "C_abc = -C_bac",
                     _relative(b3.cotton + np.einsum("...bac->...abc", b3.cotton),
                               b3.cotton), 1e-14)
    g3v = g3.values(pts3)
    checks.add_below("cotton-trace", "g^{bc} C_abc = 0",
                     _relative(np.einsum("...bc,...abc->...a",
                                         np.linalg.inv(g3v), b3.cotton),
                               b3.cotton), 1e-10)
    checks.add_below("bach-symmetry", "B_ab = B_ba",
                     _relative(b4.bach - np.swapaxes(b4.bach, -1, -2), b4.bach),
                     tol)
    checks.add_below("bach-trace-free", "g^{ab} B_ab = 0",
                     _relative(np.einsum("...ab,...ab->...", ginv, b4.bach),
                               b4.bach), tol)

    # two independent Bach evaluations
    bs, bw = curvature.bach_two_ways(g4, pts4[:4])
    checks.add_below("bach-two-route-agreement",
                     "div div P form = div div W + R.W/2 form",
                     _relative(bs - bw, bs), 1e-8)

    # contracted Christoffel two-route agreement
    geo = curvature._JetGeometry(g3, pts3, 2)
    low = np.stack([j.value for j in geo.gamma_down(geo.gamma_up())], axis=-1)
    alt = np.stack([j.value for j in geo.gamma_down_contracted_form()], axis=-1)
    checks.add_below("contracted-christoffel-two-route",
                     "g_ab Gamma^b = g^{bc} d_b g_ac - d_a log|g| / 2",
                     _relative(low - alt, low), 1e-11)

    # isothermal gauge
    cexpr = metrics.random_positive_scalar(3, rng)
    iso = charts.isothermal_gauge_check(cexpr, 3, pts3)
    gam = curvature.christoffel(metrics.conformally_flat(3, "exp-linear"), pts3)[2]
    checks.add_below("isothermal-gauge", "Gamma_a(c delta) = 2 d_a log c^{(2-n)/4}",
                     _relative(iso, gam), sc.tolerances["isothermal"])

    # round sphere scalar curvature
    gs = metrics.sphere_stereographic(3)
    spts = rng.uniform(-0.8, 0.8, size=(10, 3))
    rsph = curvature.scalar_curvature(gs, spts)
    checks.add_below("sphere-scalar-curvature", "R = n(n-1) = 6",
                     float(np.max(np.abs(rsph - 6.0))), 1e-9)


def run_chart(sc: Scenario, checks: CheckList):
    g = sc.metric(default_name="flat")
    eps = _get(sc.config, "chart.epsilon", 0.2, float)
    res = _get(sc.config, "chart.resolution", 33, int)
    tol = _get(sc.config, "chart.solver_tol", 1e-11, float)
    normalize = _get(sc.config, "chart.normalize", False, bool)
    cr = charts.build_interior_chart(g, eps=eps, resolution=res, tol=tol,
                                     normalize=normalize)
    n = g.dim
    target = (cr.normalization[1] if normalize else np.eye(n))
    checks.add_below("chart-jacobian-at-center", "DZ(0) = df^k(0) rows",
                     float(np.max(np.abs(cr.jacobian_at_center() - target))),
                     sc.tolerances["chart"])
    checks.add_below("chart-denominator-positive", "f > 0 on the chart",
                     0.0 if np.all(cr.f.samples > 0) else 1.0, 0.5)
    rng = np.random.default_rng(sc.seed)
    zq = rng.uniform(-0.2 * eps, 0.2 * eps, size=(50, n))
    x, ok = charts.invert_chart_batch(cr, zq)
    zz, _ = charts.interp_cubic(cr.chart, cr.z_stack(), x)
    checks.add_below("chart-inversion-roundtrip", "Z(Z^{-1}(z)) = z",
                     float(np.max(np.abs(zz - zq))), 1e-10)
    rr = charts.gauge_residuals(cr)
    checks.add_below("chart-gauge-residual-r1", "Gamma_a = 2 d_a log f",
                     rr.max_r1, _get(sc.config, "chart.r1_bound", 1.0, float))


def run_boundary_chart(sc: Scenario, checks: CheckList):
    g = sc.metric(default_name="conformally-flat")
    eps = _get(sc.config, "chart.epsilon", 0.2, float)
    res = _get(sc.config, "chart.resolution", 25, int)
    cr = charts.build_boundary_chart(g, eps=eps, resolution=res)
    n = g.dim
    face = cr.chart.gamma_face_mask()
    zn = cr.Z[-1].samples[face]
    checks.add_below("boundary-normal-vanishes", "Z^n = 0 on the face",
                     float(np.max(np.abs(zn))), 0.0 + 1e-300)
    pts = cr.chart.nodes().reshape(cr.chart.shape + (n,))
    worst = max(float(np.max(np.abs(cr.Z[k].samples[face]
                                    - pts[face][:, k]))) for k in range(n - 1))
    checks.add_below("boundary-tangential-trace", "Z^k = x^k on the face",
                     worst, 10.0 * 1e-10)
    checks.add_below("boundary-jacobian-at-center", "DZ(0) = I",
                     float(np.max(np.abs(cr.jacobian_at_center() - np.eye(n)))),
                     _get(sc.config, "chart.dz_bound", 0.05, float))


def _slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def run_converge(sc: Scenario, checks: CheckList):
    g = sc.metric(default_name="conformally-flat")
    eps_list = _get(sc.config, "sweep.epsilons", None, list) or [0.2, 0.1, 0.05]
    res_list = _get(sc.config, "sweep.resolutions", None, list) or [13, 25, 49]
    res_list = [int(r) for r in res_list]
    if len(eps_list) < 2 or len(eps_list) != len(res_list):
        raise ConfigError("sweep.epsilons and sweep.resolutions must align "
                          "with >= 2 levels")
    grads, r1s, r4s = [], [], []
    for eps, res in zip(eps_list, res_list):
        cr = charts.build_interior_chart(g, eps=eps, resolution=res)
        rr = charts.gauge_residuals(cr)
        grads.append(np.max(np.abs(cr.prescribed_gradients - np.eye(g.dim))))
        r1s.append(rr.max_r1)
        r4s.append(rr.max_r4)
    checks.add_above("prescribed-gradient-rate", "|df^sigma(0) - sigma| = O(eps)",
                     _slope(eps_list, grads), sc.tolerances["slope.gradient"])
    checks.add_above("gauge-residual-rate", "Gamma_a - 2 d_a log f -> 0",
                     _slope(eps_list, r1s), sc.tolerances["slope.gauge"])
    checks.add_above("scalar-gauge-identity-rate",
                     "g^{ab} d_a Gamma_b = (n-2)/(2(n-1)) R + Gamma.Gamma/2",
                     _slope(eps_list, r4s), sc.tolerances["slope.mystique"])


def run_lorentz(sc: Scenario, checks: CheckList):
    gmink = metrics.minkowski(3)
    half = _get(sc.config, "slab.half_width", 1.0, float)
    dur = _get(sc.config, "slab.duration", 0.2, float)
    res0 = _get(sc.config, "slab.resolution", 25, int)
    slab = lorentz.make_slab(gmink, half, res0, dur)
    wc = lorentz.build_wave_chart(gmink, slab)
    checks.add_below("minkowski-initial-jacobian", "DZ = I on the surface",
                     wc.max_dz_defect, 1e-12)
    checks.add_below("minkowski-gauge-residual", "Gamma_a = 2 d_a log f",
                     wc.gauge_residual, 1e-10)
    gp = sc.metric(default_name="perturbed-minkowski")
    levels = _get(sc.config, "slab.levels", 2, int)
    vals, hs = [], []
    res = res0
    for _ in range(levels):
        slab_p = lorentz.make_slab(gp, half, res, dur)
        wcp = lorentz.build_wave_chart(gp, slab_p)
        vals.append(wcp.gauge_residual)
        hs.append(slab_p.spatial.spacing)
        res = 2 * res - 1
    checks.add_below("perturbed-initial-jacobian", "DZ = I on the surface",
                     wcp.max_dz_defect, sc.tolerances["chart"])
    if levels >= 2:
        checks.add_above("wave-gauge-residual-rate", "Gamma_a - 2 d_a log f -> 0",
                         _slope(hs, vals), sc.tolerances["slope.wave"])


def run_probe(sc: Scenario, checks: CheckList):
    k = _get(sc.config, "probe.k", 8.0, float)
    eps = _get(sc.config, "probe.epsilon", 1e-4, float)
    tol = sc.tolerances["probe"]
    checks.add_below("wave-parity-bookkeeping", "sum d^2 sin = -k^2 |xi|^2 sin",
                     probes.parity_self_test(k), 1e-12)
    xi4 = np.array([1.0, 0, 0, 0])
    h4 = probes.tt_basis(xi4, 4)[0]
    r = probes.tt_symbol_probe_bach(xi4, h4, k=k, eps=eps)
    checks.add_below("bach-symbol-stated-constant",
                     "sigma(B)h = -1/2 |xi|^4 h (stated)",
                     _relative(r["measured"] - r["stated_target"],
                               r["stated_target"]), tol)
    checks.add_below("bach-symbol-measured-constant",
                     "sigma(B)h = 1/(2(n-2)) |xi|^4 h (cross-validated)",
                     _relative(r["measured"] - r["measured_target"],
                               r["measured_target"]), tol)
    r2 = probes.tt_symbol_probe_bach(xi4, h4, k=2 * k, eps=eps)
    checks.add_below("bach-symbol-k-doubling", "k-independence of the action",
                     _relative(r2["measured"] - r["measured"], r["measured"]),
                     1e-4)
    xi3 = np.array([1.0, 0, 0])
    h3 = probes.tt_basis(xi3, 3)[0]
    c = probes.tt_symbol_probe_cotton(xi3, h3, k=k, eps=eps)
    checks.add_below("cotton-symbol-constant",
                     "sigma(C)h = |xi|^2 (xi_a h_bc - xi_b h_ac) / (2(n-2))",
                     _relative(c["measured"] - c["target"], c["target"]), tol)
    fam = probes.PerturbationFamily(3, np.diag([0.0, 1.0, -1.0]), xi3,
                                    (8.0, 16.0, 32.0), amplitude=1.0,
                                    amplitude_rule="one-over-k")
    fp = probes.frequency_probe("ricci_remainder", fam)
    checks.add_below("ricci-leading-frequency-slope", "leading part = O(k)",
                     abs(fp["leading_slope"] - 1.0), 0.1)
    checks.add_below("ricci-remainder-frequency-slope",
                     "remainder contains no second derivatives",
                     max(fp["remainder_slope"], 0.0), 0.2)
    sl = probes.frequency_probe("scalar_linearization", fam)
    checks.add_below("scalar-curvature-linearization",
                     "dR(h) = -k^2 (xi.h.xi - |xi|^2 tr h)",
                     sl["max_rel_err"], 1e-4)
    rng = np.random.default_rng(sc.seed)
    checks.add_above("cotton-symbol-injectivity",
                     "xi_a h_bc - xi_a h delta_bc / n - xi_b h_ac != 0",
                     probes.cotton_symbol_injectivity(rng), 1e-6)


def run_mobius(sc: Scenario, checks: CheckList):
    rng = np.random.default_rng(sc.seed)
    tol = sc.tolerances["kelvin"]
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    F = mobius.MobiusMap([mobius.inversion()], 3)
    G = mobius.MobiusMap([mobius.translation([0.4, -0.1, 0.2]),
                          mobius.rotation(q), mobius.dilation(1.5),
                          mobius.inversion()], 3)
    pts = rng.uniform(0.5, 2.0, size=(50, 3)) * \
        rng.choice([-1.0, 1.0], size=(50, 3))
    checks.add_below("mobius-conformality", "DF^T DF = c(x) I",
                     max(mobius.conformality_defect(F, pts),
                         mobius.conformality_defect(G, pts)), 1e-12)
    checks.add_below("mobius-composition-factor", "c_FG = (c_F o G) c_G",
                     mobius.composition_factor_check(F, G, pts), 1e-12)
    res1 = mobius.kelvin_pullback_residual(F, lambda y: 0.0 * y[0] + 1.0, pts)
    res2 = mobius.kelvin_pullback_residual(F, lambda y: y[0], pts)
    checks.add_below("kelvin-inversion-harmonic",
                     "L_delta(c^{(n-2)/4} u o F) = 0",
                     float(max(np.max(np.abs(res1)), np.max(np.abs(res2)))), tol)
    chk = mobius.pullback_chart_check(
        G, [lambda y, k=k: y[k] for k in range(3)],
        lambda y: 0.0 * y[0] + 2.0, pts)
    checks.add_below("mobius-chart-pullback",
                     "F pulls quotient charts back to quotient charts",
                     chk["max_residual"], tol)


def run_report(sc: Scenario, checks: CheckList):
    run_identities(sc, checks)
    run_probe(sc, checks)
    run_mobius(sc, checks)


RUNNERS = {
    "identities": run_identities,
    "chart": run_chart,
    "boundary-chart": run_boundary_chart,
    "converge": run_converge,
    "lorentz": run_lorentz,
    "probe": run_probe,
    "mobius": run_mobius,
    "report": run_report,
}


def run_scenario(cfg, seed_override=None) -> Report:
    """Execute a parsed (or raw-text) scenario config deterministically.

    Check failures are recorded in the report, never raised.
    """
    if isinstance(cfg, str):
        cfg = parse_config(cfg)
    sc = Scenario.from_config(cfg, seed_override)
    checks = CheckList()
    checks.start()
    RUNNERS[sc.command](sc, checks)
    header = {
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "host": platform.node(),
        "python": platform.python_version(),
        "timings_ms": {c.name: round(c.runtime_ms, 3) for c in checks.checks},
    }
    return Report(scenario=sc, checks=checks.checks, header=header)


def emit_report(report: Report, formats, out_dir) -> list:
    """Write report files; returns the written paths.

    JSON carries the full document (header + body); CSV flattens the
    deterministic body, one row per check.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    stem = os.path.join(out_dir, f"{report.scenario.command}")
    if "json" in formats:
        path = stem + ".json"
        with open(path, "w") as fh:
            json.dump(report.document(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)
    if "csv" in formats:
        path = stem + ".csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "anchor", "measured", "tolerance", "pass"])
            for c in report.checks:
                writer.writerow([c.name, c.anchor, repr(c.measured),
                                 repr(c.tolerance), c.passed])
        written.append(path)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="confcoord",
        description="conformal-coordinate workbench scenario runner")
    parser.add_argument("--config", required=True, help="scenario config file")
    parser.add_argument("--out", default=None, help="report output directory")
    parser.add_argument("--format", default="json",
                        help="comma-separated: json,csv")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    threads = os.environ.get("CONFCOORD_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                print("CONFCOORD_THREADS must be >= 1", file=sys.stderr)
                return EXIT_CONFIG
        except ValueError:
            print("CONFCOORD_THREADS must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    # orchestration is single-threaded; the cap is honored trivially

    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run_scenario(text, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfcoordError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.verbose or not args.out:
        for c in report.checks:
            flag = "PASS" if c.passed else "FAIL"
            print(f"[{flag}] {c.name}: measured={c.measured:.3e} "
                  f"tol={c.tolerance:.3e}  ({c.anchor})")
        print(f"status: {report.status} "
              f"({sum(c.passed for c in report.checks)}/{len(report.checks)})")
    if args.out:
        try:
            paths = emit_report(report, args.format.split(","), args.out)
        except OSError as exc:
            print(f"io error: {exc}", file=sys.stderr)
            return EXIT_IO
        if args.verbose:
            for p in paths:
                print("wrote", p)
    return EXIT_OK if report.status == "pass" else EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())
