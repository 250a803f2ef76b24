"""Named verification checks producing reproducible certificates."""
from __future__ import annotations

import csv
import io
import json
import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .collision import (caflisch_integral, inverse_square_moment, kernel_moment, maxwellian_ratios, moment_sweep,
                        schur_test)
from .config import RunConfig
from .errors import BudgetExceeded, KinlabError, UnknownCheck
from .geometry.curvature import rolling_radii
from .geometry.distance import distances
from .geometry.domains import Ball, random_directions
from .geometry.integrals import (ball_distance_integral, ball_surface_integral, chord_frac_integral,
                                 chord_frac_integrals, distance_integral, surface_singular_integral)
from .geometry.planar import curvature_exit_check, distance_comparison_samples
from .geometry.rays import exit_records, sample_phase_points
from .phase import constant, gaussian_velocity, separable, smooth_bump
from .seminorm import equivalence_ratio, multiplier_decay_check, slobodeckij_multi
from .transport import (J_function, SK_function, change_of_variable_check, cone_jacobian, picard_cost,
                        picard_function, sk_square_bound_check)

STATUSES = ("pass", "fail", "flagged")
GEOM_TOL = 1e-8
EPS_DISTANCE = (1.0, 0.5, 0.2, 0.1)
EPS_CHORD = (0.2, 0.1, 0.05, 0.025)
SLOPE_TOL = 0.15
TREND_S = (0.3, 0.4, 0.45)
TREND_FACTOR = 2.0
MAXWELL_RATES = (0.05, 0.1, 0.2)


@dataclass(frozen=True)
class Certificate:
    """Outcome of one named check; ``status`` is ``fail`` exactly when ``violations > 0``."""

    check_name: str
    status: str
    measured_constant: float | None
    violations: int
    config_hash: str
    seed: int
    details: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")
        if (self.status == "fail") != (self.violations > 0):
            raise ValueError("status is 'fail' exactly when violations > 0")

    def to_json(self) -> dict:
        return {"check_name": self.check_name, "status": self.status,
                "measured_constant": _clean(self.measured_constant), "violations": self.violations,
                "config_hash": self.config_hash, "seed": self.seed, "details": _clean(self.details)}

    def json_line(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def csv_row(self):
        c = self.measured_constant
        return [self.check_name, self.status, "" if c is None else repr(float(c)), self.violations, self.seed]

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        return cls(d["check_name"], d["status"], d["measured_constant"], int(d["violations"]), d["config_hash"],
                   int(d["seed"]), d.get("details", {}))


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite numbers to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


@dataclass
class Outcome:
    constant: float | None
    violations: int
    flagged: bool = False
    details: dict = field(default_factory=dict)


class Context:
    """Objects built once from a config and shared (read-only) by the checks."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.budgets = config.budgets

    @cached_property
    def domain(self):
        return self.config.build_domain()

    @cached_property
    def model(self):
        return self.config.build_model()

    @cached_property
    def data(self):
        return self.config.build_boundary()

    @cached_property
    def quad(self):
        return self.config.build_quadrature("quad_nodes")

    @cached_property
    def sweep_quad(self):
        return self.config.build_quadrature("sweep_quad_nodes")

    @cached_property
    def radii(self):
        return rolling_radii(self.domain)

    @cached_property
    def sweep_domain(self):
        """The domain dilated to diameter 1, so seminorm weights are monotone in ``s``."""
        return self.domain.scaled(1.0 / self.domain.diameter)

    @property
    def canonical_kernel(self) -> bool:
        m = self.model
        return m.gamma == 1.0 and m.decay_rate == 0.125

    def n(self, key) -> int:
        return int(self.budgets[key])


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------- geometry

def _proj_distance(ctx, rng):
    D = ctx.domain
    x, v, rec = sample_phase_points(D, rng, ctx.n("geometry_samples"))
    d = distances(D, x)
    lhs = np.linalg.norm(x - rec.q_minus, axis=1)
    rhs = d / rec.n_minus
    viol = int(np.sum(~(lhs >= rhs - GEOM_TOL)))
    return Outcome(float(np.min(lhs / rhs)), viol, details={"samples": x.shape[0], "tolerance": GEOM_TOL})


def _pair_points(D, rng, n):
    """Interior pairs ``(x, y)`` with ``|x - y|`` log-uniform over six decades."""
    xs, ys = [], []
    got = 0
    while got < n:
        m = n - got
        x = D.sample_interior(rng, m)
        r = D.diameter * 10.0 ** rng.uniform(-6, 0, m)
        y = x + r[:, None] * random_directions(rng, m)
        ok = D.phi(y) < -D.tol_surface
        xs.append(x[ok])
        ys.append(y[ok])
        got += int(ok.sum())
    return np.concatenate(xs)[:n], np.concatenate(ys)[:n]


def _proj_distance2(ctx, rng):
    D = ctx.domain
    n = ctx.n("geometry_samples")
    x, y = _pair_points(D, rng, n)
    v = random_directions(rng, n)
    rx, ry = exit_records(D, x, v), exit_records(D, y, v)
    ok = (rx.n_minus >= 1e-6) & (ry.n_minus >= 1e-6)
    lx = np.linalg.norm(x - rx.q_minus, axis=1)
    ly = np.linalg.norm(y - ry.q_minus, axis=1)
    # order each pair so the first point has the shorter backward chord
    swap = lx > ly
    N = np.where(swap, ry.n_minus, rx.n_minus)
    dxy = np.linalg.norm(x - y, axis=1)
    dq = np.linalg.norm(rx.q_minus - ry.q_minus, axis=1)
    a = dq <= dxy / N + GEOM_TOL
    b = np.abs(lx - ly) <= 2 * dxy / N + GEOM_TOL
    viol = int(np.sum(ok & ~(a & b)))
    ratio = np.where(ok, dq * N / dxy, 0.0)
    return Outcome(float(ratio.max()), viol, details={"pairs": int(ok.sum()), "tolerance": GEOM_TOL})


def _chord_bound(ctx, rng):
    D = ctx.domain
    x, v, rec = sample_phase_points(D, rng, ctx.n("geometry_samples"))
    chord = np.linalg.norm(rec.q_minus - rec.q_plus, axis=1)
    ratio = chord / rec.n_minus
    C = 2.0 * ctx.radii.R1
    viol = int(np.sum(~(chord <= C * rec.n_minus + GEOM_TOL)))
    det = {"C_2R1": C, "samples": x.shape[0]}
    if isinstance(D, Ball):
        # equality case of the enclosing-sphere argument
        err = float(np.max(np.abs(chord - C * rec.n_minus)))
        det["ball_equality_error"] = err
        viol += int(err > 1e-9)
    return Outcome(float(ratio.max()), viol, details=det)


def _distance_comparison(ctx, rng):
    lhs, rhs = distance_comparison_samples(rng, ctx.n("chord_samples"))
    viol = int(np.sum(~(lhs >= rhs - 1e-12)))
    pos = rhs > 0
    return Outcome(float(np.min(lhs[pos] / rhs[pos])), viol, details={"samples": lhs.size})


def _graded_points(D, rng, n):
    """Interior points whose depth fraction is log-uniform in ``[1e-6, 1]``."""
    w = random_directions(rng, n)
    c = D.interior_point
    R = D.forward_exit(np.broadcast_to(c, w.shape), w)
    u = 10.0 ** rng.uniform(-6, 0, n)
    return c + ((1 - u) * R)[:, None] * w


def _frac_chord_1(ctx, rng):
    D = ctx.domain
    n = ctx.n("chord_samples")
    y = _graded_points(D, rng, n)
    vh = random_directions(rng, n)
    vals = chord_frac_integrals(D, y, vh, 0.5)
    oracle = chord_frac_integral(Ball((1.0,)), [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5)
    viol = int(np.sum(~np.isfinite(vals))) + int(abs(oracle - 4.0) > 1e-6)
    return Outcome(float(np.max(vals)), viol, details={"chords": n, "diametric_oracle": oracle})


def _frac_chord_2(ctx, rng):
    D = ctx.domain
    n = max(ctx.n("chord_samples") // 4, 1)
    y = _graded_points(D, rng, n)
    vh = random_directions(rng, n)
    dy = distances(D, y)
    q = []
    for eps in EPS_CHORD:
        vals = chord_frac_integrals(D, y, vh, 1.0 - eps)
        q.append(float(np.max(eps * vals * dy ** (0.5 - eps))))
    slope = _slope(EPS_CHORD, q)
    viol = int(not all(math.isfinite(v) for v in q)) + int(abs(slope) > SLOPE_TOL)
    return Outcome(max(q), viol, details={"eps": EPS_CHORD, "max_scaled": q, "slope": slope, "chords": n})


def _distance_integral(ctx, rng):
    D = ctx.domain
    n = ctx.n("mc_samples")
    vals, errs, z = [], [], []
    is_ball = isinstance(D, Ball)
    for eps in EPS_DISTANCE:
        val, se = distance_integral(D, eps, n, rng)
        vals.append(val)
        errs.append(se)
        # at eps = 1 the estimator has zero variance; floor the error at rounding level
        se = max(se, 1e-12 * abs(val))
        if is_ball:
            z.append(abs(val - ball_distance_integral(eps, D.params[0])) / se)
        elif eps == 1.0:
            z.append(abs(val - D.volume) / se)
    viol = sum(int(not zz <= 3.0) for zz in z)
    return Outcome(vals[0], viol, details={"eps": EPS_DISTANCE, "values": vals, "stderr": errs, "z": z,
                                           "slope": _slope(EPS_DISTANCE, vals)})


def _surface_integral(ctx, rng):
    D = ctx.domain
    m = ctx.n("surface_samples")
    c = D.interior_point
    center_val, _ = surface_singular_integral(D, c, m)
    viol = 0
    det = {"center_value": center_val}
    if isinstance(D, Ball):
        det["center_rel_error"] = abs(center_val / (4 * math.pi) - 1)
        viol += int(det["center_rel_error"] > 5e-3)
    scale = min(1.0, ctx.radii.r1)
    ds = [0.3 * scale, 0.1 * scale, 0.03 * scale, 0.01 * scale]
    q = D.boundary_from_directions(random_directions(rng, 4))
    nq = D.normal(q)
    ratios, values = [], []
    for d in ds:
        x = q - d * nq
        dx = distances(D, x)
        vals = np.array([surface_singular_integral(D, xi, m)[0] for xi in x])
        values.append(float(vals.max()))
        ratios.append(float(np.max(vals / (np.abs(np.log(dx)) + 1))))
    # fit C on the three largest distances with a 25% margin, test every point
    C = 1.25 * max(ratios[:3])
    viol += sum(int(r > C) for r in ratios)
    det.update({"d": ds, "values": values, "ratios": ratios, "C_fit": C})
    return Outcome(max(ratios), viol, details=det)


def _curvature_2d(ctx, rng):
    viol, valid, worst = curvature_exit_check(ctx.domain, rng, ctx.n("curvature_configs"))
    return Outcome(float(worst) if valid else None, int(viol), details={"valid_configs": int(valid)})


def _cone_jacobian(ctx, rng):
    rep = cone_jacobian(ctx.domain, ctx.n("cov_samples"), rng)
    z = rep.z_score
    return Outcome(rep.value, int(not z <= 3.0), details={"exact": rep.exact, "stderr": rep.stderr, "z": z})


# ---------------------------------------------------------------- collision

def _moment_check(ctx, power):
    model = ctx.model
    rows = moment_sweep(model)
    fine = moment_sweep(model, refine=2)
    col = 1 if power == 1 else 2
    expo = (2 - model.gamma) if power == 1 else (3 - 2 * model.gamma)
    vals = [r[col] for r in rows]
    bound = [r[col] * (1 + r[0]) ** expo for r in rows]
    drift = max(abs(f[col] / r[col] - 1) for r, f in zip(rows, fine))
    viol = int(not all(math.isfinite(b) for b in bound)) + int(drift > 1e-4)
    det = {"speeds": [r[0] for r in rows], "moments": vals, "weighted": bound, "refinement_drift": drift}
    if ctx.canonical_kernel:
        exact = (8 * math.pi * model.kernel_scale if power == 1
                 else 4 * math.pi * math.sqrt(math.pi / 2) * model.kernel_scale**2)
        det["oracle_rel_error"] = abs(vals[0] / exact - 1)
        viol += int(det["oracle_rel_error"] > 1e-3)
    return Outcome(max(bound), viol, details=det)


def _kernel_l1(ctx, rng):
    return _moment_check(ctx, 1)


def _kernel_l2(ctx, rng):
    return _moment_check(ctx, 2)


def _caflisch(ctx, rng):
    speeds = (0.0, 1.0, 2.0, 4.0)
    vals = [caflisch_integral([s, 0, 0], 1.0, 1.0, 1.0) for s in speeds]
    weighted = [(1 + s) * v for s, v in zip(speeds, vals)]
    a2 = [caflisch_integral([1.0, 0, 0], 1.0, b, 1.0) for b in (0.5, 1.0, 2.0, 4.0)]
    oracle_err = abs(vals[0] / (4 * math.pi * math.sqrt(math.pi / 8)) - 1)
    viol = int(oracle_err > 1e-6) + int(not all(x > y for x, y in zip(a2, a2[1:])))
    viol += int(not all(math.isfinite(w) for w in weighted))
    return Outcome(max(weighted), viol, details={"speeds": speeds, "values": vals, "weighted": weighted,
                                                 "a2_values": a2, "oracle_rel_error": oracle_err})


def _inverse_vsq(ctx, rng):
    model = ctx.model
    speeds = (0.0, 1.0, 2.0, 4.0, 8.0)
    vals = [inverse_square_moment(model, [s, 0, 0], 1.0) for s in speeds]
    viol = int(not all(math.isfinite(v) for v in vals))
    det = {"speeds": speeds, "values": vals}
    if ctx.canonical_kernel:
        det["oracle_rel_error"] = abs(vals[0] / (4 * math.pi**1.5 * model.kernel_scale) - 1)
        viol += int(det["oracle_rel_error"] > 1e-6)
    return Outcome(max(vals), viol, details=det)


def _maxwellian_preserve(ctx, rng):
    model, quad = ctx.model, ctx.quad
    speeds = np.linspace(0.0, model.vmax - 1.0, 29)
    sups, drift = [], []
    for a in MAXWELL_RATES:
        r1 = maxwellian_ratios(model, a, speeds, quad)
        r2 = maxwellian_ratios(model, a, speeds, quad.refined(2))
        sups.append(float(r1.max()))
        drift.append(float(abs(r2.max() / r1.max() - 1)))
    viol = sum(int(not (math.isfinite(s) and d <= 0.02)) for s, d in zip(sups, drift))
    return Outcome(max(sups), viol, details={"rates": MAXWELL_RATES, "sup_ratio": sups, "doubling_drift": drift})


def _schur_klp(ctx, rng):
    rep = schur_test(ctx.model)
    return Outcome(rep.spectral_norm, int(not rep.holds),
                   details={"schur_bound": rep.schur_bound, "continuum_sup": rep.continuum_sup, "nodes": rep.nodes})


# ---------------------------------------------------------------- transport

def _sk_square(ctx, rng):
    D = ctx.domain
    h = constant(1.0, domain=D)
    rep = sk_square_bound_check(D, ctx.model, ctx.quad, h, ctx.n("sk_samples"), rng)
    return Outcome(max(rep.max_ratio_sk, rep.max_ratio_ks), rep.violations,
                   details={"C": rep.constant, "max_ratio_sk": rep.max_ratio_sk, "max_ratio_ks": rep.max_ratio_ks,
                            "samples": rep.samples})


def _cov(variant):
    def run(ctx, rng):
        rep = change_of_variable_check(ctx.domain, variant, ctx.n("cov_samples"), rng)
        z = rep.z_score
        viol = rep.membership_violations + int(not z <= 3.0) + int(not rep.roundtrip_error <= 1e-10)
        return Outcome(rep.lhs, viol, details={"lhs": rep.lhs, "lhs_stderr": rep.lhs_stderr, "rhs": rep.rhs,
                                               "rhs_stderr": rep.rhs_stderr, "z": z,
                                               "roundtrip_error": rep.roundtrip_error,
                                               "membership_violations": rep.membership_violations})
    return run


# ---------------------------------------------------------------- seminorm

def _multiplier_decay(ctx, rng):
    rep = multiplier_decay_check(ctx.model)
    viol = int(not rep.max_rel_deviation <= 1e-8) + int(not abs(rep.nu0_exponent + 1 / 3) <= 1e-6)
    return Outcome(rep.expected, viol, details={"products": rep.products, "max_rel_deviation": rep.max_rel_deviation,
                                                "nu0_exponent": rep.nu0_exponent})


EQUIV_FAMILY = ((0.0, 0.5), (0.1, 0.4), (-0.2, 0.35), (0.25, 0.3), (0.0, 0.25))  # (x offset, width) in units of r1
EQUIV_BRACKET = 1.5


def _sobolev_equivalence(ctx, rng):
    D = ctx.domain
    r = min(ctx.radii.r1, 1.0)
    s = 0.5
    n = ctx.n("equivalence_samples")
    grid = int(ctx.budgets["grid"])
    seed = int(rng.integers(2**31))
    ratios = []
    for k, (off, w) in enumerate(EQUIV_FAMILY):
        c = D.interior_point + np.array([off * r, 0.0, 0.0])
        f = separable(smooth_bump(c, w * r), gaussian_velocity(1.0), domain=Ball((w * r,), c))
        ratios.append(equivalence_ratio(f, s, n, seed + k, grid=grid))
    # homogeneity and resolution on the first member
    c0 = D.interior_point
    f0 = separable(smooth_bump(c0, 0.5 * r), gaussian_velocity(1.0), domain=Ball((0.5 * r,), c0))
    doubled = equivalence_ratio(f0.scaled(2.0), s, n, seed, grid=grid)
    coarse = equivalence_ratio(f0, s, n, seed, grid=grid // 2)
    homog = abs(doubled / ratios[0] - 1)
    resol = abs(coarse / ratios[0] - 1)
    lo, hi = min(ratios), max(ratios)
    # bracket: the family spread must stay within a fixed factor
    viol = int(homog > 1e-9) + int(resol > 0.02) + int(hi / lo > EQUIV_BRACKET)
    return Outcome(hi, viol, details={"s": s, "ratios": ratios, "bracket": [lo, hi], "homogeneity_error": homog,
                                      "resolution_change": resol})


def sweep_terms(ctx, terms=("g0", "g1")):
    """``{term: (PhaseFunction, options)}`` for the regularity sweep on the rescaled domain."""
    D = ctx.sweep_domain
    model, data, q = ctx.model, ctx.data, ctx.sweep_quad
    cn = int(ctx.budgets["chord_nodes"])
    scale = float(ctx.budgets["picard_budget_scale"])
    out = {}
    for t in terms:
        if t == "g0":
            out[t] = (J_function(D, model, data), {})
        elif t in ("g1", "g2"):
            i = int(t[1])
            if picard_cost(i, q, cn) > float(ctx.budgets["node_budget"]):
                raise BudgetExceeded(f"{t} exceeds the node budget")
            out[t] = (picard_function(D, model, q, data, i, cn), {"budget_scale": scale**i})
        elif t == "zext":
            out[t] = (zero_extended_composition(ctx), {"budget_scale": ctx.n("trend_samples") / ctx.n("seminorm_samples"),
                                                       "zero_extend": True})
    return out


def zero_extended_composition(ctx):
    """``Z (S_Omega K)^2 f`` for a smooth bump ``f`` on the rescaled domain."""
    D = ctx.sweep_domain
    cn = int(ctx.budgets["chord_nodes"])
    f = separable(smooth_bump(D.interior_point, 0.35 * D.diameter), gaussian_velocity(1.0), domain=D, radial_v=True)
    inner = SK_function(D, ctx.model, ctx.sweep_quad, f, cn)
    return SK_function(D, ctx.model, ctx.sweep_quad, inner, cn).zero_extended(D)


def _regularity_sweep(ctx, rng):
    s_list = sorted(float(s) for s in ctx.config.s_list)
    floor = 2.0 ** -float(ctx.budgets["shell_floor_exp"])
    seed = int(rng.integers(2**31))
    n0 = ctx.n("seminorm_samples")
    viol, flagged = 0, False
    det = {"s": s_list}
    g0_top = None
    for term, (f, opts) in sweep_terms(ctx, ("g0", "g1")).items():
        b = max(int(n0 * opts.get("budget_scale", 1.0)), 1)
        est = slobodeckij_multi(ctx.sweep_domain, f, s_list, b, seed, shell_floor=floor,
                                workers=ctx.config.workers, warn=False)
        vals = [e.value for e in est]
        finite = all(math.isfinite(v) for v in vals)
        mono = all(a <= b_ for a, b_ in zip(vals, vals[1:]))
        flags = [e.flagged for e in est]
        viol += int(not finite) + int(not mono)
        viol += sum(int(fl) for e, fl in zip(est, flags) if e.s <= 0.9)
        flagged |= any(flags)
        det[term] = {"values": vals, "stderr": [e.stderr for e in est], "flagged": flags, "samples": b,
                     "remainder_share": [e.remainder / e.value if e.value > 0 else 0.0 for e in est]}
        if term == "g0":
            g0_top = vals[-1]
    return Outcome(g0_top, viol, flagged, det)


def _zero_extension_trend(ctx, rng):
    f = zero_extended_composition(ctx)
    seed = int(rng.integers(2**31))
    est = slobodeckij_multi(ctx.sweep_domain, f, TREND_S, ctx.n("trend_samples"), seed, shell_floor=2.0**-20,
                            zero_extend=True, workers=ctx.config.workers, warn=False)
    scaled = [e.value * math.sqrt(0.5 - e.s) for e in est]
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else math.inf
    viol = int(not spread <= TREND_FACTOR) + int(not all(math.isfinite(e.value) for e in est))
    slope = _slope([0.5 - s for s in TREND_S], [e.value for e in est])
    return Outcome(max(scaled), viol, any(e.flagged for e in est),
                   {"s": TREND_S, "values": [e.value for e in est], "stderr": [e.stderr for e in est],
                    "scaled": scaled, "spread": spread, "slope_vs_half_minus_s": slope,
                    "endpoint": "s = 1/2 untested"})


REGISTRY = {
    "proj_distance": _proj_distance,
    "proj_distance2": _proj_distance2,
    "chord_bound": _chord_bound,
    "distance_comparison": _distance_comparison,
    "frac_chord_1": _frac_chord_1,
    "frac_chord_2": _frac_chord_2,
    "distance_integral": _distance_integral,
    "surface_integral": _surface_integral,
    "curvature_2d": _curvature_2d,
    "cone_jacobian": _cone_jacobian,
    "kernel_l1": _kernel_l1,
    "kernel_l2": _kernel_l2,
    "caflisch": _caflisch,
    "inverse_vsq": _inverse_vsq,
    "maxwellian_preserve": _maxwellian_preserve,
    "schur_klp": _schur_klp,
    "sk_square": _sk_square,
    "cov1": _cov("cov1"),
    "cov2": _cov("cov2"),
    "multiplier_decay": _multiplier_decay,
    "sobolev_equivalence": _sobolev_equivalence,
    "regularity_sweep": _regularity_sweep,
    "zero_extension_trend": _zero_extension_trend,
}
CHECKS = tuple(REGISTRY)


def _rng_for(name: str, seed: int):
    # each check owns a stream keyed by its registry position
    return np.random.default_rng(np.random.SeedSequence([int(seed), CHECKS.index(name)]))


def run_check(name: str, config: RunConfig | None = None, context: Context | None = None) -> Certificate:
    """Run one registered check; errors other than UnknownCheck propagate."""
    if name not in REGISTRY:
        raise UnknownCheck(f"unknown check {name!r}; known: {', '.join(CHECKS)}")
    config = config or (context.config if context is not None else RunConfig())
    ctx = context or Context(config)
    out = REGISTRY[name](ctx, _rng_for(name, config.seed))
    status = "fail" if out.violations > 0 else ("flagged" if out.flagged else "pass")
    const = None if out.constant is None else float(out.constant)
    return Certificate(name, status, const, int(out.violations), config.config_hash, config.seed,
                       _clean(out.details))


def run_suite(config: RunConfig | None = None, names=None) -> list:
    """All (or the selected) checks; a raised error becomes a flagged certificate.

    Checks run concurrently when ``config.workers > 1``; certificates are
    returned in registry order and do not depend on the worker count.
    """
    config = config or RunConfig()
    names = list(names if names is not None else (config.checks or CHECKS))
    for n in names:
        if n not in REGISTRY:
            raise UnknownCheck(f"unknown check {n!r}")
    ctx = Context(config)
    # build shared objects before fanning out
    for attr in ("domain", "model", "data", "quad", "sweep_quad", "radii", "sweep_domain"):
        getattr(ctx, attr)

    def one(name):
        try:
            return run_check(name, config, ctx)
        except (KinlabError, ValueError, FloatingPointError, ArithmeticError) as exc:
            return Certificate(name, "flagged", None, 0, config.config_hash, config.seed,
                               {"error": type(exc).__name__, "message": str(exc),
                                "trace": traceback.format_exception_only(type(exc), exc)[-1].strip()})

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as ex:
            return list(ex.map(one, names))
    return [one(n) for n in names]


def suite_failed(certs) -> bool:
    return any(c.status == "fail" for c in certs)


def certificates_jsonl(certs) -> str:
    return "".join(c.json_line() + "\n" for c in certs)


def summary_csv(certs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "status", "constant", "violations", "seed"])
    for c in certs:
        w.writerow(c.csv_row())
    return buf.getvalue()
