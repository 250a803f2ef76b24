"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line with its runtime; the lines are
printed together in the terminal summary (see ``conftest.py``).
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from kinlab.collision import CollisionModel, kernel_moment, maxwellian_ratios, moment_sweep
from kinlab.config import RunConfig
from kinlab.geometry.domains import Ball
from kinlab.geometry.integrals import chord_frac_integral
from kinlab.geometry.rays import sample_phase_points
from kinlab.suite import CHECKS, run_check, run_suite

BALL = {"kind": "ball", "params": [1.0]}
ELLIPSOID = {"kind": "ellipsoid", "params": [2.0, 1.0, 1.0]}


class Criterion:
    """Collects sub-results and a runtime, then records one summary line."""

    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.failures = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def require(self, ok, what):
        if not ok:
            self.failures.append(what)

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if exc_type is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        if self.limit is not None and dt > self.limit:
            self.failures.append(f"runtime {dt:.1f}s over {self.limit:g}s")
        status = "FAIL" if self.failures else "PASS"
        line = f"{status} criterion {self.number:2d} {self.title} ({dt:.1f}s)"
        if self.failures:
            line += ": " + "; ".join(self.failures)
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert not self.failures, line
        return False


def cert(name, domain=BALL, **kw):
    return run_check(name, RunConfig(domain=domain, **kw))


def test_criterion_01_geometry_exactness():
    with Criterion(1, "exit records and chord bound on the unit ball", 30) as c:
        D = Ball((1.0,))
        rng = np.random.default_rng(2024)
        x, v, rec = sample_phase_points(D, rng, 100000)
        # closed forms for |x + t v| = 1 with |v| = 1
        b = np.sum(x * v, axis=1)
        root = np.sqrt(b * b - np.sum(x * x, axis=1) + 1.0)
        err = max(np.max(np.abs(rec.tau_plus - (-b + root))), np.max(np.abs(rec.tau_minus - (b + root))),
                  np.max(np.abs(rec.n_plus - root)), np.max(np.abs(rec.n_minus - root)),
                  np.max(np.abs(np.linalg.norm(rec.q_minus, axis=1) - 1)))
        c.require(err <= 1e-9, f"closed-form error {err:.2e}")
        eq = np.max(np.abs(np.linalg.norm(rec.q_minus - rec.q_plus, axis=1) - 2 * rec.n_minus))
        c.require(eq <= 1e-9, f"chord equality error {eq:.2e}")
        cb = cert("chord_bound")
        c.require(cb.status == "pass", f"chord_bound {cb.status}")
        c.require(abs(cb.details["C_2R1"] - 2.0) <= 1e-9, f"2 R1 = {cb.details['C_2R1']}")
        c.require(abs(cb.measured_constant - 2.0) <= 1e-9, f"measured constant {cb.measured_constant}")


def test_criterion_02_projection_distance():
    with Criterion(2, "projection/distance inequalities on ball and ellipsoid", 60) as c:
        for dom in (BALL, ELLIPSOID):
            for name in ("proj_distance", "proj_distance2"):
                r = cert(name, dom, budgets={"geometry_samples": 100000})
                c.require(r.violations == 0, f"{name} on {dom['kind']}: {r.violations} violations")


def test_criterion_03_fractional_chord_integral():
    with Criterion(3, "fractional chord integrals on the ellipsoid", 300) as c:
        oracle = chord_frac_integral(Ball((1.0,)), [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.5)
        c.require(abs(oracle - 4.0) <= 1e-6, f"diametric oracle {oracle!r}")
        a = cert("frac_chord_1", ELLIPSOID, budgets={"chord_samples": 10000})
        c.require(a.status == "pass" and math.isfinite(a.measured_constant),
                  f"s = 1/2 chords: {a.status}, max {a.measured_constant}")
        b = cert("frac_chord_2", ELLIPSOID)
        c.require(abs(b.details["slope"]) <= 0.15, f"epsilon slope {b.details['slope']:.3f}")


def test_criterion_04_distance_integral():
    with Criterion(4, "distance integral on the unit ball", 120) as c:
        r = cert("distance_integral")
        for eps, z in zip(r.details["eps"], r.details["z"]):
            c.require(z <= 3.0, f"eps={eps}: z={z:.2f}")
        slope = r.details["slope"]
        c.require(abs(slope + 1.0) <= 0.1, f"slope vs eps {slope:.3f} (target -1 +- 0.1)")


def test_criterion_05_surface_integral():
    with Criterion(5, "singular surface integral", 120) as c:
        r = cert("surface_integral")
        c.require(r.details["center_rel_error"] <= 5e-3, f"center error {r.details['center_rel_error']:.2e}")
        c.require(r.violations == 0, f"{r.violations} violations of the log bound")


def test_criterion_06_kernel_moments():
    with Criterion(6, "kernel moments", 60) as c:
        m = CollisionModel(gamma=1.0, kernel_scale=1.0)
        m1 = kernel_moment(m, np.zeros(3), 1)
        m2 = kernel_moment(m, np.zeros(3), 2)
        c.require(abs(m1 / (8 * math.pi) - 1) <= 1e-3, f"first moment {m1}")
        c.require(abs(m2 / (4 * math.pi * math.sqrt(math.pi / 2)) - 1) <= 1e-3, f"second moment {m2}")
        rows = moment_sweep(m)
        c.require([r[0] for r in rows] == [0, 1, 2, 4, 8], "speed set")
        weighted = [r[1] * (1 + r[0]) for r in rows]
        c.require(all(math.isfinite(w) and w > 0 for w in weighted), f"weighted moments {weighted}")
        for name in ("kernel_l1", "kernel_l2"):
            r = cert(name)
            c.require(r.status == "pass", f"{name} {r.status}")


def test_criterion_07_maxwellian_bound():
    with Criterion(7, "Gaussian preservation under K", 120) as c:
        r = cert("maxwellian_preserve")
        for a, sup, drift in zip(r.details["rates"], r.details["sup_ratio"], r.details["doubling_drift"]):
            c.require(math.isfinite(sup) and sup > 0, f"a={a}: sup {sup}")
            c.require(drift <= 0.02, f"a={a}: doubling drift {drift:.3%}")
        # the certificate grid stops at vmax - 1 = 7
        c.require(max(np.linspace(0.0, 7.0, 29)) == 7.0, "speed grid")
        c.require(np.all(np.isfinite(maxwellian_ratios(CollisionModel(), 0.1, [7.0]))), "ratio at |v| = 7")


def test_criterion_08_change_of_variables():
    with Criterion(8, "change-of-variable certificates", 180) as c:
        for name in ("cov1", "cov2"):
            r = cert(name, budgets={"cov_samples": 10000})
            d = r.details
            c.require(d["roundtrip_error"] <= 1e-10, f"{name} round trip {d['roundtrip_error']:.1e}")
            c.require(d["z"] <= 3.0, f"{name} z={d['z']:.2f}")
            c.require(d["membership_violations"] == 0, f"{name} membership {d['membership_violations']}")
        r = cert("cone_jacobian", budgets={"cov_samples": 10000})
        c.require(r.details["z"] <= 3.0, f"cone_jacobian z={r.details['z']:.2f}")


def test_criterion_09_multiplier_decay():
    with Criterion(9, "multiplier decay", 10) as c:
        r = cert("multiplier_decay")
        c.require(r.details["max_rel_deviation"] <= 1e-8, f"deviation {r.details['max_rel_deviation']:.1e}")
        c.require(abs(r.details["nu0_exponent"] + 1 / 3) <= 1e-6, f"exponent {r.details['nu0_exponent']}")


def test_criterion_10_regularity_sweep():
    with Criterion(10, "regularity sweep and zero-extension trend", 1200) as c:
        cfg = RunConfig(domain=BALL, boundary={"kind": "lipschitz_bump", "a": 0.1, "C": 1.0},
                        s_list=[0.3, 0.5, 0.7, 0.9])
        r = run_check("regularity_sweep", cfg)
        for term in ("g0", "g1"):
            vals = r.details[term]["values"]
            c.require(all(math.isfinite(v) for v in vals), f"{term} non-finite")
            c.require(all(a <= b for a, b in zip(vals, vals[1:])), f"{term} not monotone: {vals}")
            c.require(not any(r.details[term]["flagged"]), f"{term} flagged {r.details[term]['flagged']}")
        t = run_check("zero_extension_trend", cfg)
        c.require(t.details["spread"] <= 2.0, f"trend spread {t.details['spread']:.3f}")


def test_criterion_11_reproducibility():
    with Criterion(11, "certificates identical across worker counts", None) as c:
        one = run_suite(RunConfig(domain=BALL, workers=1))
        two = run_suite(RunConfig(domain=BALL, workers=2))
        c.require([x.check_name for x in one] == list(CHECKS), "registry order")
        diff = [a.check_name for a, b in zip(one, two) if a.json_line() != b.json_line()]
        c.require(not diff, f"differing certificates {diff}")
        c.require(len(one) == len(two) == len(CHECKS), "certificate count")
