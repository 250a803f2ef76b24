import csv
import io
import json
import math

import pytest

from kinlab import suite
from kinlab.config import RunConfig
from kinlab.errors import NoConvergence, UnknownCheck
from kinlab.suite import (CHECKS, Certificate, certificates_jsonl, run_check, run_suite, suite_failed,
                          summary_csv)

SMALL = {"geometry_samples": 2000, "chord_samples": 500, "mc_samples": 20000, "surface_samples": 2000,
         "curvature_configs": 20, "cov_samples": 500, "sk_samples": 20}
QUICK = ["proj_distance", "chord_bound", "distance_comparison", "kernel_l1", "cov1", "multiplier_decay"]


def small(**kw):
    return RunConfig(budgets=SMALL, **kw)


def test_registry_names():
    assert len(CHECKS) == 23 and len(set(CHECKS)) == 23
    with pytest.raises(UnknownCheck):
        run_check("no_such_check", small())
    with pytest.raises(UnknownCheck):
        run_suite(small(), ["proj_distance", "no_such_check"])


def test_certificate_invariant():
    Certificate("x", "pass", 1.0, 0, "h", 0)
    Certificate("x", "flagged", None, 0, "h", 0)
    for status, viol in (("fail", 0), ("pass", 2), ("flagged", 1), ("ok", 0)):
        with pytest.raises(ValueError):
            Certificate("x", status, 1.0, viol, "h", 0)


def test_chord_bound_on_ball():
    c = run_check("chord_bound", small())
    assert c.status == "pass"
    assert c.details["C_2R1"] == pytest.approx(2.0, rel=1e-12)
    assert c.measured_constant == pytest.approx(2.0, rel=1e-9)
    assert c.details["ball_equality_error"] <= 1e-9


def test_distance_integral_volume_at_unit_eps():
    c = run_check("distance_integral", small())
    val = c.details["values"][0]
    assert val == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert c.details["z"][0] <= 3.0


def test_certificate_records_config():
    cfg = small(seed=9)
    c = run_check("kernel_l1", cfg)
    assert c.seed == 9 and c.config_hash == cfg.config_hash
    assert c == run_check("kernel_l1", cfg)


def test_quick_subset_independent_of_workers():
    a = run_suite(small(), QUICK)
    b = run_suite(small(workers=3), QUICK)
    assert [c.check_name for c in a] == QUICK
    assert [c.json_line() for c in a] == [c.json_line() for c in b]
    assert not suite_failed(a)


def test_seed_changes_sampled_checks():
    a = run_check("proj_distance", small(seed=1))
    b = run_check("proj_distance", small(seed=2))
    assert a.measured_constant != b.measured_constant


def test_loose_root_tolerance_fails():
    # a coarse exit tolerance breaks the ray inequalities that are tested against GEOM_TOL
    certs = run_suite(small(tol_root=1e-2), ["proj_distance2", "chord_bound"])
    assert all(c.status == "fail" for c in certs)
    assert suite_failed(certs)


def test_raised_error_becomes_flagged(monkeypatch):
    def boom(ctx, rng):
        raise NoConvergence("did not converge")

    monkeypatch.setitem(suite.REGISTRY, "schur_klp", boom)
    (c,) = run_suite(small(), ["schur_klp"])
    assert c.status == "flagged" and c.violations == 0 and c.measured_constant is None
    assert c.details["error"] == "NoConvergence"
    with pytest.raises(NoConvergence):
        run_check("schur_klp", small())


def test_serialisation_round_trip():
    certs = run_suite(small(), ["kernel_l1", "distance_comparison"])
    lines = certificates_jsonl(certs).splitlines()
    back = [Certificate.from_json(json.loads(s)) for s in lines]
    assert [c.json_line() for c in back] == lines
    rows = list(csv.reader(io.StringIO(summary_csv(certs))))
    assert rows[0] == ["check", "status", "constant", "violations", "seed"]
    assert [r[0] for r in rows[1:]] == ["kernel_l1", "distance_comparison"]
    assert float(rows[1][2]) == certs[0].measured_constant


def test_non_finite_constants_serialise_as_null():
    c = Certificate("x", "flagged", float("inf"), 0, "h", 0, {"a": [1.0, float("nan")]})
    d = json.loads(c.json_line())
    assert d["measured_constant"] is None and d["details"]["a"] == [1.0, None]
