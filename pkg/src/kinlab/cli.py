"""Command-line front end: ``kinlab {verify,sweep,iterate,seminorm,report}``.

Every file is written under the output directory; nothing else on disk
is touched.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, KinlabError, UnknownCheck
from .geometry.rays import sample_phase_points
from .collision import moment_sweep
from .seminorm import regularity_sweep, slobodeckij_multi
from .suite import Context, certificates_jsonl, run_suite, suite_failed, summary_csv, sweep_terms
from .transport import picard_batch

log = logging.getLogger("kinlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SWEEP_HEADER = ["term", "s", "value", "stderr", "samples", "flagged"]
ITERATE_HEADER = ["x", "y", "z", "vx", "vy", "vz", "g0", "g1", "g2", "g3"]
MOMENT_HEADER = ["v_mag", "moment1", "moment2", "bound_ratio"]
EXIT_HEADER = ["x", "y", "z", "vx", "vy", "vz", "tau_minus", "n_minus", "tau_plus", "n_plus"]
EXIT_DUMP = 1000


def _parse_s(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad order list {text!r}") from exc
    if not vals or any(not 0 < s < 1 for s in vals):
        raise ConfigError("orders must lie in (0, 1)")
    return sorted(vals)


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_verify(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    certs = run_suite(cfg)
    (out / "certificates.jsonl").write_text(certificates_jsonl(certs))
    (out / "summary.csv").write_text(summary_csv(certs))
    (out / "config.json").write_text(cfg.to_json() + "\n")
    model = cfg.build_model()
    _write_csv(out / "moments.csv", MOMENT_HEADER, [[repr(float(c)) for c in r] for r in moment_sweep(model)])
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1000]))
    x, v, rec = sample_phase_points(cfg.build_domain(), rng, EXIT_DUMP)
    rows = np.column_stack([x, v, rec.tau_minus, rec.n_minus, rec.tau_plus, rec.n_plus])
    _write_csv(out / "exit_records.csv", EXIT_HEADER, [[repr(float(c)) for c in r] for r in rows])
    for c in certs:
        log.info("%-22s %-7s constant=%s violations=%d", c.check_name, c.status, c.measured_constant, c.violations)
    failed = [c.check_name for c in certs if c.status == "fail"]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
    return EXIT_FAIL if suite_failed(certs) else EXIT_OK


def _sweep_rows(cfg: RunConfig, s_list, terms):
    ctx = Context(cfg)
    floor = 2.0 ** -float(cfg.budgets["shell_floor_exp"])
    built = sweep_terms(ctx, terms)
    return regularity_sweep(ctx.sweep_domain, lambda _d: built, s_list, int(cfg.budgets["seminorm_samples"]),
                            cfg.seed, workers=cfg.workers, shell_floor=floor, warn=False)


def cmd_sweep(cfg: RunConfig, args) -> int:
    s_list = _parse_s(args.s) if args.s else sorted(float(s) for s in cfg.s_list)
    out = _outdir(cfg)
    rows = _sweep_rows(cfg, s_list, list(cfg.sweep_terms))
    _write_csv(out / "sweep.csv", SWEEP_HEADER, [[r.term, repr(r.estimate.s), repr(r.estimate.value),
                                                  repr(r.estimate.stderr), r.estimate.samples,
                                                  int(r.estimate.flagged)] for r in rows])
    profiles = [{"term": r.term, **r.estimate.to_json()} for r in rows]
    (out / "shell_profiles.json").write_text(json.dumps(profiles, indent=1) + "\n")
    for r in rows:
        log.info("%s s=%.3f value=%.6g +- %.2g%s", r.term, r.estimate.s, r.estimate.value, r.estimate.stderr,
                 " flagged" if r.estimate.flagged else "")
    return EXIT_OK


def iterate_grid(cfg: RunConfig):
    """Phase points on a line through the interior point, three velocity directions."""
    D = cfg.build_domain()
    c = D.interior_point
    n = int(cfg.budgets["iterate_points"])
    R = float(D.forward_exit(c[None], np.array([[1.0, 0.0, 0.0]]))[0])
    fr = np.linspace(-0.8, 0.8, n)
    vs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.8, 0.0]])
    x = np.repeat(c + fr[:, None] * R * np.array([1.0, 0.0, 0.0]), len(vs), axis=0)
    v = np.tile(vs, (n, 1))
    return x, v


def cmd_iterate(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    D, model, data = cfg.build_domain(), cfg.build_model(), cfg.build_boundary()
    q = cfg.build_quadrature("iterate_quad_nodes")
    cn = int(cfg.budgets["iterate_chord_nodes"])
    budget = float(cfg.budgets["node_budget"])
    x, v = iterate_grid(cfg)
    cols = []
    for i in range(4):
        t = time.perf_counter()
        # one point at a time keeps each evaluation tree within the node budget
        cols.append(np.array([picard_batch(D, model, q, data, i, x[k:k + 1], v[k:k + 1], cn, budget)[0]
                              for k in range(x.shape[0])]))
        log.info("g%d tabulated in %.1fs", i, time.perf_counter() - t)
    rows = np.column_stack([x, v] + cols)
    _write_csv(out / "iterates.csv", ITERATE_HEADER, [[repr(float(c)) for c in r] for r in rows])
    return EXIT_OK


def cmd_seminorm(cfg: RunConfig, args) -> int:
    s_list = _parse_s(args.s) if args.s else [0.5]
    out = _outdir(cfg)
    ctx = Context(cfg)
    f, opts = sweep_terms(ctx, [args.term])[args.term]
    opts = dict(opts)
    b = max(int(cfg.budgets["seminorm_samples"] * opts.pop("budget_scale", 1.0)), 1)
    est = slobodeckij_multi(ctx.sweep_domain, f, s_list, b, cfg.seed, workers=cfg.workers,
                            shell_floor=2.0 ** -float(cfg.budgets["shell_floor_exp"]), warn=False, **opts)
    payload = {"term": args.term, "config_hash": cfg.config_hash, "estimates": [e.to_json() for e in est]}
    (out / "seminorm.json").write_text(json.dumps(payload, indent=1) + "\n")
    for e in est:
        print(f"{args.term} s={e.s:g} value={e.value:.10g} stderr={e.stderr:.3g} seminorm={e.seminorm:.10g}"
              f"{' flagged' if e.flagged else ''}")
    return EXIT_OK


# ---------------------------------------------------------------- report

def _read_csv(path: Path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _dat(path: Path, header, rows):
    lines = ["# " + " ".join(header)]
    lines += [" ".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def cmd_report(cfg: RunConfig, args) -> int:
    """Turn stored CSV/JSON into whitespace-separated ``.dat`` tables."""
    out = Path(cfg.output_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist")
    written = []
    if (out / "sweep.csv").exists():
        rows = _read_csv(out / "sweep.csv")
        for term in dict.fromkeys(r["term"] for r in rows):
            sel = [r for r in rows if r["term"] == term]
            p = out / f"sweep_{term}.dat"
            _dat(p, ["s", "value", "stderr", "flagged"], [[r["s"], r["value"], r["stderr"], r["flagged"]] for r in sel])
            written.append(p)
    if (out / "shell_profiles.json").exists():
        for prof in json.loads((out / "shell_profiles.json").read_text()):
            p = out / f"shells_{prof['term']}_s{prof['s']:g}.dat"
            shells = prof["shell_profile"]
            _dat(p, ["shell", "radius_fraction", "contribution"],
                 [[j, repr(2.0 ** (-j - 0.5)), repr(c)] for j, c in enumerate(shells)])
            written.append(p)
    if (out / "moments.csv").exists():
        rows = _read_csv(out / "moments.csv")
        p = out / "moments.dat"
        _dat(p, MOMENT_HEADER, [[r[k] for k in MOMENT_HEADER] for r in rows])
        written.append(p)
    if (out / "summary.csv").exists():
        rows = _read_csv(out / "summary.csv")
        p = out / "summary.dat"
        _dat(p, ["index", "check", "status", "constant", "violations"],
             [[i, r["check"], r["status"], r["constant"] or "nan", r["violations"]] for i, r in enumerate(rows)])
        written.append(p)
    if (out / "iterates.csv").exists():
        rows = _read_csv(out / "iterates.csv")
        p = out / "iterates.dat"
        _dat(p, ITERATE_HEADER, [[r[k] for k in ITERATE_HEADER] for r in rows])
        written.append(p)
    if (out / "exit_records.csv").exists():
        rows = _read_csv(out / "exit_records.csv")
        p = out / "exit_records.dat"
        _dat(p, EXIT_HEADER, [[r[k] for k in EXIT_HEADER] for r in rows])
        written.append(p)
    if not written:
        print(f"nothing to render in {out}", file=sys.stderr)
        return EXIT_FAIL
    for p in written:
        print(p)
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "iterate": cmd_iterate, "seminorm": cmd_seminorm,
            "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinlab", description="Kinetic boundary-value laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "report", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--budget-scale", type=float, help="multiply every sample budget")
        sp.add_argument("--out", help="override the output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("sweep", "seminorm"):
            sp.add_argument("--s", help="comma-separated orders in (0, 1)")
        if name == "seminorm":
            sp.add_argument("--term", default="g0", choices=["g0", "g1", "g2", "zext"])
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, budget_scale=args.budget_scale, output_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UnknownCheck) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KinlabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
