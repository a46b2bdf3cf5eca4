"""Command-line entry point: ``covert-dfrc {solve,sweep,validate-detection,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bcd import BcdOptions, run_bcd, run_fpa, run_gas, run_upper_bound
from .beamforming import MODES, NONCOLLUDING
from .channel import Scenario, ScenarioConfig, load_config
from .selftest import run_selftest, validate_detection
from .sweep import PARAMETERS, SCHEMES, SweepSpec, format_value, sweep, write_csv, write_manifest

log = logging.getLogger("covert_dfrc")

SOLVE_SCHEMES = ("proposed", "fpa", "gas", "upper-bound")


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=int(args.seed))
    return cfg


def _parse_list(text: str, cast=str) -> list:
    return [cast(v.strip()) for v in text.split(",") if v.strip()]


def cmd_solve(args) -> int:
    cfg = _config(args)
    scn = Scenario.from_config(cfg)
    opts = BcdOptions(trials=args.trials)
    out = Path(args.out)
    status = 0
    for scheme in _parse_list(args.scheme or "proposed"):
        if scheme not in SOLVE_SCHEMES:
            raise SystemExit(f"unknown scheme {scheme!r}; choose from {', '.join(SOLVE_SCHEMES)}")
        if scheme == "proposed":
            rep = run_bcd(scn, args.mode, opts)
        elif scheme == "fpa":
            rep = run_fpa(scn, args.mode, opts)
        elif scheme == "gas":
            rep = run_gas(scn, args.mode, opts)
        else:
            rep = run_upper_bound(scn, args.mode, opts, start=run_bcd(scn, args.mode, opts).state)
        rows = [{"iteration": i, "rate": r} for i, r in enumerate(rep.trace)]
        write_csv(rows, out / f"{scheme}-{args.mode}-trace.csv", columns=("iteration", "rate"))
        dets = [
            {"warden": d.warden, "dep": d.dep, "kl": d.kl, "dep_empirical": d.dep_empirical,
             "half_width": d.half_width, "trials": d.trials}
            for d in rep.detection
        ]
        write_csv(dets, out / f"{scheme}-{args.mode}-detection.csv",
                  columns=("warden", "dep", "kl", "dep_empirical", "half_width", "trials"))
        print(
            f"{scheme} {args.mode}: rate {format_value(rep.rate)} bits/s/Hz, iterations {rep.iterations}, "
            f"{rep.reason}, feasible={rep.feasible}, min DEP {format_value(rep.metrics.min_dep)}"
        )
        status = status or (0 if rep.feasible else 1)
    write_manifest(out / "manifest.yaml", cfg, cfg.seed, {"command": "solve", "mode": args.mode,
                                                        "schemes": args.scheme or "proposed"})
    return status


def cmd_sweep(args) -> int:
    cfg = _config(args)
    schemes = _parse_list(args.scheme) if args.scheme else list(SCHEMES)
    seeds = list(range(args.seeds)) if args.seed is None else [args.seed + i for i in range(args.seeds)]
    spec = SweepSpec(args.parameter, _parse_list(args.values, float), seeds, schemes, [args.mode])
    rows = sweep(spec, cfg, BcdOptions(trials=args.trials), workers=args.workers)
    out = Path(args.out)
    path = write_csv(rows, out / f"sweep-{args.parameter}.csv")
    write_manifest(out / "manifest.yaml", cfg, seeds[0], {"command": "sweep", "sweep": vars(spec)})
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_validate(args) -> int:
    rows = validate_detection(args.trials, args.seed or 0)
    worst = 0.0
    for row in rows:
        tol = 0.01 if row["kind"] == "single" else 0.015
        ok = row["error"] <= tol
        worst = max(worst, row["error"])
        print(f"{'PASS' if ok else 'FAIL'} {row['kind']:8s} M={row['M']:<3d} closed-form {row['dep']:.5f} "
              f"empirical {row['dep_empirical']:.5f} +- {row['half_width']:.5f}")
    if args.out:
        write_csv(rows, Path(args.out) / "validate-detection.csv",
                  columns=("kind", "M", "dep", "dep_empirical", "half_width", "error"))
    return 0 if all(r["error"] <= (0.01 if r["kind"] == "single" else 0.015) for r in rows) else 1


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covert-dfrc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=0):
        p.add_argument("--config", help="YAML document of ScenarioConfig fields")
        p.add_argument("--mode", choices=MODES, default=NONCOLLUDING)
        p.add_argument("--seed", type=int, default=None, help="channel seed (overrides the config)")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--trials", type=int, default=trials, help="Monte Carlo trials for detection checks")

    p = sub.add_parser("solve", help="optimize one scenario")
    common(p)
    p.add_argument("--scheme", help=f"comma-separated subset of {','.join(SOLVE_SCHEMES)}")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep one parameter over seeds and schemes")
    common(p)
    p.add_argument("--scheme", help=f"comma-separated subset of {','.join(SCHEMES)}")
    p.add_argument("--parameter", required=True, choices=sorted(PARAMETERS))
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--seeds", type=int, default=20, help="number of consecutive seeds")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate-detection", help="closed-form DEP against Monte Carlo")
    common(p, trials=100_000)
    p.add_argument("--scheme", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("selftest", help="run the invariant checks")
    common(p)
    p.add_argument("--scheme", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return int(args.func(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
