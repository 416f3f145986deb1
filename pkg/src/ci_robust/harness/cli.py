"""Command-line entry point: ``ci-robust {simulate,test,theory,selfcheck}``.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .. import theory
from ..errors import CIError, ConfigError
from ..rng import RngStream
from .config import load_config
from .runner import make_replicate, run_experiment, run_method, test_stream
from .selfcheck import run_selfcheck

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _default_jobs() -> int:
    try:
        return int(os.environ.get("CI_ROBUST_JOBS", "1"))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--jobs", type=int, default=_default_jobs(),
                        help="parallel replications (default: $CI_ROBUST_JOBS or 1)")

    p = _Parser(prog="ci-robust", description="Regression-based conditional independence tests")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="run a Monte Carlo experiment")
    sub.add_parser("test", parents=[common], help="run one test on a CSV dataset")
    th = sub.add_parser("theory", parents=[common], help="gap estimates and STFR calibration table")
    th.add_argument("--oracle", choices=sorted(theory.ORACLES), default="example1")
    th.add_argument("--ns", default="50,200", help="comma-separated test sizes")
    th.add_argument("--replications", type=int, default=1000)
    th.add_argument("--oracle-draws", type=int, default=1_000_000)
    th.add_argument("--alpha", type=float, default=0.1)
    sub.add_parser("selfcheck", parents=[common], help="run the invariant checks")
    return p


def _emit(text: str, out_dir, filename: str):
    if out_dir is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / filename).write_text(text, encoding="utf-8")


def _config(args):
    if args.config is None:
        raise ConfigError("this command needs a config file", "--config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.base_seed = args.seed
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg, jobs=max(1, args.jobs))
    fmt = args.format or "csv"
    stem = args.config.stem
    if args.out is not None:
        _emit(report.to_csv(), args.out, f"{stem}.csv")
        _emit(report.to_json(), args.out, f"{stem}.json")
        _emit(cfg.to_text(), args.out, f"{stem}.resolved.cfg")
    else:
        _emit(report.to_csv() if fmt == "csv" else report.to_json(), None, "")
    return EXIT_OK


def cmd_test(args) -> int:
    cfg = _config(args)
    if cfg.dgp["kind"] != "csv":
        raise ConfigError("the test command needs a csv dgp", "dgp.kind")
    if len(cfg.methods) != 1:
        raise ConfigError("the test command runs exactly one method", "experiment.methods")
    method = cfg.methods[0]
    rep = make_replicate(cfg, cfg.dgp, 0, 0)
    outcome = run_method(cfg, method, rep, float(cfg.dgp.get("theta", 0.0)),
                         test_stream(cfg, 0, 0, method))
    payload = outcome.to_dict()
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(payload), lineterminator="\n")
        writer.writeheader()
        writer.writerow(payload)
        _emit(buf.getvalue(), args.out, "outcome.csv")
    else:
        _emit(json.dumps(payload, indent=2), args.out, "outcome.json")
    return EXIT_OK


def cmd_theory(args) -> int:
    oracle = theory.ORACLES[args.oracle]()
    seed = args.seed if args.seed is not None else 0
    root = RngStream(seed)
    try:
        ns = [int(v) for v in args.ns.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --ns value {args.ns!r}", "--ns") from None
    gaps = {"OmegaSTFR": theory.estimate_omega_stfr(oracle, n_draws=args.oracle_draws, rng=root.child(10))}
    gaps.update(theory.estimate_misspecification_gaps(oracle, n_draws=args.oracle_draws,
                                                      rng=root.child(11)))
    gaps["OmegaGCM"] = theory.estimate_omega_gcm(oracle, n_draws=args.oracle_draws, rng=root.child(12))
    rows = theory.stfr_calibration(oracle, ns, args.replications, args.alpha,
                                   oracle_draws=args.oracle_draws, rng=root)
    if args.format == "json":
        text = json.dumps({"oracle": args.oracle, "gaps": {k: v.to_dict() for k, v in gaps.items()},
                           "calibration": [r.to_dict() for r in rows]}, indent=2)
        _emit(text, args.out, f"theory_{args.oracle}.json")
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "omega", "sigma", "predicted", "empirical", "mc_se", "degenerate"])
        for r in rows:
            writer.writerow([r.n, r.omega, r.sigma, r.predicted, r.empirical, r.mc_se, r.degenerate])
        buf.write("\n")
        writer.writerow(["gap", "value", "std_error", "n_draws"])
        for k, v in gaps.items():
            writer.writerow([k, v.value, v.std_error, v.n_draws])
        _emit(buf.getvalue(), args.out, f"theory_{args.oracle}.csv")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    return EXIT_OK if run_selfcheck() else EXIT_RUNTIME


COMMANDS = {"simulate": cmd_simulate, "test": cmd_test, "theory": cmd_theory, "selfcheck": cmd_selfcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CIError, OSError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
