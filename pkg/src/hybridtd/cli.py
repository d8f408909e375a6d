"""Command-line entry point: ``hybridtd run|compare|validate|catalog``."""
import argparse
import logging
from pathlib import Path
import sys

from .errors import ConfigurationError, ConvergenceError, ProfileParseError

log = logging.getLogger("hybridtd")

DEFAULT_CASE = "bess-high-tc"


def _experiment(args):
    from .scenario.experiments import build_experiment, load_experiment

    if args.case.endswith(".json") or Path(args.case).is_file():
        exp = load_experiment(args.case)
        if args.seed is not None:
            log.warning("--seed ignored for config files; the seed is part of the scenario")
    else:
        exp = build_experiment(args.case, seed=1 if args.seed is None else args.seed,
                               horizon=args.horizon if args.horizon is not None else 3600.0)
    overrides = {}
    if args.mode:
        overrides["coupling"] = args.mode
    if args.model:
        overrides["model"] = args.model
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.dt_transmission:
        overrides["dt_transmission"] = args.dt_transmission
    return exp.with_schedule(**overrides) if overrides else exp


def cmd_run(args):
    from .cosim import run_simulation
    from .metrics import emit_outputs

    exp = _experiment(args)
    out = Path(args.out or Path("runs") / exp.name)
    bundle = run_simulation(exp)
    if args.seed is not None:
        bundle.meta["seed"] = args.seed
    emit_outputs(bundle, out)
    s = bundle.summary()
    for key in ("status", "steps", "ace_std_system", "max_abs_df_hz", "violation_count"):
        if key in s:
            print(f"{key} = {s[key]}")
    print(f"outputs in {out}")
    if bundle.status != "ok":
        print(f"error: {bundle.error}", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args):
    from .metrics import compare_runs, read_summary

    a = read_summary(Path(args.dir_a) / "summary.txt")
    b = read_summary(Path(args.dir_b) / "summary.txt")
    expect = None
    if args.expect:
        expect = []
        for item in args.expect:
            key, _, op = item.rpartition(":")
            expect.append((key, op))
    report = compare_runs(a, b, expect)
    print(report.format())
    if not report.checks:
        print("no directional expectation applies to this pair")
    return 0 if report.passed else 2


def cmd_validate(args):
    from .scenario.experiments import load_experiment

    exp = load_experiment(args.config)
    print(f"{args.config}: OK ({len(exp.feeders)} feeders, {len(exp.units)} BESS units, "
          f"{len(exp.profiles)} profiles)")
    return 0


def cmd_catalog(args):
    from .scenario.experiments import catalog

    for name in catalog():
        print(name)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hybridtd",
                                description="Transmission-distribution co-simulation with BESS AGC")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a catalog case or a config file")
    r.add_argument("case", nargs="?", default=DEFAULT_CASE)
    r.add_argument("--mode", choices=["tc", "lc"])
    r.add_argument("--model", choices=["cosim", "aggregated"])
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=float, help="simulated seconds (default 3600)")
    r.add_argument("--dt-transmission", type=float, help="transmission step, s (default 1e-3)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("dir_a")
    c.add_argument("dir_b")
    c.add_argument("--expect", action="append",
                   help="KEY:OP with OP in a<b, a<=b, b<a, b<=a (repeatable)")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="validate a config file and its references")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)

    k = sub.add_parser("catalog", help="list experiment presets")
    k.set_defaults(func=cmd_catalog)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 is reserved for failed comparisons
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ProfileParseError, ConvergenceError, FileNotFoundError,
            ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
