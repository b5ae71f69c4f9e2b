"""Command-line entry point ``tikhonov-flow``.

Exit codes: 0 success (all verdicts pass or are informational), 1 a verdict
or self-check failed, 2 invalid configuration or runtime error. Tables go to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import sys

from . import config as cfg
from .dynamics import HeParams, classify_regime, regime_names
from .errors import ConfigInvalid, FlowError, OutOfTheory
from .experiments import (
    SWEEP_QUANTITIES, run_experiment, run_sweep, spec_from_config, sweep_table, write_sweep,
)
from .metrics import RATE_QUANTITIES, predict_rates
from .problem import resolve_instance
from . import verify as vf

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _err(msg):
    print(msg, file=sys.stderr)


def _load(args):
    doc = cfg.load_config(args.config)
    doc = cfg.apply_overrides(doc, args.set)
    if getattr(args, "out", None):
        doc["experiment"]["outputs"] = args.out
    if getattr(args, "workers", None) is not None:
        doc["sweep"]["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    return cfg.validate(doc)


def _fmt(x):
    return "-" if x is None else f"{x:.4g}"


def _print_rates(report):
    print(f"run_id\t{report['run_id']}")
    print(f"regimes\t{'+'.join(report['regimes'])}")
    print(f"status\t{report['status']}")
    print("quantity\tfitted\tpredicted\tr_squared\tverdict")
    for qty, e in report["rates"].items():
        print(f"{qty}\t{_fmt(e['fitted'])}\t{_fmt(e['predicted'])}\t{_fmt(e['r_squared'])}\t"
              f"{e['verdict']}")


def cmd_simulate(args):
    doc = _load(args)
    spec = spec_from_config(doc)
    for msg in ([] if spec.system == "heode" else spec.params.assumption_violations()):
        _err(f"warning: {msg}; run is informational")
    res = run_experiment(spec)
    _print_rates(res.report)
    _err(f"artifacts in {res.directory}")
    return EXIT_FAIL if res.status == "fail" else EXIT_OK


def cmd_sweep(args):
    doc = _load(args)
    sw = doc["sweep"]
    if sw["axis"] is None or not sw["values"]:
        raise ConfigInvalid("config key 'sweep.axis' and 'sweep.values' must be set for a sweep")
    base = spec_from_config(doc)
    rows = run_sweep(base, sw["axis"], sw["values"], workers=int(sw["workers"]),
                     out=base.outputs)
    sys.stdout.write(sweep_table(rows, sw["axis"], SWEEP_QUANTITIES))
    _err(f"summary written to {write_sweep(rows, sw['axis'], base.outputs)}")
    for row in rows:
        if row.error:
            _err(f"cell {sw['axis']}={row.value:g}: {row.error}")
    return EXIT_FAIL if any(r.status in ("fail", "error") for r in rows) else EXIT_OK


def cmd_rates(args):
    doc = _load(args)
    if doc["experiment"]["system"] == "heode":
        print("regimes\tOutOfTheory")
        return EXIT_OK
    spec = spec_from_config(doc)
    params = spec.params
    if spec.system == "chbani":
        params = params.replace(q=0.0, s=params.p)
    bad = params.assumption_violations()
    if bad:
        for msg in bad:
            _err(f"warning: {msg}")
        print("regimes\tOutOfTheory")
        return EXIT_OK
    names = regime_names(classify_regime(params))
    print(f"regimes\t{'+'.join(names)}")
    print(f"r\t{params.r:.6g}")
    try:
        pred = predict_rates(params, names)
    except OutOfTheory:
        return EXIT_OK
    print("quantity\tpredicted\tsource")
    for qty in RATE_QUANTITIES:
        if qty in pred.exponents:
            print(f"{qty}\t{pred.exponents[qty]:.6g}\t{pred.sources[qty]}")
    return EXIT_OK


def cmd_verify(args):
    doc = _load(args)
    if args.which == "saddle":
        p = doc["params"]
        checks = vf.verify_saddle(resolve_instance(doc["experiment"]["instance"]),
                                  c=float(p["c"]), p=float(p["p"]), seed=int(doc["seed"]))
    elif args.which == "integrator":
        checks = vf.verify_integrator()
    else:
        spec_doc = dict(doc, experiment=dict(doc["experiment"], system="main"))
        spec = spec_from_config(spec_doc)
        checks = vf.verify_lemmas(spec.params, corrupt=args.corrupt,
                                  instance=resolve_instance(spec.instance_ref))
    for c in checks:
        print(c.line())
    return EXIT_OK if vf.all_passed(checks) else EXIT_FAIL


def cmd_dump_defaults(args):
    sys.stdout.write(cfg.dump_defaults())
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config document")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override a config entry (repeatable, last write wins)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int, help="parallel sweep workers")
    common.add_argument("--seed", type=int, help="seed for randomized fixtures")

    ap = argparse.ArgumentParser(prog="tikhonov-flow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run one experiment").set_defaults(
        func=cmd_simulate)
    sub.add_parser("sweep", parents=[common], help="run a parameter sweep").set_defaults(
        func=cmd_sweep)
    sub.add_parser("rates", parents=[common], help="print predicted exponents").set_defaults(
        func=cmd_rates)
    pv = sub.add_parser("verify", parents=[common], help="run a self-check suite")
    pv.add_argument("which", choices=("saddle", "lemmas", "integrator"))
    pv.add_argument("--corrupt", action="store_true",
                    help="append the corrupted-g fixture (negative control, exits 1)")
    pv.set_defaults(func=cmd_verify)
    pc = sub.add_parser("config", help="configuration helpers")
    csub = pc.add_subparsers(dest="config_command", required=True)
    csub.add_parser("dump-defaults", help="print every default").set_defaults(
        func=cmd_dump_defaults)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        _err(f"config error: {exc}")
        return EXIT_ERROR
    except (FlowError, ValueError, TypeError, OSError, ArithmeticError) as exc:
        _err(f"error: {type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
