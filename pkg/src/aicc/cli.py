"""Command-line entry point: ``aicc {train,eval,sweep,bench,lcc}``."""
import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .datagen import PROBLEM_NAMES
from .errors import AiccError, InsufficientResultsError
from .experiments import RunConfig

# flag dest -> RunConfig field
_OVERRIDES = {
    "seed": "seed", "out": "out", "checkpoint": "checkpoint", "problem": "problem",
    "m": "m", "k": "k", "g": "g", "p": "p", "epochs": "epochs",
    "batch_size": "batch_size", "workers": "workers", "erasures": "erasures",
}


def _common(parser):
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--checkpoint", help="checkpoint path (default OUT/model.ckpt)")
    parser.add_argument("--problem", choices=PROBLEM_NAMES)
    parser.add_argument("--m", type=int, help="matrix dimension")
    parser.add_argument("--k", type=int, help="inputs per dataset")
    parser.add_argument("--g", type=int, help="encoder polynomial degree")
    parser.add_argument("--p", type=int, help="computation polynomial degree")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--workers", type=int, help="number of workers N (0: recovery threshold)")
    parser.add_argument("--erasures", type=int, help="number of erased workers")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="aicc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="train and checkpoint the best epoch"))
    _common(sub.add_parser("eval", help="NRMSE of a checkpoint through the simulated cluster"))
    sweep = sub.add_parser("sweep", help="train + eval over one axis")
    _common(sweep)
    sweep.add_argument("--axis", choices=("M", "K", "R"), required=True)
    sweep.add_argument("--values", required=True, help="comma-separated integers")
    bench = sub.add_parser("bench", help="runtime of coded inference vs direct computation")
    _common(bench)
    bench.add_argument("--reps", type=int, help="repetitions to average over")
    _common(sub.add_parser("lcc", help="exact LCC recovery under erasures"))
    return parser


def resolve_config(args):
    rc = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "reps", None) is not None:
        overrides["bench_reps"] = args.reps
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return RunConfig.from_mapping(overrides, base=rc)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = resolve_config(args)
        if args.command == "train":
            result = experiments.cmd_train(rc)
            print(f"best epoch {result.best_epoch + 1} loss {result.best_loss:.6g} -> {rc.checkpoint_path}")
        elif args.command == "eval":
            _, summary = experiments.cmd_eval(rc)
            print(f"{summary['problem']} NRMSE mean {summary['nrmse_mean']:.4%} "
                  f"std {summary['nrmse_std']:.4%} over {summary['instances']} datasets")
        elif args.command == "sweep":
            values = [int(v) for v in args.values.split(",") if v.strip()]
            for row in experiments.cmd_sweep(rc, args.axis, values):
                print(f"{row['axis']}={row['value']} NRMSE {float(row['nrmse_mean']):.4%}")
        elif args.command == "bench":
            for row in experiments.cmd_bench(rc):
                print(f"{row['scheme']:>6}: {float(row['mean_seconds']):.6f} s")
        elif args.command == "lcc":
            for row in experiments.cmd_lcc(rc):
                print(f"{row['case']}: {row['status']} {row['max_rel_error']}")
    except InsufficientResultsError as exc:
        print(f"decode failure: {exc}", file=sys.stderr)
        return 3
    except (AiccError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
