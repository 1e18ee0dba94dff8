"""Command-line entry point: ``fusegate train|compare|inspect|gen-data``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data import SyntheticDrivingConfig, generate_driving, write_stream_csv
from .errors import FusegateError
from .harness import (
    FULL_ITERATIONS,
    ExperimentConfig,
    compare,
    emit_reports,
    inspect_weights,
    load_compare_config,
    load_config,
    read_results,
    train,
)


def _scaled(cfg: ExperimentConfig, args) -> ExperimentConfig:
    iterations = None
    if args.full_scale:
        iterations = FULL_ITERATIONS.get(cfg.dataset.kind, FULL_ITERATIONS["driving"])
    if args.iterations is not None:
        iterations = args.iterations
    if iterations is None:
        return cfg
    return replace(cfg, training=replace(cfg.training, iterations=iterations)).validate()


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("runs") / cfg.name


def cmd_train(args) -> int:
    cfg = _scaled(load_config(args.config), args)
    out = _out_dir(cfg, args)
    result = train(replace(cfg, output_dir=str(out)))
    print(f"{result.kind} [{result.perturbation}] seed {result.seed}: "
          f"accuracy {100 * result.accuracy:.2f}% on {result.n_test} test windows")
    print(f"wrote {out}")
    return 0


def cmd_compare(args) -> int:
    configs = [_scaled(c, args) for c in load_compare_config(args.config)]
    table, results = compare(configs, workers=args.workers)
    out = _out_dir(configs[0], args)
    emit_reports(results, out)
    print(table.format())
    print(f"wrote {out}")
    return 0


def _perturbed_feature(run, explicit):
    if explicit is not None:
        return run.feature_names.index(explicit) if explicit in run.feature_names else int(explicit)
    feats = run.config.get("perturbation", {}).get("features")
    return feats[0] if feats and len(feats) == 1 else None


def cmd_inspect(args) -> int:
    runs = read_results(args.run)
    baselines = read_results(args.baseline) if args.baseline else [None] * len(runs)
    if len(baselines) != len(runs):
        raise FusegateError(f"{args.run} holds {len(runs)} runs but the baseline holds {len(baselines)}")
    for run, base in zip(runs, baselines):
        print(f"{run.name}: {run.kind} [{run.perturbation}] seed {run.seed}")
        feature = _perturbed_feature(run, args.feature) if base is not None else None
        print(inspect_weights(run, base, perturbed_feature=feature).format())
    return 0


def cmd_gen_data(args) -> int:
    cfg = SyntheticDrivingConfig(n_samples=args.samples, seed=args.seed)
    path = write_stream_csv(generate_driving(cfg), args.out)
    print(f"wrote {args.samples} samples to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusegate", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log each finished run")
    sub = parser.add_subparsers(dest="command", required=True)

    def scale_flags(p):
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (default: config output_dir or runs/<name>)")
        p.add_argument("--iterations", type=int, help="override the configured step count")
        p.add_argument("--full-scale", action="store_true",
                       help="use the full step counts (50k driving, 100k activity)")

    p = sub.add_parser("train", help="train one configuration")
    scale_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="train a [compare] grid and tabulate accuracy")
    scale_flags(p)
    p.add_argument("--workers", type=int, default=1, help="parallel training processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("inspect", help="print mean fusion weights of a run")
    p.add_argument("--run", required=True, help="run directory or results.json")
    p.add_argument("--baseline", help="clean run to diff against")
    p.add_argument("--feature", help="perturbed feature name or index (default: from the run config)")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen-data", help="write a synthetic sensor stream as CSV")
    p.add_argument("--kind", choices=["driving"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=SyntheticDrivingConfig.n_samples)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FusegateError, OSError) as exc:
        print(f"fusegate: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
