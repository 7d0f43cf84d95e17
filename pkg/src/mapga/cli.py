"""Experiment command line: solve / bench / make-masks / make-data / report."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import DATASET_KINDS, make_synthetic_dataset
from .errors import ConfigError
from .experiment import (
    METRICS_COLUMNS,
    SOLVER_NAMES,
    config_from_dict,
    load_config,
    run_experiment,
    summarize,
)
from .operators import MASK_KINDS, make_mask
from .priors import GaussianMixture


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapga", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a single inverse problem cell")
    solve.add_argument("--config", required=True, help="experiment config JSON")
    solve.add_argument("--mask", choices=MASK_KINDS)
    solve.add_argument("--sigma-y", type=float, dest="sigma_y")
    solve.add_argument("--solver", choices=SOLVER_NAMES)
    solve.add_argument("--seed", type=int)
    solve.add_argument("--out")

    bench = sub.add_parser("bench", help="run the full experiment grid")
    bench.add_argument("--config", required=True)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out")

    masks = sub.add_parser("make-masks", help="write mask JSON documents")
    masks.add_argument("--mask", choices=MASK_KINDS, action="append", help="default: all kinds")
    masks.add_argument("--width", type=int, default=8)
    masks.add_argument("--height", type=int, default=8)
    masks.add_argument("--channels", type=int, default=1)
    masks.add_argument("--out", default="masks")

    data = sub.add_parser("make-data", help="generate a synthetic dataset")
    data.add_argument("--kind", choices=DATASET_KINDS, required=True)
    data.add_argument("--count", type=int, required=True)
    data.add_argument("--width", type=int, default=8)
    data.add_argument("--height", type=int, default=8)
    data.add_argument("--channels", type=int, default=1)
    data.add_argument("--seed", type=int, default=0)
    data.add_argument("--mixture", help="mixture JSON file (for gmm-draws)")
    data.add_argument("--out", required=True)

    report = sub.add_parser("report", help="aggregate a metrics CSV into a summary table")
    report.add_argument("--metrics", required=True)
    report.add_argument("--out", help="summary CSV path (default: print)")
    return parser


def _cmd_solve(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    if args.mask is not None:
        doc["masks"] = [args.mask]
    if args.sigma_y is not None:
        doc["sigma_y"] = [args.sigma_y]
    if args.solver is not None:
        doc["solvers"] = [args.solver]
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    for key in ("masks", "sigma_y", "solvers", "seeds"):
        if len(doc.get(key, [])) != 1:
            raise ConfigError(f"$.{key}: solve needs exactly one entry (or the matching flag)")
    if args.out is not None:
        doc["out_dir"] = args.out
    cfg = config_from_dict(doc)
    rows = run_experiment(cfg)
    print(",".join(METRICS_COLUMNS))
    print(",".join(rows[0][k] for k in METRICS_COLUMNS))
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.out is not None:
        cfg.out_dir = args.out
    rows = run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {len(rows)} rows to {Path(cfg.out_dir) / 'metrics.csv'}")
    return 0


def _cmd_make_masks(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = args.mask or list(MASK_KINDS)
    for kind in kinds:
        mask = make_mask(kind, args.width, args.height, args.channels)
        path = out / f"{kind}_{args.width}x{args.height}x{args.channels}.json"
        path.write_text(mask.to_json())
        print(f"{path} m={mask.m}")
    return 0


def _cmd_make_data(args) -> int:
    mixture = None
    if args.mixture is not None:
        mixture = GaussianMixture.from_json(Path(args.mixture).read_text())
    rng = np.random.default_rng(args.seed)
    samples = make_synthetic_dataset(
        args.kind,
        args.count,
        (args.channels, args.height, args.width),
        rng,
        mixture=mixture,
        out_path=args.out,
    )
    print(f"wrote {samples.shape[0]} samples of dimension {samples.shape[1]} to {args.out}")
    return 0


def _cmd_report(args) -> int:
    with open(args.metrics, newline="") as fh:
        rows = list(csv.DictReader(fh))
    summary = summarize(rows)
    columns = ["solver", "mask", "sigma_y", "count", "mean_mse", "mean_psnr", "mean_residual"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(summary)
        print(f"wrote {len(summary)} groups to {args.out}")
    else:
        print(",".join(columns))
        for row in summary:
            print(",".join(row[k] for k in columns))
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "make-masks": _cmd_make_masks,
    "make-data": _cmd_make_data,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # single machine-readable error line on any failure
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
