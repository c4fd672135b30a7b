"""Command-line entry point: ``semfuse {simulate,fuse,eval,compare}``.

Exit codes: 0 success, 1 unexpected library error, 2 invalid config or usage,
3 unwritable output, 4 malformed frame, 5 out-of-order frames, 6 label-set
mismatch, 7 empty ground truth, 8 invalid scene, 9 malformed file,
10 degenerate distribution.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESETS, ExperimentConfig
from .errors import InvalidConfig, OutputError, SemFuseError
from .experiment import (evaluate_files, format_csv, fuse_dataset, report_json, run_compare,
                         simulate_dataset, write_map)
from .io import write_text
from .metrics import compare_strategies


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = 0
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _load_config(args, required: bool = True) -> ExperimentConfig | None:
    if args.config and args.preset:
        raise InvalidConfig("give --config or --preset, not both")
    if args.preset:
        cfg = PRESETS[args.preset]()
    elif args.config:
        cfg = ExperimentConfig.load(args.config)
    elif required:
        raise InvalidConfig("a --config file or --preset is required")
    else:
        return None
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg.output.dataset)
    s = simulate_dataset(cfg, out)
    print(f"wrote {s.frames} frames and {s.gt_voxels} GT voxels to {out} "
          f"({s.outlier_pixels}/{s.valid_pixels} outlier pixels)")
    return 0


def cmd_fuse(args) -> int:
    cfg = _load_config(args, required=False) or ExperimentConfig()
    try:
        strategy = cfg.strategy(args.strategy)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    stride = args.stride or cfg.fusion.stride
    vmap, summaries = fuse_dataset(args.dataset, strategy, cfg.fusion.config(), stride)
    out = Path(args.out or f"map_{strategy.name}.txt")
    write_map(out, vmap)
    used = sum(s.pixels_used for s in summaries)
    skipped = sum(s.pixels_skipped for s in summaries)
    print(f"{strategy.label}: {len(vmap)} voxels from {used} pixels "
          f"({skipped} skipped) -> {out}")
    return 0


def cmd_eval(args) -> int:
    name, report = evaluate_files(args.map, args.gt)
    csv_text = format_csv(compare_strategies({name: report}), report.labels)
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create {out}: {exc}") from exc
        write_text(out / "report.json", report_json(name, report))
        write_text(out / "report.csv", csv_text)
    else:
        sys.stdout.write(report_json(name, report))
    sys.stdout.write(csv_text)
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg.output.results)
    rows = run_compare(cfg, out, args.stride)
    width = max(len(r.strategy) for r in rows) if rows else 0
    for r in rows:
        print(f"{r.strategy:<{width}}  mIoU {100 * r.miou:5.1f}  acc {100 * r.accuracy:5.1f}")
    print(f"wrote {out / 'comparison.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semfuse", description="Semantic voxel fusion experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp, seed=True):
        sp.add_argument("--config", help="experiment TOML file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
        if seed:
            sp.add_argument("--seed", type=_u64, help="override the config seed")

    sp = sub.add_parser("simulate", help="render a synthetic dataset")
    config_flags(sp)
    sp.add_argument("--out", help="dataset directory (default: output.dataset)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fuse", help="fuse a dataset into a voxel label map")
    sp.add_argument("dataset")
    sp.add_argument("--strategy", required=True,
                    help="sum_probs, sum_labels, bayesian, r, d, dr or robust")
    config_flags(sp, seed=False)
    sp.add_argument("--stride", type=_positive, help="use every n-th pixel in each direction")
    sp.add_argument("--out", help="map file (default: map_<strategy>.txt)")
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("eval", help="score a map file against ground truth")
    sp.add_argument("map")
    sp.add_argument("gt")
    sp.add_argument("--out", help="directory for report.json and report.csv")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="simulate once and evaluate every strategy")
    config_flags(sp)
    sp.add_argument("--stride", type=_positive)
    sp.add_argument("--out", help="results directory (default: output.results)")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SemFuseError as exc:
        print(f"semfuse {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"semfuse {args.command}: error: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
