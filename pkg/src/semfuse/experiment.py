"""Simulate, fuse, evaluate and compare, on top of the on-disk formats."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import ExperimentConfig
from .core import LabelSet
from .errors import LabelSetMismatch, OutputError
from .fusion import FusionStrategy
from .io import (Dataset, DatasetMeta, DatasetWriter, read_voxel_labels, write_text,
                 write_voxel_labels)
from .mapping import IntegrationSummary, SemanticVoxelMap
from .metrics import ComparisonRow, EvalReport, compare_strategies, evaluate
from .observation import FusionConfig
from .sim import generate_trajectory, observed_keys, rasterize_gt, simulate


@dataclass(frozen=True)
class SimulationSummary:
    frames: int
    valid_pixels: int
    outlier_pixels: int
    gt_voxels: int


def simulate_dataset(cfg: ExperimentConfig, root) -> SimulationSummary:
    """Render the configured scene and write a dataset directory."""
    scene = cfg.scene.build()
    intr = cfg.camera.intrinsics()
    meta = DatasetMeta(cfg.labels, intr, cfg.sensor.obs_format, cfg.voxel_size)
    writer = DatasetWriter(root, meta)
    seen: set = set()
    n_valid = n_out = 0
    for sf in simulate(scene, generate_trajectory(cfg.trajectory), intr, cfg.sensor.model(),
                       cfg.labels.K, cfg.fusion.mc_samples, cfg.seed,
                       moments=cfg.sensor.obs_format == "moments"):
        writer.add(sf.frame, sf.outlier.astype(float))
        seen |= observed_keys([sf.frame], cfg.voxel_size)
        n_valid += int((sf.true_class >= 0).sum())
        n_out += int(sf.outlier.sum())
    gt = rasterize_gt(scene, cfg.voxel_size)
    if cfg.scene.gt_mode == "observed":
        gt = [r for r in gt if r[0] in seen]
    writer.write_gt(gt)
    return SimulationSummary(len(writer.records), n_valid, n_out, len(gt))


def fuse_dataset(root, strategy: FusionStrategy, fusion: FusionConfig | None = None,
                 stride: int = 1) -> tuple[SemanticVoxelMap, list[IntegrationSummary]]:
    """Integrate every frame of a dataset, in file order, into a fresh map."""
    ds = Dataset(root)
    vmap = SemanticVoxelMap(ds.meta.labels, strategy, fusion, ds.meta.voxel_size, stride)
    summaries = [vmap.integrate_frame(frame) for frame in ds.frames()]
    return vmap, summaries


def write_map(path, vmap: SemanticVoxelMap) -> None:
    write_voxel_labels(path, vmap.export_labels(), vmap.labels.names, vmap.strategy.name)


def _file_labels(pred_classes, gt_classes, rows) -> LabelSet:
    if pred_classes and gt_classes and tuple(pred_classes) != tuple(gt_classes):
        raise LabelSetMismatch(f"map classes {list(pred_classes)} differ from "
                               f"ground truth classes {list(gt_classes)}")
    names = pred_classes or gt_classes
    if names:
        return LabelSet(tuple(names))
    top = max((r[1] for r in rows), default=1)
    return LabelSet.anonymous(max(top + 1, 2))


def evaluate_files(map_path, gt_path) -> tuple[str, EvalReport]:
    """Strategy name recorded in the map file (or its stem) and the report."""
    pred, gt = read_voxel_labels(map_path), read_voxel_labels(gt_path)
    labels = _file_labels(pred.classes, gt.classes, pred.rows + gt.rows)
    return pred.strategy or Path(map_path).stem, evaluate(pred.rows, gt.rows, labels)


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.4f}"


def format_csv(rows: Sequence[ComparisonRow], labels: LabelSet) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", *(f"iou_{n}" for n in labels.names), "miou", "accuracy"])
    for r in rows:
        w.writerow([r.strategy, *map(_num, r.per_class_iou), _num(r.miou), _num(r.accuracy)])
    return buf.getvalue()


def report_json(strategy: str, report: EvalReport) -> str:
    return json.dumps({"strategy": strategy, **report.to_dict()}, indent=2) + "\n"


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc}") from exc
    return path


def run_compare(cfg: ExperimentConfig, out, stride: int | None = None) -> list[ComparisonRow]:
    """Simulate once, then fuse and evaluate every configured strategy.

    Layout under ``out``: ``dataset/``, ``maps/<name>.txt``,
    ``reports/<name>.json`` and ``comparison.csv``.
    """
    out = _mkdir(Path(out))
    dataset = out / "dataset"
    simulate_dataset(cfg, dataset)
    gt = Dataset(dataset).ground_truth()
    maps, reports_dir = _mkdir(out / "maps"), _mkdir(out / "reports")
    stride = cfg.fusion.stride if stride is None else stride
    reports: dict[str, EvalReport] = {}
    for name in cfg.strategies:
        strategy = cfg.strategy(name)
        vmap, _ = fuse_dataset(dataset, strategy, cfg.fusion.config(), stride)
        write_map(maps / f"{strategy.name}.txt", vmap)
        report = evaluate(vmap.export_labels(), gt.rows, cfg.labels)
        write_text(reports_dir / f"{strategy.name}.json", report_json(strategy.label, report))
        reports[strategy.label] = report
    rows = compare_strategies(reports)
    write_text(out / "comparison.csv", format_csv(rows, cfg.labels))
    return rows
