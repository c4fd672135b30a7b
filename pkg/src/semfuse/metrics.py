"""Map-space evaluation: per-class IoU, mIoU and voxel accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .core import LabelSet
from .errors import EmptyGroundTruth, LabelSetMismatch
from .fusion import TABLE_ORDER


@dataclass(frozen=True)
class EvalReport:
    labels: LabelSet
    confusion: np.ndarray  # (K, K) rows = GT class, cols = predicted, over shared keys
    missing: np.ndarray  # (K,) GT voxels absent from the prediction, per GT class
    extra: np.ndarray  # (K,) predicted voxels absent from GT, per predicted class

    @property
    def n_gt(self) -> int:
        return int(self.confusion.sum() + self.missing.sum())

    @property
    def n_pred(self) -> int:
        return int(self.confusion.sum() + self.extra.sum())

    @property
    def n_matched(self) -> int:
        return int(self.confusion.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.confusion)

    @property
    def fp(self) -> np.ndarray:
        return self.confusion.sum(axis=0) - self.tp + self.extra

    @property
    def fn(self) -> np.ndarray:
        return self.confusion.sum(axis=1) - self.tp + self.missing

    @property
    def present(self) -> np.ndarray:
        """Classes occurring in the GT or the prediction."""
        return (self.tp + self.fp + self.fn) > 0

    @property
    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN for classes in neither GT nor prediction."""
        denom = self.tp + self.fp + self.fn
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, self.tp / np.where(denom > 0, denom, 1), np.nan)

    @property
    def miou(self) -> float:
        return float(np.mean(self.per_class_iou[self.present]))

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.n_gt)

    def to_dict(self) -> dict:
        iou = self.per_class_iou
        return {
            "classes": list(self.labels.names),
            "per_class_iou": {n: (None if np.isnan(v) else float(v))
                              for n, v in zip(self.labels.names, iou)},
            "miou": self.miou,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "missing": self.missing.tolist(),
            "extra": self.extra.tolist(),
            "voxels": {"gt": self.n_gt, "predicted": self.n_pred, "matched": self.n_matched},
        }


def _as_dict(rows: Iterable, K: int, what: str) -> dict[tuple, int]:
    out = {}
    for row in rows:
        key, label = tuple(row[0]), int(row[1])
        if not 0 <= label < K:
            raise ValueError(f"{what} label {label} outside [0, {K})")
        out[key] = label
    return out


def evaluate(pred: Iterable, gt: Iterable, labels: LabelSet | int) -> EvalReport:
    """Compare predicted and ground-truth voxel labelings.

    Both inputs are iterables of ``(key, label, ...)``. GT voxels missing from
    the prediction count as false negatives, predicted voxels outside the GT
    as false positives; accuracy is over GT voxels only.
    """
    labels = labels if isinstance(labels, LabelSet) else LabelSet.anonymous(labels)
    K = labels.K
    pred_d, gt_d = _as_dict(pred, K, "predicted"), _as_dict(gt, K, "ground-truth")
    if not gt_d:
        raise EmptyGroundTruth("ground truth contains no voxels")
    confusion = np.zeros((K, K), dtype=np.int64)
    missing = np.zeros(K, dtype=np.int64)
    extra = np.zeros(K, dtype=np.int64)
    for key, g in gt_d.items():
        p = pred_d.get(key)
        if p is None:
            missing[g] += 1
        else:
            confusion[g, p] += 1
    for key, p in pred_d.items():
        if key not in gt_d:
            extra[p] += 1
    return EvalReport(labels, confusion, missing, extra)


def restrict_to(rows: Iterable, keys) -> list:
    """Keep only the rows whose key is in ``keys``."""
    keys = {tuple(k) for k in keys}
    return [r for r in rows if tuple(r[0]) in keys]


class ComparisonRow(NamedTuple):
    strategy: str
    per_class_iou: tuple[float, ...]
    miou: float
    accuracy: float


def compare_strategies(reports: Mapping[str, EvalReport]) -> list[ComparisonRow]:
    """One row per strategy; known strategies follow the fixed table order,
    anything else keeps its given order after them."""
    if not reports:
        return []
    reference = next(iter(reports.values())).labels
    for name, rep in reports.items():
        if rep.labels != reference:
            raise LabelSetMismatch(f"report {name!r} uses {rep.labels.names}, "
                                   f"expected {reference.names}")
    order = {s.label: i for i, s in enumerate(TABLE_ORDER)}
    names = sorted(reports, key=lambda n: (order.get(n, len(order)), list(reports).index(n)))
    return [ComparisonRow(n, tuple(float(x) for x in reports[n].per_class_iou),
                          reports[n].miou, reports[n].accuracy) for n in names]
