"""Sparse semantic voxel map fed by depth images with per-pixel class observations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CameraIntrinsics, LabelSet, Pose, VoxelKey, check_simplex, voxel_keys
from .errors import MalformedFrame, OrderViolation
from .fusion import FusionStrategy, StateArrays, VoxelState, ROBUST_DR
from .observation import FusionConfig

DEFAULT_VOXEL_SIZE = 0.1


def back_project(u: float, v: float, d: float, intr: CameraIntrinsics, pose: Pose) -> np.ndarray | None:
    """World point seen at pixel (u, v) with z-depth ``d``; None for invalid depth."""
    if not (math.isfinite(d) and d > 0):
        return None
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside a {intr.width}x{intr.height} image")
    p_cam = np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d])
    return pose.apply(p_cam)


def back_project_depth(depth: np.ndarray, intr: CameraIntrinsics, pose: Pose, stride: int = 1):
    """Vectorized back-projection of every valid pixel on a ``stride`` grid.

    Returns ``(points (N, 3), v (N,), u (N,), n_skipped)``; pixels are in
    raster order.
    """
    sub = depth[::stride, ::stride]
    vv, uu = np.nonzero(np.isfinite(sub) & (sub > 0))
    v, u = vv * stride, uu * stride
    d = depth[v, u]
    p_cam = np.stack([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d], axis=-1)
    return pose.apply(p_cam), v, u, sub.size - len(v)


def voxelize(point, voxel_size: float = DEFAULT_VOXEL_SIZE) -> VoxelKey:
    ix, iy, iz = voxel_keys(np.asarray(point, dtype=np.float64).reshape(1, 3), voxel_size)[0]
    return VoxelKey(int(ix), int(iy), int(iz))


@dataclass
class Frame:
    """One RGB-D observation.

    ``depth`` is (H, W) in meters, 0 or non-finite meaning no return. Class
    observations are either MC ``samples`` of shape (M, K, H, W) or a
    ``mean``/``variance`` pair of shape (K, H, W) each.
    """

    timestamp: float
    pose: Pose
    intrinsics: CameraIntrinsics
    depth: np.ndarray
    samples: np.ndarray | None = None
    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    frame_id: int | None = None

    def __post_init__(self):
        intr = self.intrinsics
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.shape != (intr.height, intr.width):
            raise MalformedFrame(f"depth shape {self.depth.shape} does not match "
                                 f"{intr.height}x{intr.width} intrinsics", self.frame_id)
        hw = self.depth.shape
        if self.samples is not None:
            if self.mean is not None or self.variance is not None:
                raise MalformedFrame("give either samples or mean/variance, not both", self.frame_id)
            self.samples = np.asarray(self.samples, dtype=np.float64)
            if self.samples.ndim != 4 or self.samples.shape[2:] != hw:
                raise MalformedFrame(f"samples shape {self.samples.shape} is not (M, K, {hw[0]}, "
                                     f"{hw[1]})", self.frame_id)
        else:
            if self.mean is None:
                raise MalformedFrame("frame carries no class observations", self.frame_id)
            self.mean = np.asarray(self.mean, dtype=np.float64)
            if self.mean.ndim != 3 or self.mean.shape[1:] != hw:
                raise MalformedFrame(f"mean shape {self.mean.shape} is not (K, {hw[0]}, {hw[1]})",
                                     self.frame_id)
            if self.variance is not None:
                self.variance = np.asarray(self.variance, dtype=np.float64)
                if self.variance.shape != self.mean.shape:
                    raise MalformedFrame("variance and mean shapes differ", self.frame_id)

    @property
    def num_classes(self) -> int:
        return self.samples.shape[1] if self.samples is not None else self.mean.shape[0]

    def pixel_moments(self, v: np.ndarray, u: np.ndarray):
        """Predictive mean and raw MC variance at the given pixels, (N, K) each."""
        if self.samples is not None:
            s = np.moveaxis(self.samples[:, :, v, u], 1, 2)  # (M, N, K)
            return s.mean(axis=0), s.var(axis=0)
        mean = self.mean[:, v, u].T
        var = None if self.variance is None else self.variance[:, v, u].T
        return mean, var


class IntegrationSummary(NamedTuple):
    voxels_touched: int
    voxels_created: int
    pixels_used: int
    pixels_skipped: int


class VoxelQuery(NamedTuple):
    posterior: np.ndarray
    label: int
    alpha_bar: np.ndarray


class SemanticVoxelMap:
    """Hash map from integer voxel keys to fused class beliefs.

    Only voxels hit by at least one valid depth pixel are stored.
    """

    def __init__(self, labels: LabelSet | int, strategy: FusionStrategy = ROBUST_DR,
                 cfg: FusionConfig | None = None, voxel_size: float = DEFAULT_VOXEL_SIZE,
                 stride: int = 1):
        self.labels = labels if isinstance(labels, LabelSet) else LabelSet.anonymous(labels)
        self.strategy = strategy
        self.cfg = cfg or FusionConfig()
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if stride < 1:
            raise ValueError("stride must be a positive integer")
        self.voxel_size = float(voxel_size)
        self.stride = int(stride)
        self.last_timestamp = -math.inf
        self._rows: dict[VoxelKey, int] = {}
        self._store = StateArrays(self.labels.K, strategy, self.cfg)

    def __len__(self):
        return len(self._rows)

    def __contains__(self, key):
        return tuple(key) in self._rows

    def keys(self) -> list[VoxelKey]:
        return sorted(self._rows)

    def _rows_for(self, keys: np.ndarray) -> tuple[np.ndarray, int]:
        rows = np.empty(len(keys), dtype=np.int64)
        new = []
        for i, k in enumerate(map(tuple, keys.tolist())):
            r = self._rows.get(k)
            if r is None:
                new.append(i)
            else:
                rows[i] = r
        if new:
            fresh = self._store.add_rows(len(new))
            rows[new] = fresh
            for i, r in zip(new, fresh.tolist()):
                self._rows[VoxelKey(*keys[i].tolist())] = r
        return rows, len(new)

    def integrate_frame(self, frame: Frame) -> IntegrationSummary:
        """Back-project, group by voxel and fuse one frame."""
        if frame.timestamp < self.last_timestamp:
            raise OrderViolation(f"frame at t={frame.timestamp} arrives after t={self.last_timestamp}")
        if frame.num_classes != self.labels.K:
            raise MalformedFrame(f"frame has {frame.num_classes} classes, map expects "
                                 f"{self.labels.K}", frame.frame_id)
        points, v, u, skipped = back_project_depth(frame.depth, frame.intrinsics, frame.pose,
                                                   self.stride)
        self.last_timestamp = frame.timestamp
        if len(points) == 0:
            return IntegrationSummary(0, 0, 0, skipped)
        mean, var = frame.pixel_moments(v, u)
        try:
            check_simplex(mean)
        except ValueError as exc:
            raise MalformedFrame(str(exc), frame.frame_id) from None
        if var is not None and (not np.all(np.isfinite(var)) or np.any(var < 0)):
            raise MalformedFrame("variances must be finite and nonnegative", frame.frame_id)

        keys, inverse = np.unique(voxel_keys(points, self.voxel_size), axis=0, return_inverse=True)
        unique_rows, created = self._rows_for(keys)
        self._store.update(unique_rows[inverse.reshape(-1)], mean, var)
        return IntegrationSummary(len(keys), created, len(points), skipped)

    def state(self, key) -> VoxelState | None:
        row = self._rows.get(tuple(key))
        return None if row is None else self._store.state(row)

    def query(self, key) -> VoxelQuery | None:
        row = self._rows.get(tuple(key))
        if row is None:
            return None
        post = self._store.posterior(np.array([row]))[0]
        return VoxelQuery(post, int(np.argmax(post)), self._store.alpha_bar[row].copy())

    def export_labels(self) -> list[tuple[VoxelKey, int, float]]:
        """(key, label, max probability) for every stored voxel, sorted by key."""
        if not self._rows:
            return []
        keys = sorted(self._rows)
        rows = np.array([self._rows[k] for k in keys])
        post = self._store.posterior(rows)
        labels = np.argmax(post, axis=-1)
        conf = post[np.arange(len(rows)), labels]
        return [(k, int(lab), float(c)) for k, lab, c in zip(keys, labels.tolist(), conf.tolist())]

    def label_array(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted keys as an (N, 3) int array and their labels."""
        rows = self.export_labels()
        keys = np.array([r[0] for r in rows], dtype=np.int64).reshape(-1, 3)
        return keys, np.array([r[1] for r in rows], dtype=np.int64)
