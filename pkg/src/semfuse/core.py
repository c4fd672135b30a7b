"""Shared domain types: label sets, simplex helpers, voxel keys and camera geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateDistribution

SIMPLEX_TOL = 1e-9
SNAP_TOL = 1e-4  # voxel units; covers f32 depth round-off at room scale


@dataclass(frozen=True)
class LabelSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise ValueError("a label set needs at least two classes")
        if len(set(names)) != len(names):
            raise ValueError(f"class names must be distinct: {names}")

    @property
    def K(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    @classmethod
    def anonymous(cls, K: int) -> "LabelSet":
        return cls(tuple(f"class_{i}" for i in range(K)))


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


def check_simplex(p, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate that the last axis of ``p`` holds probability vectors.

    Vectors outside tolerance are rejected, never silently renormalized.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] < 2:
        raise ValueError("probability vectors need at least two components")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector contains non-finite values")
    if np.any(p < -tol) or np.any(p > 1.0 + tol):
        raise ValueError("probability components must lie in [0, 1]")
    err = np.abs(p.sum(axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"probabilities do not sum to 1 (max error {err.max():.3g})")
    return p


def normalize(raw) -> np.ndarray:
    """Scale nonnegative weights so they sum to one along the last axis."""
    raw = np.asarray(raw, dtype=np.float64)
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValueError("normalize expects finite nonnegative weights")
    total = raw.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateDistribution("cannot normalize an all-zero vector")
    return raw / total


def argmax_class(p) -> int | np.ndarray:
    """Index of the most probable class; ties go to the lowest index."""
    # np.argmax already returns the first maximal index
    return np.argmax(np.asarray(p), axis=-1)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image size must be positive")

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "CameraIntrinsics":
        f = 0.5 * width / np.tan(np.radians(hfov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform; quaternion stored as (qx, qy, qz, qw)."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = tuple(float(x) for x in self.translation)
        q = tuple(float(x) for x in self.rotation)
        if len(t) != 3 or len(q) != 4:
            raise ValueError("pose needs 3 translation and 4 quaternion components")
        if abs(np.sqrt(sum(x * x for x in q)) - 1.0) > 1e-9:
            raise ValueError(f"quaternion is not unit norm: {q}")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "_matrix", Rotation.from_quat(q).as_matrix())

    @classmethod
    def from_matrix(cls, R, t) -> "Pose":
        q = Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_quat()
        return cls(tuple(t), tuple(q / np.linalg.norm(q)))

    @property
    def R(self) -> np.ndarray:
        return self._matrix

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation)

    def apply(self, points_cam) -> np.ndarray:
        """Map camera-frame points (..., 3) to the world frame."""
        return np.asarray(points_cam) @ self._matrix.T + self.t


def voxel_keys(points, voxel_size: float) -> np.ndarray:
    """Integer voxel indices floor(x / voxel_size), elementwise.

    Quotients within SNAP_TOL of an integer are taken as that integer, so a
    surface lying on a voxel boundary lands in one cell despite rounding noise
    (0.3 / 0.1 evaluates to 2.9999999999999996 in binary floating point).
    """
    q = np.asarray(points, dtype=np.float64) / voxel_size
    r = np.round(q)
    q = np.where(np.abs(q - r) <= SNAP_TOL, r, q)
    return np.floor(q).astype(np.int64)


def as_keys(rows: np.ndarray) -> list[VoxelKey]:
    return [VoxelKey(int(a), int(b), int(c)) for a, b, c in np.asarray(rows).tolist()]
