"""Synthetic box-world scenes with a Bayesian segmentation sensor stand-in.

Randomness comes from counter-based Philox streams keyed by
``(seed, stream tag, frame index)``, so any frame can be regenerated on its
own and frame order or parallel generation never changes the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .core import CameraIntrinsics, Pose, VoxelKey, voxel_keys
from .errors import InvalidScene
from .mapping import Frame, back_project_depth


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=stream)))


# ---------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    label: int

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a > b for a, b in zip(lo, hi)):
            raise InvalidScene(f"box corners must satisfy lo <= hi, got {lo} {hi}")
        if int(self.label) < 0:
            raise InvalidScene("box labels must be nonnegative")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class Scene:
    """Axis-aligned labeled boxes, optionally over a background floor plane.

    The floor is stored as a zero-height box after all others; on equal hit
    depth the earlier box wins.
    """

    boxes: tuple[Box, ...]
    background: int | None = None
    floor: Box | None = None
    surfaces: tuple[Box, ...] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        surfaces = self.boxes + ((self.floor,) if self.floor is not None else ())
        object.__setattr__(self, "surfaces", surfaces)

    @property
    def labels_used(self) -> set[int]:
        return {b.label for b in self.surfaces}


def generate_scene(boxes: Sequence = (), background: int | None = None,
                   floor_z: float | None = None,
                   floor_extent: Sequence[float] = (-5.0, 5.0, -5.0, 5.0)) -> Scene:
    """Build a scene from box specs (``Box`` or ``(lo, hi, label)``).

    A floor plane at ``floor_z`` labeled ``background`` is added when both are
    given.
    """
    parsed = tuple(b if isinstance(b, Box) else Box(*b) for b in boxes)
    floor = None
    if background is not None and floor_z is not None:
        x0, x1, y0, y1 = (float(v) for v in floor_extent)
        floor = Box((x0, y0, floor_z), (x1, y1, floor_z), background)
    if not parsed and floor is None:
        raise InvalidScene("scene has no boxes and no background plane")
    return Scene(parsed, background, floor)


def slab_intersect(origin, dirs, lo, hi):
    """Entry/exit ray parameters of an axis-aligned box for many rays.

    ``dirs`` is (N, 3); returns ``(t_enter, t_exit)`` with t_enter > t_exit
    meaning a miss.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64) - origin
    hi = np.asarray(hi, dtype=np.float64) - origin
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1, t2 = lo * inv, hi * inv
    parallel = dirs == 0.0
    inside = (lo <= 0.0) & (hi >= 0.0)
    # rays parallel to a slab either never leave it or never enter it
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return t_near.max(axis=-1), t_far.min(axis=-1)


def camera_rays(intr: CameraIntrinsics, pose: Pose) -> np.ndarray:
    """World-frame ray directions (H*W, 3) whose camera-z component is one."""
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    d_cam = np.stack([(u.ravel() - intr.cx) / intr.fx, (v.ravel() - intr.cy) / intr.fy,
                      np.ones(u.size)], axis=-1)
    return d_cam @ pose.R.T


def render_depth(scene: Scene, pose: Pose, intr: CameraIntrinsics):
    """Ray-cast z-depth and true class per pixel.

    Returns ``(depth (H, W), labels (H, W))``; depth 0 and label -1 where no
    surface is hit.
    """
    origin = pose.t
    dirs = camera_rays(intr, pose)
    best = np.full(len(dirs), np.inf)
    label = np.full(len(dirs), -1, dtype=np.int64)
    for box in scene.surfaces:
        t_in, t_out = slab_intersect(origin, dirs, box.lo, box.hi)
        t = np.where(t_in > 0, t_in, t_out)
        hit = (t_in <= t_out) & (t > 0) & (t < best)
        best[hit] = t[hit]
        label[hit] = box.label
    depth = np.where(np.isfinite(best), best, 0.0)
    shape = (intr.height, intr.width)
    return depth.reshape(shape), label.reshape(shape)


def _face_cells(box: Box, voxel_size: float) -> np.ndarray:
    lo = voxel_keys(box.lo, voxel_size)
    hi = voxel_keys(box.hi, voxel_size)
    cells = []
    for axis in range(3):
        t1, t2 = [a for a in range(3) if a != axis]
        for plane in {lo[axis], hi[axis]}:
            g1, g2 = np.meshgrid(np.arange(lo[t1], hi[t1] + 1), np.arange(lo[t2], hi[t2] + 1),
                                 indexing="ij")
            c = np.empty((g1.size, 3), dtype=np.int64)
            c[:, axis] = plane
            c[:, t1], c[:, t2] = g1.ravel(), g2.ravel()
            cells.append(c)
    return np.unique(np.concatenate(cells), axis=0)


def rasterize_gt(scene: Scene, voxel_size: float = 0.1) -> list[tuple[VoxelKey, int]]:
    """Label every voxel touching a (closed) box surface; earlier boxes win
    shared voxels. Sorted by key."""
    gt: dict[tuple, int] = {}
    for box in scene.surfaces:
        for cell in map(tuple, _face_cells(box, voxel_size).tolist()):
            gt.setdefault(cell, box.label)
    return [(VoxelKey(*k), gt[k]) for k in sorted(gt)]


# ---------------------------------------------------------------------------
# trajectories


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose (x right, y down, z forward) looking at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose.from_matrix(np.stack([right, down, forward], axis=1), position)


@dataclass(frozen=True)
class OrbitSpec:
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 3.0
    height: float = 1.5
    n_frames: int = 60
    dt: float = 0.1
    start_angle: float = 0.0
    arc: float = 2 * np.pi

    def __post_init__(self):
        if self.n_frames < 1 or self.radius <= 0 or self.dt <= 0:
            raise ValueError("orbit needs n_frames >= 1, radius > 0 and dt > 0")


def generate_trajectory(spec: OrbitSpec) -> list[tuple[float, Pose]]:
    """Camera poses on a horizontal circle around ``center``, all aimed at it,
    ``arc / n_frames`` radians apart, with timestamps ``i * dt``."""
    cx, cy, cz = spec.center
    out = []
    for i in range(spec.n_frames):
        theta = spec.start_angle + spec.arc * i / spec.n_frames
        pos = (cx + spec.radius * np.cos(theta), cy + spec.radius * np.sin(theta), spec.height)
        out.append((i * spec.dt, look_at(pos, spec.center)))
    return out


# ---------------------------------------------------------------------------
# sensor


@dataclass(frozen=True)
class SensorModel:
    """Synthetic MC-dropout segmentation output.

    ``spread_correct`` and ``spread_outlier`` are Dirichlet dispersions: MC
    samples are drawn from Dir(mean / spread), so 0 means every sample equals
    the mean and larger values scatter samples toward the simplex corners.
    """

    p_correct: float = 0.85
    outlier_rate: float = 0.0
    outlier_confidence: float = 0.99
    spread_correct: float = 0.01
    spread_outlier: float = 1.0
    uncertainty_error_correlation: float = 0.8

    def __post_init__(self):
        for name in ("p_correct", "outlier_rate", "outlier_confidence",
                     "uncertainty_error_correlation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.spread_correct < 0 or self.spread_outlier < 0:
            raise ValueError("spreads must be nonnegative")


class SensorDraw(NamedTuple):
    samples: np.ndarray  # (M, N, K)
    outlier: np.ndarray  # (N,) bool
    predicted_mean: np.ndarray  # (N, K) centre of the sample distribution


def _peaked(cls: np.ndarray, mass: float, K: int) -> np.ndarray:
    out = np.full((len(cls), K), (1.0 - mass) / (K - 1))
    out[np.arange(len(cls)), cls] = mass
    return out


def sample_pixels(true_class, model: SensorModel, K: int, M: int,
                  rng: np.random.Generator) -> SensorDraw:
    """Draw M softmax samples for each pixel of a batch of true classes."""
    true_class = np.asarray(true_class, dtype=np.int64).reshape(-1)
    n = len(true_class)
    if M < 1:
        raise ValueError("need at least one MC sample")
    if np.any((true_class < 0) | (true_class >= K)):
        raise ValueError(f"true classes must lie in [0, {K})")
    outlier = rng.random(n) < model.outlier_rate
    wrong = (true_class + rng.integers(1, K, size=n)) % K
    detectable = rng.random(n) < model.uncertainty_error_correlation

    mean = np.where(outlier[:, None], _peaked(wrong, model.outlier_confidence, K),
                    _peaked(true_class, model.p_correct, K))
    spread = np.where(outlier & detectable, model.spread_outlier, model.spread_correct)

    samples = np.broadcast_to(mean, (M, n, K)).copy()
    noisy = spread > 0
    if np.any(noisy):
        shape = mean[noisy] / spread[noisy, None]
        g = rng.gamma(np.broadcast_to(shape, (M,) + shape.shape))
        total = g.sum(axis=-1, keepdims=True)
        # all-underflow draws fall back to the mean
        draw = np.where(total > 0, g / np.where(total > 0, total, 1.0), mean[noisy])
        samples[:, noisy] = draw
    return SensorDraw(samples, outlier, mean)


def sample_sensor(true_class: int, model: SensorModel, K: int, M: int,
                  rng: np.random.Generator) -> np.ndarray:
    """(M, K) MC samples for a single pixel."""
    return sample_pixels([true_class], model, K, M, rng).samples[:, 0]


# ---------------------------------------------------------------------------
# full sequences


class SimFrame(NamedTuple):
    frame: Frame
    true_class: np.ndarray  # (H, W), -1 where nothing is hit
    outlier: np.ndarray  # (H, W) bool


SENSOR_STREAM = 1


def simulate_frame(index: int, timestamp: float, pose: Pose, scene: Scene,
                   intr: CameraIntrinsics, model: SensorModel, K: int, M: int, seed: int,
                   moments: bool = False) -> SimFrame:
    depth, true = render_depth(scene, pose, intr)
    if scene.labels_used and max(scene.labels_used) >= K:
        raise InvalidScene(f"scene uses label {max(scene.labels_used)} but only {K} classes exist")
    valid = depth > 0
    draw = sample_pixels(true[valid], model, K, M, make_rng(seed, SENSOR_STREAM, index))
    H, W = depth.shape
    outlier = np.zeros((H, W), dtype=bool)
    outlier[valid] = draw.outlier
    if moments:
        mean = np.zeros((K, H, W))
        var = np.zeros((K, H, W))
        mean[:, valid] = draw.samples.mean(axis=0).T
        var[:, valid] = draw.samples.var(axis=0).T
        frame = Frame(timestamp, pose, intr, depth, mean=mean, variance=var, frame_id=index)
    else:
        samples = np.zeros((M, K, H, W))
        samples[:, :, valid] = np.moveaxis(draw.samples, 2, 1)
        frame = Frame(timestamp, pose, intr, depth, samples=samples, frame_id=index)
    return SimFrame(frame, true, outlier)


def simulate(scene: Scene, trajectory: Sequence[tuple[float, Pose]], intr: CameraIntrinsics,
             model: SensorModel, K: int, M: int = 32, seed: int = 0,
             moments: bool = False) -> Iterator[SimFrame]:
    for i, (ts, pose) in enumerate(trajectory):
        yield simulate_frame(i, ts, pose, scene, intr, model, K, M, seed, moments)


def observed_keys(frames: Sequence[Frame], voxel_size: float) -> set[VoxelKey]:
    """Voxels hit by at least one valid depth pixel of the given frames."""
    seen: set[VoxelKey] = set()
    for fr in frames:
        pts = back_project_depth(fr.depth, fr.intrinsics, fr.pose)[0]
        seen.update(map(lambda k: VoxelKey(*k), voxel_keys(pts, voxel_size).tolist()))
    return seen
