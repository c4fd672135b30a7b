"""On-disk formats: raw tensors, pose lists, voxel label files and dataset folders.

Dataset directory layout::

    meta.json            classes, intrinsics, observation format, voxel size
    poses.txt            frame_id timestamp tx ty tz qx qy qz qw
    depth_<id>.ten       [H, W] z-depth in meters
    obs_<id>.ten         [M, K, H, W] MC samples or [2, K, H, W] mean/variance
    outliers_<id>.ten    [H, W] 1.0 where the simulator injected an outlier
    gt_voxels.txt        ix iy iz label

Tensor files are little-endian: magic ``SFTEN1``, u8 dtype (1 = f32), u8 ndims,
u32 dims, then the row-major f32 payload. Floats in text files use Python's
shortest round-trip repr so write -> read -> write is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import CameraIntrinsics, LabelSet, Pose, VoxelKey
from .errors import MalformedFile, MalformedFrame, OutputError
from .mapping import Frame

MAGIC = b"SFTEN1"
DTYPE_F32 = 1
INGEST_TOL = 1e-4  # simplex tolerance for f32-stored probabilities


def write_tensor(path, array) -> None:
    a = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<BB", DTYPE_F32, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:6] != MAGIC:
        raise MalformedFile(f"{path}: not a tensor file")
    dtype, ndim = struct.unpack_from("<BB", data, 6)
    if dtype != DTYPE_F32:
        raise MalformedFile(f"{path}: unsupported dtype code {dtype}")
    offset = 8 + 4 * ndim
    if len(data) < offset:
        raise MalformedFile(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) != offset + 4 * count:
        raise MalformedFile(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims)


def _f(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# poses


@dataclass(frozen=True)
class PoseRecord:
    frame_id: int
    timestamp: float
    pose: Pose


def format_poses(records: Iterable[PoseRecord]) -> str:
    lines = []
    for r in records:
        vals = (r.timestamp, *r.pose.translation, *r.pose.rotation)
        lines.append(" ".join([str(int(r.frame_id))] + [_f(v) for v in vals]))
    return "".join(line + "\n" for line in lines)


def parse_poses(text: str, source: str = "poses.txt") -> list[PoseRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 9:
            raise MalformedFile(f"{source}:{n}: expected 9 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts[1:]]
            out.append(PoseRecord(int(parts[0]), vals[0], Pose(vals[1:4], vals[4:8])))
        except ValueError as exc:
            raise MalformedFile(f"{source}:{n}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# voxel label files


def format_voxel_labels(rows: Iterable, classes: Sequence[str] | None = None,
                        strategy: str | None = None) -> str:
    """``ix iy iz label`` lines, preceded by optional ``# key: value`` headers."""
    out = []
    if classes is not None:
        bad = [c for c in classes if not c or any(ch.isspace() for ch in c)]
        if bad:
            raise ValueError(f"class names may not contain whitespace: {bad}")
        out.append("# classes: " + " ".join(classes))
    if strategy is not None:
        out.append(f"# strategy: {strategy}")
    for row in rows:
        k = row[0]
        out.append(f"{int(k[0])} {int(k[1])} {int(k[2])} {int(row[1])}")
    return "".join(line + "\n" for line in out)


@dataclass(frozen=True)
class VoxelLabelFile:
    rows: list[tuple[VoxelKey, int]]
    classes: tuple[str, ...] | None = None
    strategy: str | None = None


def parse_voxel_labels(text: str, source: str = "labels") -> VoxelLabelFile:
    rows, headers, seen = [], {}, set()
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            headers[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 4:
            raise MalformedFile(f"{source}:{n}: expected 'ix iy iz label'")
        try:
            ix, iy, iz, label = (int(p) for p in parts)
        except ValueError:
            raise MalformedFile(f"{source}:{n}: non-integer field") from None
        key = VoxelKey(ix, iy, iz)
        if key in seen:
            raise MalformedFile(f"{source}:{n}: duplicate voxel {key}")
        seen.add(key)
        rows.append((key, label))
    classes = tuple(headers["classes"].split()) if "classes" in headers else None
    return VoxelLabelFile(rows, classes, headers.get("strategy"))


def write_voxel_labels(path, rows, classes=None, strategy=None) -> None:
    write_text(path, format_voxel_labels(rows, classes, strategy))


def read_voxel_labels(path) -> VoxelLabelFile:
    return parse_voxel_labels(Path(path).read_text(encoding="utf-8"), str(path))


def write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# datasets


def frame_file(kind: str, frame_id: int) -> str:
    return f"{kind}_{frame_id:06d}.ten"


@dataclass(frozen=True)
class DatasetMeta:
    labels: LabelSet
    intrinsics: CameraIntrinsics
    obs_format: str  # "samples" or "moments"
    voxel_size: float

    def to_json(self) -> str:
        i = self.intrinsics
        doc = {
            "classes": list(self.labels.names),
            "intrinsics": {"fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy,
                           "width": i.width, "height": i.height},
            "obs_format": self.obs_format,
            "voxel_size": self.voxel_size,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, source: str = "meta.json") -> "DatasetMeta":
        try:
            doc = json.loads(text)
            i = doc["intrinsics"]
            intr = CameraIntrinsics(float(i["fx"]), float(i["fy"]), float(i["cx"]),
                                    float(i["cy"]), int(i["width"]), int(i["height"]))
            fmt = doc["obs_format"]
            if fmt not in ("samples", "moments"):
                raise ValueError(f"unknown obs_format {fmt!r}")
            return cls(LabelSet(tuple(doc["classes"])), intr, fmt, float(doc["voxel_size"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{source}: {exc}") from None


class DatasetWriter:
    def __init__(self, root, meta: DatasetMeta):
        self.root = Path(root)
        self.meta = meta
        self.records: list[PoseRecord] = []
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create {self.root}: {exc}") from exc
        write_text(self.root / "meta.json", meta.to_json())

    def add(self, frame: Frame, outlier: np.ndarray | None = None) -> None:
        fid = len(self.records) if frame.frame_id is None else frame.frame_id
        try:
            write_tensor(self.root / frame_file("depth", fid), frame.depth)
            if self.meta.obs_format == "samples":
                if frame.samples is None:
                    raise ValueError("dataset stores MC samples but frame has moments")
                obs = frame.samples
            else:
                if frame.samples is not None:
                    obs = np.stack([frame.samples.mean(axis=0), frame.samples.var(axis=0)])
                else:
                    var = np.zeros_like(frame.mean) if frame.variance is None else frame.variance
                    obs = np.stack([frame.mean, var])
            write_tensor(self.root / frame_file("obs", fid), obs)
            if outlier is not None:
                write_tensor(self.root / frame_file("outliers", fid), outlier)
        except OSError as exc:
            raise OutputError(f"cannot write frame {fid}: {exc}") from exc
        self.records.append(PoseRecord(fid, frame.timestamp, frame.pose))
        # rewritten each frame so a partial dataset stays self-consistent
        write_text(self.root / "poses.txt", format_poses(self.records))

    def write_gt(self, rows) -> None:
        write_voxel_labels(self.root / "gt_voxels.txt", rows, self.meta.labels.names)


def _renormalize(p: np.ndarray, valid: np.ndarray, frame_id: int) -> np.ndarray:
    """Re-project f32-stored probabilities on valid pixels onto the simplex."""
    total = p.sum(axis=-3, keepdims=True)
    bad = (np.abs(total - 1.0) > INGEST_TOL) & valid
    if np.any(bad) or np.any(p[..., valid] < -INGEST_TOL):
        raise MalformedFrame("stored probabilities are not on the simplex", frame_id)
    return np.where(valid, np.clip(p, 0.0, None) / np.where(total > 0, total, 1.0), 0.0)


class Dataset:
    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise MalformedFile(f"{self.root}: dataset directory not found")
        self.meta = DatasetMeta.from_json(self._read("meta.json"), str(self.root / "meta.json"))
        self.records = parse_poses(self._read("poses.txt"), str(self.root / "poses.txt"))

    def _read(self, name: str) -> str:
        try:
            return (self.root / name).read_text(encoding="utf-8")
        except OSError as exc:
            raise MalformedFile(f"{self.root / name}: {exc}") from None

    def __len__(self):
        return len(self.records)

    def load_frame(self, rec: PoseRecord) -> Frame:
        intr, K = self.meta.intrinsics, self.meta.labels.K
        try:
            depth = read_tensor(self.root / frame_file("depth", rec.frame_id)).astype(np.float64)
            obs = read_tensor(self.root / frame_file("obs", rec.frame_id)).astype(np.float64)
        except (OSError, MalformedFile) as exc:
            raise MalformedFrame(str(exc), rec.frame_id) from None
        hw = (intr.height, intr.width)
        if depth.shape != hw:
            raise MalformedFrame(f"depth dims {depth.shape} != {hw}", rec.frame_id)
        if obs.ndim != 4 or obs.shape[1] != K or obs.shape[2:] != hw:
            raise MalformedFrame(f"observation dims {obs.shape} do not match [*, {K}, "
                                 f"{hw[0]}, {hw[1]}]", rec.frame_id)
        valid = np.isfinite(depth) & (depth > 0)
        if self.meta.obs_format == "moments":
            if obs.shape[0] != 2:
                raise MalformedFrame("moments tensor needs leading dim 2", rec.frame_id)
            mean = _renormalize(obs[0], valid, rec.frame_id)
            return Frame(rec.timestamp, rec.pose, intr, depth, mean=mean,
                         variance=np.where(valid, obs[1], 0.0), frame_id=rec.frame_id)
        samples = _renormalize(obs, valid, rec.frame_id)
        return Frame(rec.timestamp, rec.pose, intr, depth, samples=samples, frame_id=rec.frame_id)

    def frames(self) -> Iterator[Frame]:
        for rec in self.records:
            yield self.load_frame(rec)

    def outliers(self, rec: PoseRecord) -> np.ndarray | None:
        path = self.root / frame_file("outliers", rec.frame_id)
        return read_tensor(path) > 0.5 if path.exists() else None

    def ground_truth(self) -> VoxelLabelFile:
        return read_voxel_labels(self.root / "gt_voxels.txt")
