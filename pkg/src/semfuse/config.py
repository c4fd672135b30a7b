"""Experiment configuration, read from TOML with unknown keys rejected.

Example::

    seed = 0
    voxel_size = 0.1
    strategies = ["sum_probs", "sum_labels", "bayesian", "r", "d", "dr"]

    [labels]
    names = ["background", "crate", "cabinet"]

    [scene]
    background = 0
    floor_z = 0.0
    boxes = [{lo = [0.25, 0.25, 0.0], hi = [0.85, 0.65, 0.6], label = 1}]

    [camera]
    width = 64
    height = 48
    hfov_deg = 70.0

    [trajectory]
    radius = 3.5
    n_frames = 24

    [sensor]
    outlier_rate = 0.15

    [fusion]
    beta = 0.3

Omitted keys take the dataclass defaults below.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .core import CameraIntrinsics, LabelSet
from .errors import InvalidConfig
from .fusion import FusionStrategy, parse_strategy
from .observation import FusionConfig
from .sim import Box, OrbitSpec, Scene, SensorModel, generate_scene


@dataclass(frozen=True)
class SceneSection:
    boxes: tuple[Box, ...] = ()
    background: int | None = None
    floor_z: float | None = None
    floor_extent: tuple[float, float, float, float] = (-5.0, 5.0, -5.0, 5.0)
    gt_mode: str = "observed"  # "observed": GT limited to voxels the depth stream hits

    def build(self) -> Scene:
        return generate_scene(self.boxes, self.background, self.floor_z, self.floor_extent)


@dataclass(frozen=True)
class CameraSection:
    width: int = 64
    height: int = 48
    hfov_deg: float = 70.0

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.width, self.height, self.hfov_deg)


@dataclass(frozen=True)
class SensorSection:
    p_correct: float = 0.85
    outlier_rate: float = 0.0
    outlier_confidence: float = 0.9
    spread_correct: float = 0.002
    spread_outlier: float = 5.0
    uncertainty_error_correlation: float = 0.8
    obs_format: str = "moments"

    def model(self) -> SensorModel:
        return SensorModel(self.p_correct, self.outlier_rate, self.outlier_confidence,
                           self.spread_correct, self.spread_outlier,
                           self.uncertainty_error_correlation)


@dataclass(frozen=True)
class FusionSection:
    beta: float = 0.3
    eps_var: float = 1e-6
    var_max: float = 0.25
    p_min: float = 1e-6
    mc_samples: int = 32
    regularize: bool = True
    dirichlet: bool = True
    stride: int = 1

    def config(self) -> FusionConfig:
        return FusionConfig(self.beta, self.eps_var, self.var_max, self.p_min, self.mc_samples)


@dataclass(frozen=True)
class OutputSection:
    dataset: str = "dataset"
    results: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    labels: LabelSet = field(default_factory=lambda: LabelSet(("background", "object")))
    scene: SceneSection = field(default_factory=SceneSection)
    camera: CameraSection = field(default_factory=CameraSection)
    trajectory: OrbitSpec = field(default_factory=OrbitSpec)
    sensor: SensorSection = field(default_factory=SensorSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    output: OutputSection = field(default_factory=OutputSection)
    strategies: tuple[str, ...] = ("sum_probs", "sum_labels", "bayesian", "r", "d", "dr")
    voxel_size: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise InvalidConfig("voxel_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must be an unsigned 64-bit integer")
        if self.sensor.obs_format not in ("moments", "samples"):
            raise InvalidConfig("sensor.obs_format must be 'moments' or 'samples'")
        if self.scene.gt_mode not in ("observed", "all"):
            raise InvalidConfig("scene.gt_mode must be 'observed' or 'all'")
        if self.fusion.stride < 1:
            raise InvalidConfig("fusion.stride must be >= 1")
        used = self.scene.build().labels_used if (self.scene.boxes or
                                                  self.scene.floor_z is not None) else set()
        if used and max(used) >= self.labels.K:
            raise InvalidConfig(f"scene uses label {max(used)} but only {self.labels.K} classes")
        try:
            self.fusion.config().check_classes(self.labels.K)
            self.sensor.model()
            for name in self.strategies:
                self.strategy(name)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None

    def strategy(self, name: str) -> FusionStrategy:
        return parse_strategy(name, self.fusion.regularize, self.fusion.dirichlet)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        scene: dict[str, Any] = {
            "boxes": [{"lo": list(b.lo), "hi": list(b.hi), "label": b.label}
                      for b in self.scene.boxes],
            "floor_extent": list(self.scene.floor_extent),
            "gt_mode": self.scene.gt_mode,
        }
        if self.scene.background is not None:
            scene["background"] = self.scene.background
        if self.scene.floor_z is not None:
            scene["floor_z"] = self.scene.floor_z
        traj = dataclasses.asdict(self.trajectory)
        traj["center"] = list(traj["center"])
        return {
            "seed": self.seed,
            "voxel_size": self.voxel_size,
            "strategies": list(self.strategies),
            "labels": {"names": list(self.labels.names)},
            "scene": scene,
            "camera": dataclasses.asdict(self.camera),
            "trajectory": traj,
            "sensor": dataclasses.asdict(self.sensor),
            "fusion": dataclasses.asdict(self.fusion),
            "output": dataclasses.asdict(self.output),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExperimentConfig":
        doc = dict(doc)
        kwargs: dict[str, Any] = {}
        try:
            if "labels" in doc:
                names = _section(doc.pop("labels"), "labels", {"names"})
                kwargs["labels"] = LabelSet(tuple(names["names"]))
            if "scene" in doc:
                sc = _section(doc.pop("scene"), "scene",
                              {"boxes", "background", "floor_z", "floor_extent", "gt_mode"})
                boxes = []
                for i, b in enumerate(sc.pop("boxes", [])):
                    b = _section(b, f"scene.boxes[{i}]", {"lo", "hi", "label"})
                    boxes.append(Box(tuple(b["lo"]), tuple(b["hi"]), _int(b["label"])))
                if "floor_extent" in sc:
                    sc["floor_extent"] = tuple(float(x) for x in sc["floor_extent"])
                kwargs["scene"] = SceneSection(tuple(boxes), **sc)
            for name, typ in (("camera", CameraSection), ("trajectory", OrbitSpec),
                              ("sensor", SensorSection), ("fusion", FusionSection),
                              ("output", OutputSection)):
                if name in doc:
                    vals = _typed(_section(doc.pop(name), name, _fields(typ)), typ)
                    if name == "trajectory" and "center" in vals:
                        vals["center"] = tuple(float(x) for x in vals["center"])
                    kwargs[name] = typ(**vals)
            for key in ("seed", "voxel_size", "strategies"):
                if key in doc:
                    kwargs[key] = doc.pop(key)
            if doc:
                raise InvalidConfig(f"unknown top-level keys: {sorted(doc)}")
            if "strategies" in kwargs:
                kwargs["strategies"] = tuple(str(s) for s in kwargs["strategies"])
            if "seed" in kwargs:
                kwargs["seed"] = _int(kwargs["seed"])
            if "voxel_size" in kwargs:
                kwargs["voxel_size"] = float(kwargs["voxel_size"])
            return cls(**kwargs)
        except InvalidConfig:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise InvalidConfig(str(exc)) from None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise InvalidConfig(f"invalid TOML: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from None
        return cls.from_toml(text)


def _fields(typ) -> set[str]:
    return {f.name for f in dataclasses.fields(typ)}


def _section(value, name: str, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        raise InvalidConfig(f"[{name}] must be a table")
    unknown = set(value) - allowed
    if unknown:
        raise InvalidConfig(f"unknown keys in [{name}]: {sorted(unknown)}")
    return dict(value)


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise InvalidConfig(f"expected an integer, got {v!r}")
    return v


def _typed(vals: dict, typ) -> dict:
    """Coerce TOML scalars to the field types of ``typ`` with strict checks."""
    hints = {f.name: f.type for f in dataclasses.fields(typ)}
    out = {}
    for k, v in vals.items():
        hint = str(hints[k])
        if hint == "bool":
            if not isinstance(v, bool):
                raise InvalidConfig(f"{typ.__name__}.{k} must be a boolean")
        elif hint == "int":
            v = _int(v)
        elif hint == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InvalidConfig(f"{typ.__name__}.{k} must be a number")
            v = float(v)
        elif hint == "str" and not isinstance(v, str):
            raise InvalidConfig(f"{typ.__name__}.{k} must be a string")
        out[k] = v
    return out


def benchmark_config(seed: int = 0) -> ExperimentConfig:
    """Cluttered five-class room with 15% overconfident outliers."""
    boxes = (
        Box((-1.25, -1.25, 0.0), (-0.35, -0.55, 0.8), 1),
        Box((0.25, -0.35, 0.0), (0.95, 0.45, 0.4), 2),
        Box((-0.65, 0.65, 0.0), (0.15, 1.25, 1.2), 3),
        Box((0.6, 0.8, 0.0), (1.2, 1.4, 0.6), 4),
    )
    return ExperimentConfig(
        labels=LabelSet(("floor", "cabinet", "table", "shelf", "chair")),
        scene=SceneSection(boxes, background=0, floor_z=0.0, floor_extent=(-2.5, 2.5, -2.5, 2.5)),
        camera=CameraSection(64, 48, 70.0),
        trajectory=OrbitSpec(center=(0.0, 0.0, 0.4), radius=3.5, height=1.8, n_frames=24),
        sensor=SensorSection(p_correct=0.85, outlier_rate=0.15, outlier_confidence=0.9,
                             spread_correct=0.002, spread_outlier=5.0,
                             uncertainty_error_correlation=0.8),
        seed=seed,
    )


def noiseless_config(seed: int = 0) -> ExperimentConfig:
    """Three boxes, no outliers and deterministic sensor samples."""
    boxes = (
        Box((-0.95, -0.45, 0.05), (-0.35, 0.35, 0.65), 1),
        Box((0.25, -0.85, 0.05), (0.85, -0.25, 0.45), 2),
        Box((0.15, 0.35, 0.05), (0.75, 0.95, 1.05), 3),
    )
    return ExperimentConfig(
        labels=LabelSet(("void", "crate", "cabinet", "shelf")),
        scene=SceneSection(boxes),
        camera=CameraSection(160, 120, 70.0),
        trajectory=OrbitSpec(center=(0.0, 0.0, 0.5), radius=3.5, height=1.8, n_frames=60),
        sensor=SensorSection(p_correct=0.85, outlier_rate=0.0, spread_correct=0.0,
                             spread_outlier=0.0),
        seed=seed,
    )


PRESETS = {"benchmark": benchmark_config, "noiseless": noiseless_config}
