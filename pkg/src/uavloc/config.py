"""Experiment configuration: one YAML file, validated, with every workflow constant defaulted."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from uavloc.augment import Augmenter, NoisyCutoutConfig, SPCutoutConfig
from uavloc.detector.losses import LossConfig
from uavloc.detector.train import TrainConfig
from uavloc.errors import ConfigError
from uavloc.geometry import CameraIntrinsics, MarkerSpec
from uavloc.pipeline import ThresholdConfig, TrackerConfig
from uavloc.synthgen import DEFAULT_NULL, DEFAULT_POSITIVE, IMAGE_SIZE, PoseSampler


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CameraSection(_Section):
    width_px: int = IMAGE_SIZE
    height_px: int = IMAGE_SIZE
    hfov_deg: float = 13.65
    vfov_deg: Optional[float] = None  # square pixels when omitted
    frame_rate_hz: float = 12.5

    def build(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_degrees(
            self.width_px, self.height_px, self.hfov_deg, self.vfov_deg, frame_rate_hz=self.frame_rate_hz
        )


class MarkerSection(_Section):
    diameter_m: float = 0.47
    arm_count: int = 4
    arms_present: list[bool] = [True, True, True, False]
    strip_width_m: float = 0.05

    def build(self) -> MarkerSpec:
        return MarkerSpec(self.diameter_m, self.arm_count, tuple(self.arms_present), self.strip_width_m)


class SamplerSection(_Section):
    z_range_m: tuple[float, float] = (2.0, 20.0)
    yaw_range_deg: tuple[float, float] = (-180.0, 180.0)
    roll_pitch_range_deg: tuple[float, float] = (-5.0, 5.0)
    count_positive: int = Field(DEFAULT_POSITIVE, ge=0)
    count_null: int = Field(DEFAULT_NULL, ge=0)
    workers: int = Field(1, ge=1)


class NoisyCutoutSection(_Section):
    mask_probability: float = 0.05
    white_fraction: float = 0.5
    window_size_range: tuple[int, int] = (1, 31)
    blur_kernels: list[tuple[int, int]] = [(1, 1), (1, 3), (3, 1), (3, 3)]

    def build(self) -> NoisyCutoutConfig:
        return NoisyCutoutConfig(
            tuple(self.window_size_range), self.mask_probability, self.white_fraction, tuple(self.blur_kernels)
        )


class SPCutoutSection(_Section):
    amount: float = 0.05
    mask_size: int = 16

    def build(self) -> SPCutoutConfig:
        return SPCutoutConfig(self.amount, self.mask_size)


class AugmentationSection(_Section):
    method: Literal["noisycutout", "spcutout", "none"] = "noisycutout"
    noisycutout: NoisyCutoutSection = NoisyCutoutSection()
    spcutout: SPCutoutSection = SPCutoutSection()

    def build(self, method: str | None = None) -> Augmenter:
        return Augmenter(method or self.method, self.noisycutout.build(), self.spcutout.build())


class LossSection(_Section):
    variant: Literal["base", "up"] = "up"
    gamma: float = Field(10.0, gt=0)
    mu: float = Field(5.0, gt=0)

    def build(self) -> LossConfig:
        return LossConfig(self.gamma, self.mu, self.variant, IMAGE_SIZE)


class TrainSection(_Section):
    batch_size: int = Field(32, ge=1)
    learn_rate: float = Field(1e-3, ge=1e-6, le=1e-3)
    epochs: int = Field(150, ge=1)
    backbone: Literal["small-conv", "mobilenetv2-like"] = "small-conv"
    width: int = Field(32, ge=4)
    schedule: Literal["onecycle", "constant"] = "onecycle"
    max_train: Optional[int] = Field(None, ge=1)


class ThresholdSection(_Section):
    # binarisation threshold per trained method; the tracker picks the entry for its checkpoint tag
    tau_by_method: dict[str, int] = {
        "MbULNet_0(SPCutout)": 25,
        "MbULNet_0(NoisyCutout)": 10,
        "MbULNet_UP(NoisyCutout)": 13,
    }
    default_tau: int = 13
    green_pixel_threshold: int = 100

    @field_validator("tau_by_method")
    @classmethod
    def _range(cls, v):
        for k, tau in v.items():
            if not 0 < tau < 255:
                raise ValueError(f"tau for {k} must lie in (0, 255)")
        return v

    def tau_for(self, tag: str) -> int:
        return self.tau_by_method.get(tag, self.default_tau)


class TrackerSection(_Section):
    background_frames: int = Field(50, ge=1)
    window: int = IMAGE_SIZE
    overlap: int = Field(20, ge=0)
    detection_threshold: float = Field(0.5, ge=0, le=1)
    lost_frames: int = Field(1, ge=1)
    scan_all: bool = False
    filter_cutoff_hz: float = Field(1.0, gt=0)
    smooth_z: bool = True


class EvalSection(_Section):
    dt_s: float = Field(0.01, gt=0)
    interpolate: bool = True
    time_offset_s: float = 0.0


class PathsSection(_Section):
    dataset: Path = Path("data/synth")
    runs: Path = Path("runs")


class ExperimentConfig(_Section):
    seed: int
    deterministic: bool = True
    camera: CameraSection = CameraSection()
    marker: MarkerSection = MarkerSection()
    sampler: SamplerSection = SamplerSection()
    augmentation: AugmentationSection = AugmentationSection()
    loss: LossSection = LossSection()
    train: TrainSection = TrainSection()
    thresholds: ThresholdSection = ThresholdSection()
    tracker: TrackerSection = TrackerSection()
    eval: EvalSection = EvalSection()
    paths: PathsSection = PathsSection()

    @model_validator(mode="after")
    def _consistent(self):
        if self.tracker.overlap >= self.tracker.window:
            raise ValueError("tracker overlap must be smaller than the window")
        return self

    def camera_intrinsics(self) -> CameraIntrinsics:
        return self.camera.build()

    def marker_spec(self) -> MarkerSpec:
        return self.marker.build()

    def pose_sampler(self) -> PoseSampler:
        s = self.sampler
        return PoseSampler(
            tuple(s.z_range_m),
            tuple(s.yaw_range_deg),
            tuple(s.roll_pitch_range_deg),
            self.seed,
            self.camera_intrinsics(),
            self.marker_spec(),
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            t.batch_size, t.learn_rate, t.epochs, self.seed, t.backbone, t.width, t.schedule, self.deterministic, t.max_train
        )

    def tracker_config(self, tau: int | None = None) -> TrackerConfig:
        tr = self.tracker
        thr = ThresholdConfig(tau if tau is not None else self.thresholds.default_tau, self.thresholds.green_pixel_threshold)
        return TrackerConfig(thr, tr.window, tr.overlap, tr.detection_threshold, tr.lost_frames, tr.scan_all)


def default_config(seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(seed=seed)


def load_config(path: str | Path | None, seed: int | None = None) -> ExperimentConfig:
    """Read a YAML config; ``seed`` (if given) overrides the file. No path means all defaults."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    if seed is not None:
        data["seed"] = seed
    elif path is None:
        data.setdefault("seed", 0)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration:\n{exc}") from exc


def dump_config(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False))
