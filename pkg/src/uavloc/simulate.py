"""Synthetic flight videos for sim-to-sim tests: a lit marker flying a square over a static sky."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from uavloc.errors import ConfigError
from uavloc.evaluation import GroundTruthTrack
from uavloc.geometry import CameraIntrinsics, MarkerPose, MarkerSpec, project_marker
from uavloc.synthgen import render_mask


@dataclass(frozen=True)
class FlightSpec:
    """Square profile of side ``side_m`` centred on the optical axis at a fixed height.

    The first ``background_frames`` frames show an empty sky; the marker then
    hovers at the first corner for ``hover_s`` and flies the square once at
    ``speed_mps``.
    """

    name: str = "square"
    camera: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics.from_degrees(768, 768, 41.0))
    height_m: float = 12.0
    side_m: float = 4.0
    speed_mps: float = 1.0
    hover_s: float = 1.0
    background_frames: int = 50
    gt_rate_hz: float = 5.0
    yaw_rate_dps: float = 10.0
    tilt_amplitude_deg: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.height_m <= 0 or self.side_m <= 0 or self.speed_mps <= 0:
            raise ConfigError("height, side and speed must be positive")

    @property
    def frame_rate(self) -> float:
        return self.camera.frame_rate_hz

    @property
    def t_start(self) -> float:
        return self.background_frames / self.frame_rate

    @property
    def duration_s(self) -> float:
        return self.hover_s + 4 * self.side_m / self.speed_mps

    @property
    def n_frames(self) -> int:
        return self.background_frames + int(math.floor(self.duration_s * self.frame_rate)) + 1

    def position(self, t: float) -> tuple[float, float, float]:
        """Marker position at frame-clock time ``t`` (seconds)."""
        s = min(max(t - self.t_start - self.hover_s, 0.0), self.duration_s - self.hover_s) * self.speed_mps
        h = self.side_m / 2
        corners = [(-h, -h), (-h, h), (h, h), (h, -h), (-h, -h)]
        leg = min(int(s // self.side_m), 3)
        f = (s - leg * self.side_m) / self.side_m
        (x0, y0), (x1, y1) = corners[leg], corners[leg + 1]
        return x0 + f * (x1 - x0), y0 + f * (y1 - y0), self.height_m

    def pose(self, t: float) -> MarkerPose:
        x, y, z = self.position(t)
        tau = t - self.t_start
        a = self.tilt_amplitude_deg
        return MarkerPose.from_euler(
            x, y, z,
            yaw_deg=self.yaw_rate_dps * tau,
            pitch_deg=a * math.sin(2 * math.pi * 0.3 * tau),
            roll_deg=a * math.sin(2 * math.pi * 0.2 * tau + 1.0),
        )

    def marker_visible(self, index: int) -> bool:
        return index >= self.background_frames

    def expected_diameter_px(self, marker: MarkerSpec | None = None) -> float:
        marker = marker or MarkerSpec()
        return marker.diameter_m * self.camera.focal_px / self.height_m

    def check_in_view(self, marker: MarkerSpec | None = None):
        marker = marker or MarkerSpec()
        for t in np.linspace(self.t_start, self.t_start + self.duration_s, 200):
            if project_marker(self.pose(float(t)), self.camera, marker).m != 1:
                raise ConfigError(f"flight {self.name}: marker leaves the image at t={t:.2f} s")


@dataclass(frozen=True)
class SkyStyle:
    base_rgb: tuple[int, int, int] = (70, 80, 95)
    noise_sigma: float = 2.5
    n_distractors: int = 6
    distractor_green: int = 170
    marker_rgb: tuple[int, int, int] = (40, 230, 60)


def _static_sky(cam: CameraIntrinsics, style: SkyStyle, rng: np.random.Generator) -> np.ndarray:
    h, w = cam.height_px, cam.width_px
    rows = np.linspace(0.0, 1.0, h)[:, None, None]
    sky = np.asarray(style.base_rgb, np.float64)[None, None, :] * (0.9 + 0.2 * rows)
    sky = np.broadcast_to(sky, (h, w, 3)).copy()
    yy, xx = np.mgrid[0:h, 0:w]
    # bright static blobs (lamps, rooftops) that the background model must remove
    for _ in range(style.n_distractors):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(6, 25)
        blob = ((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r
        sky[blob] = (style.distractor_green - 20, style.distractor_green, style.distractor_green - 30)
    return sky.astype(np.float32)


def render_flight(spec: FlightSpec, marker: MarkerSpec | None = None, style: SkyStyle | None = None) -> Iterator[np.ndarray]:
    """Yield ``spec.n_frames`` RGB uint8 frames."""
    marker = marker or MarkerSpec()
    style = style or SkyStyle()
    rng = np.random.default_rng(spec.seed)
    sky = _static_sky(spec.camera, style, rng)
    colour = np.asarray(style.marker_rgb, np.float32)
    for i in range(spec.n_frames):
        frame = sky + np.float32(style.noise_sigma) * rng.standard_normal(sky.shape, dtype=np.float32)
        if spec.marker_visible(i):
            mask = render_mask(spec.pose(i / spec.frame_rate), spec.camera, marker).astype(bool)
            frame[mask] = colour
        yield np.clip(np.rint(frame), 0, 255).astype(np.uint8)


def ground_truth(spec: FlightSpec) -> GroundTruthTrack:
    """Positions sampled at ``gt_rate_hz`` over the visible part of the flight."""
    n = int(math.floor(spec.duration_s * spec.gt_rate_hz + 1e-9)) + 1
    t = spec.t_start + np.arange(n) / spec.gt_rate_hz
    return GroundTruthTrack(t, np.array([spec.position(float(s)) for s in t]))


def square_flights(seed: int = 0) -> list[FlightSpec]:
    """Four 4 m squares on a 1024 px camera at (height, HFOV) pairs of a real field campaign."""
    pairs = [(13.87, 46.0), (18.92, 35.9), (9.14, 54.0), (14.83, 54.0)]
    return [
        FlightSpec(
            name=f"flight{k + 1}",
            camera=CameraIntrinsics.from_degrees(1024, 1024, hfov),
            height_m=z,
            seed=seed * 100 + k,
        )
        for k, (z, hfov) in enumerate(pairs)
    ]
