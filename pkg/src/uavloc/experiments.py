"""End-to-end experiment runners: overfit sanity run, method/seed training sweep, flight study."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from uavloc.augment import NoisyCutoutConfig, noisy_cutout_pixels
from uavloc.detector.inference import Detector
from uavloc.detector.losses import LossConfig
from uavloc.detector.train import TrainConfig, fit, method_tag, targets_from_records, train
from uavloc.errors import ConfigError
from uavloc.evaluation import RmseReport, Track, compare_methods, match_and_rmse
from uavloc.geometry import MarkerSpec, PixelObservation, pixel_to_cartesian, project_marker
from uavloc.pipeline import (
    TAU_BY_METHOD,
    ThresholdConfig,
    Tracker,
    TrackerConfig,
    TrackerState,
    binarise_window,
    build_background,
    centred_origin,
    smooth_z,
)
from uavloc.simulate import FlightSpec, SkyStyle, ground_truth, render_flight
from uavloc.synthgen import DatasetManifest, render_mask

log = logging.getLogger(__name__)

# (loss variant, augmentation) of the three compared methods
METHODS = (("base", "spcutout"), ("base", "noisycutout"), ("up", "noisycutout"))


def overfit(
    manifest: DatasetManifest, n_images: int = 64, epochs: int = 500, target: float = 0.01, seed: int = 0,
    cfg: TrainConfig | None = None, loss_variant: str = "base",
):
    """Fit the first ``n_images`` training images without augmentation; stop once the epoch loss is below ``target``."""
    recs = manifest.split("train")[:n_images]
    x = manifest.load_pixels(recs)
    t = targets_from_records(recs, x.shape[-1])
    # one full batch per epoch: batch-norm statistics then stay fixed, which smaller batches never allow
    cfg = cfg or TrainConfig(epochs=epochs, seed=seed, batch_size=n_images)
    return fit(x, t, x, t, None, LossConfig(variant=loss_variant), cfg, stop_train_loss=target)


def run_slug(loss_variant: str, augment: str, seed: int) -> str:
    return f"{loss_variant}-{augment}/seed{seed}"


def train_sweep(
    dataset, out_root, seeds: Sequence[int] = (0, 1, 2), epochs: int = 30, methods=METHODS,
    base_cfg: TrainConfig | None = None, on_epoch: Callable | None = None,
) -> dict[str, list[Path]]:
    """Train every (method, seed); existing checkpoints are kept, so an interrupted sweep resumes."""
    out_root = Path(out_root)
    base_cfg = base_cfg or TrainConfig()
    result: dict[str, list[Path]] = {}
    for variant, aug in methods:
        tag = method_tag(variant, aug)
        for seed in seeds:
            out = out_root / run_slug(variant, aug, seed)
            ckpt = out / "checkpoint.pt"
            if not ckpt.exists():
                log.info("training %s seed %d", tag, seed)
                train(dataset, aug, variant, replace(base_cfg, epochs=epochs, seed=seed), out, on_epoch=on_epoch)
            result.setdefault(tag, []).append(ckpt)
    return result


def noisy_roi_transform(seed: int, cfg: NoisyCutoutConfig | None = None):
    """ROI corruption used for the test flights: NoisyCutout with a private RNG."""
    rng = np.random.default_rng(seed)
    cfg = cfg or NoisyCutoutConfig()
    return lambda roi: noisy_cutout_pixels(roi, cfg, rng)[0]


@dataclass
class FlightRun:
    rows: list
    first_lock_frame: int | None
    report: RmseReport | None


def fly(
    trackers: dict[str, Tracker], spec: FlightSpec, marker: MarkerSpec | None = None, style: SkyStyle | None = None,
    smooth: bool = True, cutoff_hz: float = 1.0,
) -> dict[str, FlightRun]:
    """Render one flight once and run every tracker over it."""
    frames = render_flight(spec, marker, style)
    head = [next(frames) for _ in range(spec.background_frames)]
    bg = build_background(head, spec.background_frames)
    states = {k: replace(TrackerState.initial(), window_origin=tr.positions[0]) for k, tr in trackers.items()}
    rows = {k: [] for k in trackers}
    first = {k: None for k in trackers}
    for i, frame in enumerate(frames, start=spec.background_frames):
        t = i / spec.frame_rate
        for k, tr in trackers.items():
            states[k], pos = tr.step(states[k], frame, bg, t)
            if pos is not None:
                rows[k].append(pos)
                if first[k] is None:
                    first[k] = i
    gt = ground_truth(spec)
    out = {}
    for k in trackers:
        track = rows[k]
        if smooth and track:
            track = smooth_z(track, spec.frame_rate, cutoff_hz)
        report = match_and_rmse(Track.from_positions(track), gt) if len(track) >= 2 else None
        out[k] = FlightRun(track, first[k], report)
    return out


def static_error(
    detector, spec: FlightSpec, n_poses: int = 40, marker: MarkerSpec | None = None,
    threshold: ThresholdConfig | None = None, roi_transform=None, style: SkyStyle | None = None,
) -> RmseReport:
    """Single-frame localisation error with the ROI centred on the true marker, at poses along the flight."""
    marker = marker or MarkerSpec()
    threshold = threshold or ThresholdConfig()
    cam = spec.camera
    frames = render_flight(spec, marker, style)
    head = [next(frames) for _ in range(spec.background_frames)]
    bg = build_background(head, spec.background_frames)
    frames.close()
    rng = np.random.default_rng(spec.seed + 7)
    style = style or SkyStyle()
    times = spec.t_start + np.linspace(0.0, spec.duration_s, n_poses)
    residuals = []
    for t in times:
        pose = spec.pose(float(t))
        obs = project_marker(pose, cam, marker)
        frame = bg.median_frame.astype(np.float32) + style.noise_sigma * rng.standard_normal(bg.median_frame.shape).astype(np.float32)
        frame[render_mask(pose, cam, marker).astype(bool)] = style.marker_rgb
        frame = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
        col, row = obs.u + (cam.width_px - 1) / 2, obs.v + (cam.height_px - 1) / 2
        origin = centred_origin(col, row, cam.height_px, cam.width_px)
        roi = binarise_window(frame, bg, origin, threshold)
        if roi_transform is not None:
            roi = roi_transform(roi)
        out = detector(roi[None])
        half = (roi.shape[0] - 1) / 2
        u = origin[1] + half + float(out["u"][0]) - (cam.width_px - 1) / 2
        v = origin[0] + half + float(out["v"][0]) - (cam.height_px - 1) / 2
        d = max(float(out["d"][0]), 1e-6)
        p = pixel_to_cartesian(PixelObservation(1, u, v, d), cam, marker)
        residuals.append((p.x_m - pose.x_m, p.y_m - pose.y_m, p.z_m - pose.z_m))
    return RmseReport.from_residuals(np.array(residuals))


def make_tracker(detector: Detector, spec: FlightSpec, tau: int, roi_seed: int | None, scan_all: bool = False) -> Tracker:
    transform = None if roi_seed is None else noisy_roi_transform(roi_seed)
    cfg = TrackerConfig(threshold=ThresholdConfig(tau), scan_all=scan_all)
    return Tracker(detector, spec.camera, MarkerSpec(), cfg, roi_transform=transform)


def flight_study(
    checkpoints: dict[str, list[Path]], flights: Sequence[FlightSpec], corrupt: bool = True,
    tau_by_method: dict[str, int] | None = None,
) -> dict:
    """Per-seed, per-flight RMSE of every method, pooled overall per seed and the median over seeds."""
    tau_by_method = tau_by_method or TAU_BY_METHOD
    detectors = {(tag, i): Detector.load(p) for tag, paths in checkpoints.items() for i, p in enumerate(paths)}
    per_run: dict[tuple[str, int], dict[str, RmseReport]] = {k: {} for k in detectors}
    for f_idx, spec in enumerate(flights):
        trackers = {
            k: make_tracker(det, spec, tau_by_method.get(k[0], 13), 1000 * f_idx + 17 if corrupt else None)
            for k, det in detectors.items()
        }
        runs = fly(trackers, spec)
        for k, run in runs.items():
            if run.report is None:
                raise ConfigError(f"{k[0]} seed {k[1]} never locked on during {spec.name}")
            per_run[k][spec.name] = run.report
    summary: dict = {"flights": [f.name for f in flights], "methods": {}}
    for tag in checkpoints:
        seeds = sorted(i for t, i in per_run if t == tag)
        tables = [compare_methods([(tag, per_run[(tag, i)])]) for i in seeds]
        overall = [t.cells[(tag, "Overall")] for t in tables]
        summary["methods"][tag] = {
            "per_seed": [t.to_dict()["rmse"][tag] for t in tables],
            "median_overall": {
                axis: float(np.median([getattr(r, key) for r in overall]))
                for axis, key in (("2D", "rmse_2d_m"), ("z", "rmse_z_m"), ("3D", "rmse_3d_m"))
            },
        }
    return summary


def write_json(path, data):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, default=_default) + "\n")


def _default(o):
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))
