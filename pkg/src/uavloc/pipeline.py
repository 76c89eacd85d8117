"""Frame-level tracking: background model, ROI search, binarisation, lock-on, z smoothing."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import cv2
import numpy as np
from scipy import signal

from uavloc import kernels
from uavloc.errors import ConfigError, DataError, InsufficientFramesError
from uavloc.geometry import (
    CameraIntrinsics,
    CartesianPosition,
    MarkerSpec,
    PixelObservation,
    image_to_offset,
    offset_to_image,
    pixel_to_cartesian,
)

WINDOW = 299
BACKGROUND_FRAMES = 50
TAU_BY_METHOD = {
    "MbULNet_0(SPCutout)": 25,
    "MbULNet_0(NoisyCutout)": 10,
    "MbULNet_UP(NoisyCutout)": 13,
}
TRACK_HEADER = ["t_s", "x_m", "y_m", "z_m", "m_hat", "u_px", "v_px", "d_px"]


@dataclass(frozen=True)
class ThresholdConfig:
    tau: int = 13
    green_pixel_threshold: int = 100

    def __post_init__(self):
        if not 0 < self.tau < 255:
            raise ConfigError(f"tau must lie in (0, 255), got {self.tau}")


@dataclass(frozen=True)
class TrackerConfig:
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    window: int = WINDOW
    overlap: int = 20
    detection_threshold: float = 0.5
    lost_frames: int = 1
    scan_all: bool = False

    def __post_init__(self):
        if not 0 <= self.overlap < self.window:
            raise ConfigError("window overlap must be smaller than the window")
        if self.lost_frames < 1:
            raise ConfigError("lost_frames must be >= 1")


@dataclass
class BackgroundModel:
    median_frame: np.ndarray  # (H, W, 3) uint8

    @property
    def green(self) -> np.ndarray:
        return self.median_frame[..., 1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.median_frame.shape[:2]


def build_background(frames: Sequence[np.ndarray] | Iterable[np.ndarray], n_frames: int = BACKGROUND_FRAMES):
    """Per-pixel, per-channel median of the first ``n_frames`` RGB frames."""
    stack = []
    for frame in frames:
        stack.append(np.asarray(frame, dtype=np.uint8))
        if len(stack) == n_frames:
            break
    if len(stack) < n_frames:
        raise InsufficientFramesError(f"background needs {n_frames} frames, got {len(stack)}")
    shape = stack[0].shape
    if any(f.shape != shape for f in stack):
        raise DataError("background frames must share one shape")
    stack = np.stack(stack)
    if stack.ndim == 3:
        stack = np.repeat(stack[..., None], 3, axis=-1)
    med = np.empty(stack.shape[1:], dtype=np.uint8)
    for ch in range(stack.shape[-1]):
        med[..., ch] = np.floor(np.median(stack[..., ch], axis=0) + 0.5).astype(np.uint8)
    return BackgroundModel(med)


def binarise_window(
    frame: np.ndarray, bg: BackgroundModel, origin: tuple[int, int], cfg: ThresholdConfig, size: int = WINDOW
) -> np.ndarray:
    """Green-channel background difference above ``tau`` AND green above the pixel threshold."""
    r, c = origin
    h, w = bg.shape
    if r < 0 or c < 0 or r + size > h or c + size > w:
        raise DataError(f"window at {origin} does not fit in a {w}x{h} frame")
    green = frame[r : r + size, c : c + size, 1]
    return kernels.binarise(green, bg.green[r : r + size, c : c + size], cfg.tau, cfg.green_pixel_threshold)


def _axis_positions(length: int, size: int, step: int) -> list[int]:
    if length < size:
        raise DataError(f"frame dimension {length} is smaller than the {size} px window")
    pos = list(range(0, length - size + 1, step))
    if pos[-1] != length - size:
        pos.append(length - size)
    return pos


def window_positions(height: int, width: int, size: int = WINDOW, overlap: int = 20) -> list[tuple[int, int]]:
    """Raster-order window origins ``(row, col)``; the last row/column is clipped to the frame."""
    step = size - overlap
    rows = _axis_positions(height, size, step)
    cols = _axis_positions(width, size, step)
    return [(r, c) for r in rows for c in cols]


def centred_origin(col: float, row: float, height: int, width: int, size: int = WINDOW) -> tuple[int, int]:
    """Origin of the in-frame window whose centre is nearest to ``(col, row)``."""
    half = (size - 1) / 2
    r0 = int(np.clip(np.floor(row - half + 0.5), 0, height - size))
    c0 = int(np.clip(np.floor(col - half + 0.5), 0, width - size))
    return r0, c0


class Mode(Enum):
    SEARCHING = "searching"
    LOCKED = "locked"


@dataclass(frozen=True)
class Detection:
    """One detection in full-frame pixel offsets (from the frame centre)."""

    m_hat: float
    u_px: float
    v_px: float
    d_px: float
    quaternion: tuple[float, float, float, float]
    col: float
    row: float


@dataclass(frozen=True)
class TrackerState:
    mode: Mode
    window_origin: tuple[int, int]
    last_prediction: Detection | None = None
    search_index: int = 0
    misses: int = 0

    @classmethod
    def initial(cls) -> "TrackerState":
        return cls(Mode.SEARCHING, (0, 0))


class Tracker:
    """Sequential detect-and-lock tracker over full RGB frames.

    ``model`` is any callable mapping a ``(N, 299, 299)`` {0,1} array to a dict
    with ``m_hat`` and window-pixel ``u``, ``v``, ``d`` arrays (see
    :class:`uavloc.detector.inference.Detector`). ``roi_transform`` is applied
    to each binarised window before inference.
    """

    def __init__(
        self,
        model,
        cam: CameraIntrinsics,
        marker: MarkerSpec | None = None,
        cfg: TrackerConfig | None = None,
        roi_transform: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self.model = model
        self.cam = cam
        self.marker = marker or MarkerSpec()
        self.cfg = cfg or TrackerConfig()
        self.roi_transform = roi_transform
        self.positions = window_positions(cam.height_px, cam.width_px, self.cfg.window, self.cfg.overlap)

    def _binarised(self, frame, bg, origin):
        roi = binarise_window(frame, bg, origin, self.cfg.threshold, self.cfg.window)
        if self.roi_transform is not None:
            roi = self.roi_transform(roi)
        return roi

    def _detection(self, out: dict, k: int, origin: tuple[int, int]) -> Detection:
        half = (self.cfg.window - 1) / 2
        col = origin[1] + half + float(out["u"][k])
        row = origin[0] + half + float(out["v"][k])
        u, v = image_to_offset(col, row, self.cam.width_px, self.cam.height_px)
        return Detection(
            float(out["m_hat"][k]), u, v, float(out["d"][k]), tuple(float(x) for x in out["q"][k]), col, row
        )

    def step(self, state: TrackerState, frame: np.ndarray, bg: BackgroundModel, t_s: float = 0.0):
        """Process one frame; returns ``(new_state, CartesianPosition or None)``."""
        if frame.shape[:2] != bg.shape:
            raise DataError("frame and background shapes differ")
        thr = self.cfg.detection_threshold
        if state.mode is Mode.SEARCHING and self.cfg.scan_all:
            rois = np.stack([self._binarised(frame, bg, o) for o in self.positions])
            out = self.model(rois)
            k = int(np.argmax(out["m_hat"]))
            origin = self.positions[k]
        else:
            origin = state.window_origin
            out = self.model(self._binarised(frame, bg, origin)[None])
            k = 0
        if out["m_hat"][k] >= thr and out["d"][k] > 0:
            det = self._detection(out, k, origin)
            obs = PixelObservation(1, det.u_px, det.v_px, det.d_px, det.quaternion)
            pos = pixel_to_cartesian(obs, self.cam, self.marker, t_s)
            nxt = centred_origin(det.col, det.row, self.cam.height_px, self.cam.width_px, self.cfg.window)
            return TrackerState(Mode.LOCKED, nxt, det, state.search_index, 0), pos

        if state.mode is Mode.LOCKED:
            misses = state.misses + 1
            if misses < self.cfg.lost_frames:
                return replace(state, misses=misses), None
            # restart the search from the last locked window
            nearest = int(np.argmin([abs(r - origin[0]) + abs(c - origin[1]) for r, c in self.positions]))
            return TrackerState(Mode.SEARCHING, origin, state.last_prediction, nearest, 0), None

        nxt_index = (state.search_index + 1) % len(self.positions)
        return TrackerState(Mode.SEARCHING, self.positions[nxt_index], state.last_prediction, nxt_index, 0), None


def step(state, frame, bg, model, cfg, cam, marker, t_s=0.0):
    """Functional form of :meth:`Tracker.step`."""
    return Tracker(model, cam, marker, cfg).step(state, frame, bg, t_s)


@dataclass(frozen=True)
class TrackRow:
    t_s: float
    x_m: float
    y_m: float
    z_m: float
    m_hat: float
    u_px: float
    v_px: float
    d_px: float

    def position(self) -> CartesianPosition:
        return CartesianPosition(self.x_m, self.y_m, self.z_m, self.t_s)


def run_tracker(
    tracker: Tracker,
    frames: Iterable[np.ndarray],
    background_frames: int = BACKGROUND_FRAMES,
    frame_rate: float | None = None,
    on_step: Callable | None = None,
) -> list[TrackRow]:
    """Build the background from the first frames, then track the rest.

    Timestamps are ``index / frame_rate`` with indices counted from the first
    frame of the sequence.
    """
    fps = frame_rate or tracker.cam.frame_rate_hz
    it = iter(frames)
    head = []
    for frame in it:
        head.append(frame)
        if len(head) == background_frames:
            break
    bg = build_background(head, background_frames)
    state = TrackerState.initial()
    state = replace(state, window_origin=tracker.positions[0])
    rows = []
    for i, frame in enumerate(it, start=background_frames):
        t = i / fps
        state, pos = tracker.step(state, frame, bg, t)
        if on_step is not None:
            on_step(i, state, pos)
        if pos is not None:
            det = state.last_prediction
            rows.append(TrackRow(t, pos.x_m, pos.y_m, pos.z_m, det.m_hat, det.u_px, det.v_px, det.d_px))
    return rows


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def butterworth(frame_rate: float, cutoff_hz: float = 1.0, order: int = 1):
    """``(b, a)`` of a digital Butterworth low-pass (bilinear transform)."""
    if not 0 < cutoff_hz < frame_rate / 2:
        raise ConfigError("cutoff must lie strictly between 0 and the Nyquist frequency")
    return signal.butter(order, cutoff_hz, btype="low", fs=frame_rate)


def smooth_series(z: np.ndarray, frame_rate: float, cutoff_hz: float = 1.0, zero_phase: bool = False) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        return z.copy()
    b, a = butterworth(frame_rate, cutoff_hz)
    if zero_phase:
        if z.size <= 3 * max(len(a), len(b)):
            return z.copy()
        return signal.filtfilt(b, a, z)
    # start in steady state at the first sample so a constant input passes unchanged
    zi = signal.lfilter_zi(b, a) * z[0]
    out, _ = signal.lfilter(b, a, z, zi=zi)
    return out


def smooth_z(track: Sequence, frame_rate: float = 12.5, cutoff_hz: float = 1.0, zero_phase: bool = False):
    """Low-pass the z coordinate of a uniformly sampled track; x, y and t are untouched."""
    if len(track) == 0:
        return []
    z = smooth_series([p.z_m for p in track], frame_rate, cutoff_hz, zero_phase)
    return [replace(p, z_m=float(zf)) for p, zf in zip(track, z)]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_track(path, rows: Sequence[TrackRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for r in rows:
            w.writerow([f"{r.t_s:.6f}"] + [repr(float(getattr(r, k))) for k in TRACK_HEADER[1:]])


def read_track(path) -> list[TrackRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != TRACK_HEADER:
            raise DataError(f"{path}: expected header {','.join(TRACK_HEADER)}")
        for line in reader:
            if line:
                rows.append(TrackRow(*(float(x) for x in line)))
    return rows


_NUM = re.compile(r"(\d+)")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def _numeric_key(path: Path):
    nums = _NUM.findall(path.stem)
    return (int(nums[-1]) if nums else -1, path.name)


def iter_frames(path) -> Iterator[np.ndarray]:
    """RGB frames from a directory of numbered images or from a video file."""
    path = Path(path)
    if path.is_dir():
        files = sorted((p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES), key=_numeric_key)
        for f in files:
            img = cv2.imread(str(f), cv2.IMREAD_COLOR)
            if img is None:
                raise DataError(f"cannot read frame {f}")
            yield cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    elif path.is_file():
        cap = cv2.VideoCapture(str(path))
        if not cap.isOpened():
            raise DataError(f"cannot open video {path}")
        try:
            while True:
                ok, img = cap.read()
                if not ok:
                    break
                yield cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        finally:
            cap.release()
    else:
        raise ConfigError(f"frames path {path} does not exist")


def write_frames(directory, frames: Iterable[np.ndarray]) -> int:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = 0
    for i, frame in enumerate(frames):
        cv2.imwrite(str(directory / f"frame_{i:05d}.png"), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        n += 1
    return n


__all__ = [
    "ThresholdConfig",
    "TrackerConfig",
    "BackgroundModel",
    "TrackerState",
    "Mode",
    "Detection",
    "Tracker",
    "TrackRow",
    "build_background",
    "binarise_window",
    "window_positions",
    "centred_origin",
    "step",
    "run_tracker",
    "butterworth",
    "smooth_series",
    "smooth_z",
    "write_track",
    "read_track",
    "iter_frames",
    "write_frames",
    "offset_to_image",
]
