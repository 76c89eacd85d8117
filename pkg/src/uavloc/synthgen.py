"""Synthetic binary-image dataset of the LED marker.

The marker is drawn as a set of lit rectangles on a black 299 x 299 image.
The hub is placed with :func:`uavloc.geometry.project_marker`; the arm
geometry is scaled at ``d / D`` pixels per metre and foreshortened by the
pose's roll/pitch with a local perspective about the hub.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from uavloc import kernels
from uavloc.errors import ConfigError, DataError, RejectedPoseError
from uavloc.geometry import (
    CameraIntrinsics,
    MarkerPose,
    MarkerSpec,
    PixelObservation,
    offset_to_image,
    pixel_to_xy,
    project_marker,
    rotation_matrix,
)

IMAGE_SIZE = 299
DEFAULT_POSITIVE = 5500
DEFAULT_NULL = 1300
# validation share of the 6800-image dataset (5400 train / 1400 validation)
VALIDATION_FRACTION = 1400 / 6800

# 299 px virtual camera. 13.65 deg puts d(20 m) ~ 29 px and d(2 m) ~ 294 px,
# which still fits a marker tilted by 5 deg roll and pitch inside the frame.
SYNTH_CAMERA = CameraIntrinsics.from_degrees(IMAGE_SIZE, IMAGE_SIZE, 13.65)


@dataclass
class LabeledBinaryImage:
    pixels: np.ndarray
    label: PixelObservation
    pose: MarkerPose | None = None

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise DataError("binary images are single-channel 2-D arrays")
        if self.label.m == 0 and self.pose is not None:
            raise DataError("negative samples carry no pose")

    def with_pixels(self, pixels: np.ndarray) -> "LabeledBinaryImage":
        return LabeledBinaryImage(pixels, self.label, self.pose)


@dataclass
class PoseSampler:
    z_range_m: tuple[float, float] = (2.0, 20.0)
    yaw_range_deg: tuple[float, float] = (-180.0, 180.0)
    roll_pitch_range_deg: tuple[float, float] = (-5.0, 5.0)
    seed: int = 0
    camera: CameraIntrinsics = SYNTH_CAMERA
    marker: MarkerSpec = field(default_factory=MarkerSpec)
    _rng: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = self.z_range_m
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid z range {self.z_range_m}")
        if self.roll_pitch_range_deg[0] > self.roll_pitch_range_deg[1]:
            raise ConfigError("invalid roll/pitch range")
        if self.yaw_range_deg[0] > self.yaw_range_deg[1]:
            raise ConfigError("invalid yaw range")

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng

    def max_tilt_rad(self) -> float:
        lim = max(abs(a) for a in self.roll_pitch_range_deg)
        # combined roll and pitch tilt the marker plane by at most this angle
        return math.atan(math.hypot(math.tan(math.radians(lim)), math.tan(math.radians(lim))))

    def half_extent_px(self, d: float, z: float) -> float:
        """Largest distance of lit geometry from the hub in pixels at depth ``z``."""
        near = 0.5 * self.marker.diameter_m * math.sin(self.max_tilt_rad())
        return 0.5 * d * z / (z - near)


def sample_pose(sampler: PoseSampler, rng: np.random.Generator | None = None) -> MarkerPose:
    """Draw a pose uniformly within the sampler ranges with the marker fully in view.

    The hub pixel position is drawn uniformly over the positions that keep
    the whole (tilted) marker inside the image; Cartesian x/y follow from it.
    """
    rng = sampler.rng if rng is None else rng
    cam, marker = sampler.camera, sampler.marker
    z = rng.uniform(*sampler.z_range_m)
    yaw = rng.uniform(*sampler.yaw_range_deg)
    pitch = rng.uniform(*sampler.roll_pitch_range_deg)
    roll = rng.uniform(*sampler.roll_pitch_range_deg)
    d = marker.diameter_m * cam.focal_px / z
    extent = sampler.half_extent_px(d, z)
    u_lim = max(cam.width_px / 2 - extent, 0.0)
    v_lim = max(cam.height_px / 2 - extent, 0.0)
    u = rng.uniform(-u_lim, u_lim)
    v = rng.uniform(-v_lim, v_lim)
    x, y = pixel_to_xy(PixelObservation(m=1, u=u, v=v, d=d), marker)
    return MarkerPose.from_euler(x, y, z, yaw_deg=yaw, pitch_deg=pitch, roll_deg=roll)


def marker_quads(pose: MarkerPose, cam: CameraIntrinsics, marker: MarkerSpec) -> np.ndarray:
    """Arm rectangles of ``pose`` as ``(n, 4, 2)`` (col, row) image coordinates."""
    obs = project_marker(pose, cam, marker)
    corners = marker.arm_corners() @ rotation_matrix(pose.quaternion).T
    scale = obs.d / marker.diameter_m
    persp = pose.z_m / (pose.z_m + corners[..., 2])
    col0, row0 = offset_to_image(obs.u, obs.v, cam.width_px, cam.height_px)
    cols = col0 + scale * corners[..., 0] * persp
    rows = row0 + scale * corners[..., 1] * persp
    return np.stack([cols, rows], axis=-1)


def render_mask(pose: MarkerPose, cam: CameraIntrinsics, marker: MarkerSpec) -> np.ndarray:
    """Binary ``(h, w)`` mask of the marker; geometry outside the image is clipped."""
    return kernels.rasterise_quads(marker_quads(pose, cam, marker), cam.height_px, cam.width_px)


def render_marker(pose: MarkerPose, cam: CameraIntrinsics = SYNTH_CAMERA, marker: MarkerSpec | None = None):
    """Render a labelled binary image; poses not fully in view are rejected."""
    marker = marker or MarkerSpec()
    label = project_marker(pose, cam, marker)
    if label.m != 1:
        raise RejectedPoseError(f"marker not fully inside the {cam.width_px}x{cam.height_px} image")
    return LabeledBinaryImage(render_mask(pose, cam, marker), label, pose)


def null_image(cam: CameraIntrinsics = SYNTH_CAMERA) -> LabeledBinaryImage:
    return LabeledBinaryImage(np.zeros((cam.height_px, cam.width_px), np.uint8), PixelObservation(m=0))


def lit_circle(pixels: np.ndarray) -> tuple[float, float, float] | None:
    """Minimum enclosing circle of the lit pixels as ``(u, v, diameter)``.

    Pixels are unit squares: the circle is fitted to lit pixel centres and
    widened by one pixel.
    """
    rows, cols = np.nonzero(pixels)
    if rows.size == 0:
        return None
    pts = np.column_stack([cols, rows]).astype(np.float32)
    (cx, cy), radius = cv2.minEnclosingCircle(pts)
    h, w = pixels.shape
    return cx - (w - 1) / 2.0, cy - (h - 1) / 2.0, 2.0 * radius + 1.0


# ---------------------------------------------------------------------------
# Dataset on disk
# ---------------------------------------------------------------------------

RECORD_FIELDS = ["sample_id", "m", "u", "v", "d", "w", "p", "q", "r", "x", "y", "z", "seed"]
MANIFEST_FIELDS = ["sample_id", "file", "split"] + RECORD_FIELDS[1:]


@dataclass
class SampleRecord:
    sample_id: int
    file: str
    split: str
    m: int
    u: float
    v: float
    d: float
    quaternion: tuple[float, float, float, float]
    position: tuple[float, float, float] | None
    seed: int

    def label(self) -> PixelObservation:
        return PixelObservation(self.m, self.u, self.v, self.d, self.quaternion)

    def values(self) -> list:
        pos = self.position if self.position is not None else (math.nan,) * 3
        return [self.sample_id, self.m, *_fmt(self.u, self.v, self.d), *_fmt(*self.quaternion), *_fmt(*pos), self.seed]


def _fmt(*vals):
    return [repr(float(v)) for v in vals]


@dataclass
class DatasetManifest:
    root: Path
    records: list[SampleRecord]
    config: dict
    digest: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def count_positive(self) -> int:
        return sum(r.m for r in self.records)

    @property
    def count_null(self) -> int:
        return len(self.records) - self.count_positive

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def load_pixels(self, records: list[SampleRecord] | None = None) -> np.ndarray:
        records = self.records if records is None else records
        return np.stack([read_binary_image(self.root / r.file) for r in records])

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        root = Path(root)
        path = root / "manifest.csv"
        if not path.exists():
            raise ConfigError(f"no dataset manifest at {path}")
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                pos = tuple(float(row[k]) for k in "xyz")
                records.append(
                    SampleRecord(
                        sample_id=int(row["sample_id"]),
                        file=row["file"],
                        split=row["split"],
                        m=int(row["m"]),
                        u=float(row["u"]),
                        v=float(row["v"]),
                        d=float(row["d"]),
                        quaternion=tuple(float(row[k]) for k in "wpqr"),
                        position=None if math.isnan(pos[0]) else pos,
                        seed=int(row["seed"]),
                    )
                )
        meta_path = root / "dataset.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(root, records, meta.get("config", {}), meta.get("digest", ""))


def read_binary_image(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"cannot read image {path}")
    if img.ndim == 3:
        img = img[..., 1]
    return (img > 0).astype(np.uint8)


def write_binary_image(path, pixels: np.ndarray):
    if not cv2.imwrite(str(path), (pixels > 0).astype(np.uint8) * 255, [cv2.IMWRITE_PNG_COMPRESSION, 6]):
        raise OSError(f"cannot write {path}")


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _make_sample(args):
    index, positive, seed, sampler, cam, marker = args
    rng = sample_rng(seed, index)
    if positive:
        return render_marker(sample_pose(sampler, rng), cam, marker)
    return null_image(cam)


def generate_dataset(
    count_positive: int = DEFAULT_POSITIVE,
    count_null: int = DEFAULT_NULL,
    sampler: PoseSampler | None = None,
    cam: CameraIntrinsics = SYNTH_CAMERA,
    marker: MarkerSpec | None = None,
    out_path=".",
    seed: int | None = None,
    workers: int = 1,
) -> DatasetManifest:
    """Render ``count_positive`` marker images and ``count_null`` empty ones to ``out_path``.

    Sample ``i`` draws from an RNG seeded by ``(seed, i)``, so the result does
    not depend on ``workers``.
    """
    if count_positive < 0 or count_null < 0:
        raise ConfigError("sample counts must be non-negative")
    marker = marker or MarkerSpec()
    sampler = sampler or PoseSampler(camera=cam, marker=marker)
    seed = sampler.seed if seed is None else seed
    root = Path(out_path)
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {root}: {exc}") from exc

    total = count_positive + count_null
    jobs = [(i, i < count_positive, seed, sampler, cam, marker) for i in range(total)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            samples = list(pool.map(_make_sample, jobs, chunksize=64))
    else:
        samples = [_make_sample(job) for job in jobs]

    n_val = int(round(total * VALIDATION_FRACTION))
    order = np.random.default_rng([seed, 2**31 - 1]).permutation(total)
    val_ids = set(order[:n_val].tolist())

    records = []
    for i, sample in enumerate(samples):
        name = f"images/{i:05d}.png"
        write_binary_image(root / name, sample.pixels)
        lab = sample.label
        pos = None if sample.pose is None else (sample.pose.x_m, sample.pose.y_m, sample.pose.z_m)
        rec = SampleRecord(
            i, name, "val" if i in val_ids else "train", lab.m, lab.u, lab.v, lab.d, lab.quaternion, pos, seed
        )
        (root / f"images/{i:05d}.txt").write_text(",".join(str(v) for v in rec.values()) + "\n")
        records.append(rec)

    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for rec in records:
            vals = rec.values()
            writer.writerow([vals[0], rec.file, rec.split, *vals[1:]])

    config = {
        "count_positive": count_positive,
        "count_null": count_null,
        "seed": seed,
        "camera": asdict(cam),
        "marker": asdict(marker),
        "sampler": {
            "z_range_m": list(sampler.z_range_m),
            "yaw_range_deg": list(sampler.yaw_range_deg),
            "roll_pitch_range_deg": list(sampler.roll_pitch_range_deg),
        },
    }
    manifest = DatasetManifest(root, records, config)
    manifest.digest = dataset_digest(root)
    (root / "dataset.json").write_text(json.dumps({"config": config, "digest": manifest.digest}, indent=2) + "\n")
    return manifest


def dataset_digest(root) -> str:
    """SHA-256 over the manifest and every image/sidecar file, in name order."""
    root = Path(root)
    h = hashlib.sha256()
    files = [root / "manifest.csv"] + sorted((root / "images").iterdir())
    for path in files:
        h.update(path.relative_to(root).as_posix().encode())
        h.update(path.read_bytes())
    return h.hexdigest()
