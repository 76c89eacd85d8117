"""Closed-form camera/marker geometry.

Axis convention, used everywhere in the package:

* ``+z`` is the optical axis, pointing skywards away from the camera.
* ``u`` is the horizontal pixel offset from the image centre, ``+u`` to the right.
* ``v`` is the vertical pixel offset from the image centre, ``+v`` downwards.
* The Cartesian ``y`` coordinate is recovered from ``u`` and ``x`` from ``v``;
  both share the metres-per-pixel scale ``D / (2 d)``.

Pixel ``(row, col)`` of a ``w x h`` image has its centre at offset
``u = col - (w - 1) / 2``, ``v = row - (h - 1) / 2``.

Marker orientation quaternions ``(w, p, q, r)`` express the marker's rotation
in the image-aligned camera frame (right, down, optical axis) and are
canonicalised to ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from uavloc.errors import ConfigError, InvalidObservationError, InvalidPoseError, NoDetectionError

DEFAULT_MARKER_DIAMETER_M = 0.47


@dataclass(frozen=True)
class CameraIntrinsics:
    width_px: int
    height_px: int
    hfov_rad: float
    vfov_rad: float
    frame_rate_hz: float = 12.5

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ConfigError("image dimensions must be positive")
        for name in ("hfov_rad", "vfov_rad"):
            fov = getattr(self, name)
            if not 0.0 < fov < math.pi:
                raise ConfigError(f"{name} must lie in (0, pi), got {fov}")
        if self.frame_rate_hz <= 0:
            raise ConfigError("frame rate must be positive")

    @classmethod
    def from_degrees(cls, width_px, height_px, hfov_deg, vfov_deg=None, frame_rate_hz=12.5):
        """Build from degrees; ``vfov_deg`` defaults to the square-pixel value."""
        hfov = math.radians(hfov_deg)
        if vfov_deg is None:
            vfov = 2.0 * math.atan(math.tan(hfov / 2.0) * height_px / width_px)
        else:
            vfov = math.radians(vfov_deg)
        return cls(int(width_px), int(height_px), hfov, vfov, float(frame_rate_hz))

    @property
    def focal_px(self) -> float:
        """Horizontal focal length in pixels, ``(w / 2) cot(alpha)``."""
        return 0.5 * self.width_px / math.tan(0.5 * self.hfov_rad)

    @property
    def centre(self) -> tuple[float, float]:
        """(col, row) of the image centre in pixel-centre coordinates."""
        return (self.width_px - 1) / 2.0, (self.height_px - 1) / 2.0


@dataclass(frozen=True)
class MarkerSpec:
    """Radial LED-strip marker.

    Arms are rectangles of width ``strip_width_m`` running from the hub
    outwards at ``360 / arm_count`` degree spacing. Their outer corners lie on
    the circumscribed circle of diameter ``diameter_m``.
    """

    diameter_m: float = DEFAULT_MARKER_DIAMETER_M
    arm_count: int = 4
    arms_present: tuple[bool, ...] = (True, True, True, False)
    strip_width_m: float = 0.05

    def __post_init__(self):
        if self.diameter_m <= 0:
            raise ConfigError("marker diameter must be positive")
        if len(self.arms_present) != self.arm_count:
            raise ConfigError("arms_present must have one entry per arm")
        if sum(bool(a) for a in self.arms_present) < 2:
            raise ConfigError("at least two arms must be present")
        if not 0 < self.strip_width_m < self.diameter_m:
            raise ConfigError("strip width must be positive and smaller than the diameter")

    def arm_corners(self) -> np.ndarray:
        """Corners of the present arms in the marker frame, shape ``(n, 4, 3)``."""
        radius = 0.5 * self.diameter_m
        half = 0.5 * self.strip_width_m
        length = math.sqrt(radius**2 - half**2)
        base = np.array([[0.0, -half], [length, -half], [length, half], [0.0, half]])
        arms = []
        for k, present in enumerate(self.arms_present):
            if not present:
                continue
            theta = 2.0 * math.pi * k / self.arm_count
            c, s = math.cos(theta), math.sin(theta)
            rot = np.array([[c, -s], [s, c]])
            xy = base @ rot.T
            arms.append(np.column_stack([xy, np.zeros(4)]))
        return np.array(arms)


def canonical_quaternion(quat) -> tuple[float, float, float, float]:
    """Unit quaternion with ``w >= 0`` (first non-zero component positive if ``w == 0``)."""
    q = np.asarray(quat, dtype=np.float64)
    q = q / np.linalg.norm(q)
    nonzero = np.flatnonzero(np.abs(q) > 1e-12)
    if q[0] < 0 or (q[0] == 0 and nonzero.size and q[nonzero[0]] < 0):
        q = -q
    return tuple(float(c) for c in q)


def quaternion_from_euler(yaw_deg: float, pitch_deg: float = 0.0, roll_deg: float = 0.0):
    """Canonical quaternion of ``Rz(yaw) Ry(pitch) Rx(roll)``; yaw is wrapped to [-180, 180)."""
    yaw = (yaw_deg + 180.0) % 360.0 - 180.0
    xyzw = Rotation.from_euler("ZYX", [yaw, pitch_deg, roll_deg], degrees=True).as_quat()
    return canonical_quaternion([xyzw[3], xyzw[0], xyzw[1], xyzw[2]])


def rotation_matrix(quat) -> np.ndarray:
    w, p, q, r = quat
    return Rotation.from_quat([p, q, r, w]).as_matrix()


@dataclass(frozen=True)
class MarkerPose:
    x_m: float
    y_m: float
    z_m: float
    quaternion: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.z_m > 0:
            raise InvalidPoseError(f"marker must be in front of the camera (z > 0), got z={self.z_m}")
        if abs(float(np.linalg.norm(self.quaternion)) - 1.0) > 1e-6:
            raise InvalidPoseError("pose quaternion must have unit norm")

    @classmethod
    def from_euler(cls, x_m, y_m, z_m, yaw_deg=0.0, pitch_deg=0.0, roll_deg=0.0):
        return cls(float(x_m), float(y_m), float(z_m), quaternion_from_euler(yaw_deg, pitch_deg, roll_deg))


@dataclass(frozen=True)
class PixelObservation:
    m: int
    u: float = 0.0
    v: float = 0.0
    d: float = 0.0
    quaternion: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.m not in (0, 1):
            raise InvalidObservationError(f"detection flag must be 0 or 1, got {self.m}")

    def in_frame(self, cam: CameraIntrinsics) -> bool:
        return abs(self.u) <= cam.width_px / 2 and abs(self.v) <= cam.height_px / 2


NULL_OBSERVATION = PixelObservation(m=0)


@dataclass(frozen=True)
class CartesianPosition:
    x_m: float
    y_m: float
    z_m: float
    t_s: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])


# ---------------------------------------------------------------------------
# Vectorised forms (arrays in, arrays out)
# ---------------------------------------------------------------------------


def z_from_diameter(d, width_px, hfov_rad, diameter_m=DEFAULT_MARKER_DIAMETER_M):
    d = np.asarray(d, dtype=np.float64)
    return diameter_m * width_px / (2.0 * d * math.tan(0.5 * hfov_rad))


def lateral_from_offset(offset, d, diameter_m=DEFAULT_MARKER_DIAMETER_M):
    return np.asarray(offset, dtype=np.float64) * diameter_m / (2.0 * np.asarray(d, dtype=np.float64))


def normalise_pixels(u, v, d, width_px):
    """Pixel offsets/diameter -> detector units (divided by image width)."""
    return u / width_px, v / width_px, d / width_px


def denormalise_pixels(u_n, v_n, d_n, width_px):
    return u_n * width_px, v_n * width_px, d_n * width_px


def offset_to_image(u, v, width_px, height_px):
    """Centre-relative offsets -> (col, row) pixel-centre coordinates."""
    return u + (width_px - 1) / 2.0, v + (height_px - 1) / 2.0


def image_to_offset(col, row, width_px, height_px):
    return col - (width_px - 1) / 2.0, row - (height_px - 1) / 2.0


# ---------------------------------------------------------------------------
# Operations on domain values
# ---------------------------------------------------------------------------


def _check_diameter(obs: PixelObservation):
    if not obs.d > 0:
        raise InvalidObservationError(f"marker pixel diameter must be positive, got d={obs.d}")


def pixel_to_z(obs: PixelObservation, cam: CameraIntrinsics, marker: MarkerSpec) -> float:
    """Depth along the optical axis: ``z = D w cot(alpha) / (2 d)``."""
    _check_diameter(obs)
    return float(z_from_diameter(obs.d, cam.width_px, cam.hfov_rad, marker.diameter_m))


def pixel_to_xy(obs: PixelObservation, marker: MarkerSpec) -> tuple[float, float]:
    """Lateral position ``(x, y)`` with ``y = u D / (2 d)`` and ``x = v D / (2 d)``."""
    _check_diameter(obs)
    scale = marker.diameter_m / (2.0 * obs.d)
    return obs.v * scale, obs.u * scale


def pixel_to_cartesian(
    obs: PixelObservation, cam: CameraIntrinsics, marker: MarkerSpec, t_s: float = 0.0
) -> CartesianPosition:
    if obs.m != 1:
        raise NoDetectionError("cannot localise an observation without a detected marker")
    x, y = pixel_to_xy(obs, marker)
    return CartesianPosition(x, y, pixel_to_z(obs, cam, marker), t_s)


def project_marker(pose: MarkerPose, cam: CameraIntrinsics, marker: MarkerSpec) -> PixelObservation:
    """Exact inverse of :func:`pixel_to_cartesian` for the marker hub.

    ``m`` is 1 iff the whole circumscribed disc of the marker is inside the image.
    """
    if not pose.z_m > 0:
        raise InvalidPoseError("marker is behind the camera")
    d = marker.diameter_m * cam.focal_px / pose.z_m
    u = 2.0 * pose.y_m * d / marker.diameter_m
    v = 2.0 * pose.x_m * d / marker.diameter_m
    visible = abs(u) + d / 2 <= cam.width_px / 2 and abs(v) + d / 2 <= cam.height_px / 2
    return PixelObservation(m=int(visible), u=u, v=v, d=d, quaternion=canonical_quaternion(pose.quaternion))


def delta_z(obs: PixelObservation, z: float, delta_d: float) -> float:
    """First-order depth error caused by a diameter error: ``(delta_d / d) z``."""
    _check_diameter(obs)
    return delta_d / obs.d * z


def delta_y(obs: PixelObservation, y: float, delta_u: float, marker: MarkerSpec | None = None) -> float:
    """First-order ``y`` error caused by a horizontal pixel error: ``(delta_u / u) y``.

    At ``u == 0`` the ratio is undefined and the equivalent ``delta_u D / (2 d)``
    is returned instead.
    """
    _check_diameter(obs)
    if obs.u != 0:
        return delta_u / obs.u * y
    marker = marker or MarkerSpec()
    return delta_u * marker.diameter_m / (2.0 * obs.d)


def delta_x(obs: PixelObservation, x: float, delta_v: float, marker: MarkerSpec | None = None) -> float:
    """Same as :func:`delta_y` for the vertical axis."""
    _check_diameter(obs)
    if obs.v != 0:
        return delta_v / obs.v * x
    marker = marker or MarkerSpec()
    return delta_v * marker.diameter_m / (2.0 * obs.d)


__all__ = [
    "CameraIntrinsics",
    "MarkerSpec",
    "MarkerPose",
    "PixelObservation",
    "CartesianPosition",
    "NULL_OBSERVATION",
    "canonical_quaternion",
    "quaternion_from_euler",
    "rotation_matrix",
    "z_from_diameter",
    "lateral_from_offset",
    "normalise_pixels",
    "denormalise_pixels",
    "offset_to_image",
    "image_to_offset",
    "pixel_to_z",
    "pixel_to_xy",
    "pixel_to_cartesian",
    "project_marker",
    "delta_z",
    "delta_y",
    "delta_x",
]
