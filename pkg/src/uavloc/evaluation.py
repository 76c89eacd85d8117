"""Trajectory evaluation: interpolation, nearest-timestamp matching, axis-wise RMSE, method tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from uavloc.errors import ConfigError, DataError, InsufficientDataError, NoOverlapError

GT_HEADER = ["t_s", "x_m", "y_m", "z_m"]


@dataclass
class Track:
    """Timestamped positions: ``t`` shape ``(n,)``, ``xyz`` shape ``(n, 3)``."""

    t: np.ndarray
    xyz: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if self.t.shape[0] != self.xyz.shape[0]:
            raise DataError("timestamps and positions differ in length")

    def __len__(self):
        return self.t.shape[0]

    @classmethod
    def from_positions(cls, positions: Sequence) -> "Track":
        """From objects with ``t_s``, ``x_m``, ``y_m``, ``z_m`` attributes."""
        t = [p.t_s for p in positions]
        xyz = [(p.x_m, p.y_m, p.z_m) for p in positions]
        return cls(np.array(t), np.array(xyz).reshape(-1, 3))


class GroundTruthTrack(Track):
    def __post_init__(self):
        super().__post_init__()
        if len(self) and np.any(np.diff(self.t) <= 0):
            raise DataError("ground-truth timestamps must be strictly increasing")


@dataclass
class RmseReport:
    rmse_2d_m: float
    rmse_z_m: float
    rmse_3d_m: float
    sample_count: int
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 3)))

    @classmethod
    def from_residuals(cls, residuals: np.ndarray) -> "RmseReport":
        res = np.asarray(residuals, dtype=np.float64).reshape(-1, 3)
        if res.shape[0] == 0:
            raise InsufficientDataError("no matched pairs to evaluate")
        sq = res**2
        e2d = sq[:, 0] + sq[:, 1]
        return cls(
            rmse_2d_m=math.sqrt(e2d.mean()),
            rmse_z_m=math.sqrt(sq[:, 2].mean()),
            rmse_3d_m=math.sqrt((e2d + sq[:, 2]).mean()),
            sample_count=res.shape[0],
            residuals=res,
        )

    def as_dict(self) -> dict:
        return {
            "rmse_2d_m": self.rmse_2d_m,
            "rmse_z_m": self.rmse_z_m,
            "rmse_3d_m": self.rmse_3d_m,
            "sample_count": self.sample_count,
        }


def interpolate_track(track: Track, dt: float = 0.01) -> Track:
    """Linear per-axis interpolation on the grid ``t0 + k dt``, ``k = 0 .. floor(span / dt)``."""
    if len(track) < 2:
        raise InsufficientDataError("interpolation needs at least two samples")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    order = np.argsort(track.t, kind="stable")
    t, xyz = track.t[order], track.xyz[order]
    n = int(math.floor((t[-1] - t[0]) / dt + 1e-9)) + 1
    grid = t[0] + dt * np.arange(n)
    out = np.column_stack([np.interp(grid, t, xyz[:, k]) for k in range(3)])
    return Track(grid, out)


def interpolate_at(track: Track, times) -> np.ndarray:
    order = np.argsort(track.t, kind="stable")
    t, xyz = track.t[order], track.xyz[order]
    times = np.asarray(times, dtype=np.float64)
    return np.column_stack([np.interp(times, t, xyz[:, k]) for k in range(3)])


def nearest_indices(grid: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Index of the nearest grid time for each query; ties go to the earlier sample."""
    idx = np.searchsorted(grid, times, side="left")
    idx = np.clip(idx, 1, len(grid) - 1) if len(grid) > 1 else np.zeros_like(idx)
    if len(grid) == 1:
        return idx
    left, right = grid[idx - 1], grid[idx]
    take_left = np.abs(times - left) <= np.abs(right - times)
    return np.where(take_left, idx - 1, idx)


def match_and_rmse(
    pred_track: Track, gt: Track, dt: float = 0.01, interpolate: bool = True, time_offset: float = 0.0
) -> RmseReport:
    """Match each ground-truth sample to the nearest (interpolated) prediction and compute RMSEs.

    Ground-truth samples further than ``dt / 2`` outside the prediction span
    are not evaluated. ``time_offset`` is added to prediction timestamps.
    """
    if len(pred_track) == 0 or len(gt) == 0:
        raise InsufficientDataError("both tracks must be non-empty")
    shifted = Track(pred_track.t + time_offset, pred_track.xyz)
    if interpolate and len(shifted) >= 2:
        grid_track = interpolate_track(shifted, dt)
    else:
        order = np.argsort(shifted.t, kind="stable")
        grid_track = Track(shifted.t[order], shifted.xyz[order])
    grid = grid_track.t
    inside = (gt.t >= grid[0] - dt / 2) & (gt.t <= grid[-1] + dt / 2)
    if not inside.any():
        raise NoOverlapError("prediction and ground-truth tracks do not overlap in time")
    idx = nearest_indices(grid, gt.t[inside])
    residuals = grid_track.xyz[idx] - gt.xyz[inside]
    return RmseReport.from_residuals(residuals)


def pooled(reports: Sequence[RmseReport]) -> RmseReport:
    """RMSE over all matched pairs of several reports (not an average of RMSEs)."""
    return RmseReport.from_residuals(np.concatenate([r.residuals for r in reports], axis=0))


# ---------------------------------------------------------------------------
# Method comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonTable:
    methods: list[str]
    flights: list[str]
    cells: dict  # (method, flight or "Overall") -> RmseReport
    improvements: dict = field(default_factory=dict)  # "B vs A" -> {axis: fraction}

    def row_labels(self) -> list[tuple[str, str]]:
        return [(f, axis) for f in self.flights + ["Overall"] for axis in ("2D", "z", "3D")]

    def value(self, method: str, flight: str, axis: str) -> float:
        rep = self.cells[(method, flight)]
        return {"2D": rep.rmse_2d_m, "z": rep.rmse_z_m, "3D": rep.rmse_3d_m}[axis]

    def to_markdown(self) -> str:
        lines = ["| Flight | RMSE | " + " | ".join(self.methods) + " |"]
        lines.append("|" + "---|" * (len(self.methods) + 2))
        for flight, axis in self.row_labels():
            vals = " | ".join(f"{self.value(m, flight, axis):.3f} m" for m in self.methods)
            lines.append(f"| {flight} | {axis} | {vals} |")
        for name, imp in self.improvements.items():
            lines.append("")
            lines.append(
                f"{name}: 2D {100 * imp['2D']:.1f}%, z {100 * imp['z']:.1f}%, 3D {100 * imp['3D']:.1f}% reduction"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "methods": self.methods,
            "flights": self.flights,
            "rmse": {
                m: {f: self.cells[(m, f)].as_dict() for f in self.flights + ["Overall"]} for m in self.methods
            },
            "improvements": self.improvements,
        }


def relative_reduction(base: RmseReport, new: RmseReport) -> dict:
    """``(base - new) / base`` per axis; NaN where the base error is zero."""

    def frac(b, n):
        return (b - n) / b if b > 0 else math.nan

    return {
        "2D": frac(base.rmse_2d_m, new.rmse_2d_m),
        "z": frac(base.rmse_z_m, new.rmse_z_m),
        "3D": frac(base.rmse_3d_m, new.rmse_3d_m),
    }


def compare_methods(
    runs: Sequence[tuple[str, Mapping[str, RmseReport]]],
    improvements: Sequence[tuple[str, str]] = (),
) -> ComparisonTable:
    """Per-flight and pooled overall RMSE for every method.

    ``improvements`` lists ``(base_method, new_method)`` pairs whose overall
    relative reduction is reported.
    """
    if not runs:
        raise ConfigError("no runs to compare")
    flights = list(runs[0][1].keys())
    cells = {}
    methods = []
    for method, per_flight in runs:
        if sorted(per_flight.keys()) != sorted(flights):
            raise ConfigError(f"method {method!r} was evaluated on a different set of flights")
        methods.append(method)
        for f in flights:
            cells[(method, f)] = per_flight[f]
        cells[(method, "Overall")] = pooled([per_flight[f] for f in flights])
    imps = {}
    for base, new in improvements:
        if base not in methods or new not in methods:
            raise ConfigError(f"unknown methods in improvement pair ({base}, {new})")
        imps[f"{new} vs {base}"] = relative_reduction(cells[(base, "Overall")], cells[(new, "Overall")])
    return ComparisonTable(methods, flights, cells, imps)


def plot_flight(path_prefix, gt: Track, tracks: Mapping[str, Track], title: str = ""):
    """Write ``<prefix>_xy.png`` (top view) and ``<prefix>_z.png`` (z against time)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(gt.xyz[:, 0], gt.xyz[:, 1], "k.-", label="ground truth")
    for name, tr in tracks.items():
        ax.plot(tr.xyz[:, 0], tr.xyz[:, 1], ".", ms=2, label=name)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(f"{prefix}_xy.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(gt.t, gt.xyz[:, 2], "k.-", label="ground truth")
    for name, tr in tracks.items():
        ax.plot(tr.t, tr.xyz[:, 2], "-", lw=1, label=name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("z [m]")
    ax.legend(fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(f"{prefix}_z.png", dpi=120)
    plt.close(fig)
    return [Path(f"{prefix}_xy.png"), Path(f"{prefix}_z.png")]


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def read_gt(path) -> GroundTruthTrack:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != GT_HEADER:
            raise DataError(f"{path}: expected header {','.join(GT_HEADER)}")
        rows = [[float(x) for x in line] for line in reader if line]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return GroundTruthTrack(arr[:, 0], arr[:, 1:])


def write_gt(path, track: Track):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for t, (x, y, z) in zip(track.t, track.xyz):
            w.writerow([f"{t:.6f}", repr(float(x)), repr(float(y)), repr(float(z))])


def write_report(path, report: RmseReport | ComparisonTable):
    data = report.to_dict() if isinstance(report, ComparisonTable) else report.as_dict()
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
