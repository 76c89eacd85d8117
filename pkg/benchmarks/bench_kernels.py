"""Numba vs NumPy timings for the hot pixel kernels.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called once per backend before timing so JIT compilation is excluded, and the
two backends' outputs are checked for equality.
"""

import argparse
import time

import numpy as np

from uavloc import kernels
from uavloc.geometry import MarkerPose, MarkerSpec
from uavloc.synthgen import SYNTH_CAMERA, marker_quads


def _cases(rng):
    pose = MarkerPose.from_euler(0.1, -0.05, 3.0, yaw_deg=30, pitch_deg=3, roll_deg=-2)
    quads = marker_quads(pose, SYNTH_CAMERA, MarkerSpec())
    img = (rng.random((299, 299)) < 0.1).astype(np.uint8)
    masked = rng.random((10, 10)) < 0.05
    white = rng.random((10, 10)) < 0.5
    green = rng.integers(0, 256, (299, 299), dtype=np.uint8)
    bg = rng.integers(0, 256, (299, 299), dtype=np.uint8)
    return {
        "rasterise_quads": lambda: kernels.rasterise_quads(quads, 299, 299),
        "apply_window_masks": lambda: kernels.apply_window_masks(img, 31, masked, white),
        "blur_threshold 3x3": lambda: kernels.blur_threshold(img, (3, 3)),
        "binarise": lambda: kernels.binarise(green, bg, 13, 100),
    }


def _time(fn, repeat):
    fn()
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    print(f"{'kernel':<22}{'numpy [us]':>12}{'numba [us]':>12}{'speedup':>9}")
    for name, fn in cases.items():
        with kernels.use_backend("numpy"):
            ref = fn()
            t_np = _time(fn, args.repeat)
        with kernels.use_backend("numba"):
            out = fn()
            t_nb = _time(fn, args.repeat)
        assert np.array_equal(ref, out), name
        print(f"{name:<22}{1e6 * t_np:>12.1f}{1e6 * t_nb:>12.1f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
