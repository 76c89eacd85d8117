"""End-to-end acceptance checks, one test per criterion.

Criteria 5b, 6 and 7 load the detectors trained by
``uavloc experiment sweep --out artifacts`` (see README); everything else is
recomputed here. Each test prints a one-line verdict and the terminal summary
lists PASS/FAIL per criterion.
"""

import math
import time

import numpy as np
import pytest
import torch
from scipy import signal

from uavloc.augment import NoisyCutoutConfig, noisy_cutout_pixels
from uavloc.detector.inference import Detector
from uavloc.detector.losses import LossConfig, Targets, compute_loss
from uavloc.detector.model import Prediction, TinyNet
from uavloc.detector.train import TrainConfig, evaluate, method_tag, targets_from_records
from uavloc.experiments import METHODS, flight_study, fly, make_tracker, overfit, run_slug, static_error
from uavloc.geometry import (
    CameraIntrinsics,
    MarkerPose,
    MarkerSpec,
    PixelObservation,
    delta_y,
    delta_z,
    pixel_to_cartesian,
    pixel_to_xy,
    pixel_to_z,
    project_marker,
)
from uavloc.pipeline import TAU_BY_METHOD, ThresholdConfig, butterworth, smooth_series
from uavloc.simulate import square_flights

MARKER = MarkerSpec()
SEEDS = (0, 1, 2)
OVERFIT_CFG = TrainConfig(epochs=500, batch_size=64, seed=0)


def verdict(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def checkpoint(artifacts, variant, aug, seed):
    path = artifacts / "runs" / run_slug(variant, aug, seed) / "checkpoint.pt"
    assert path.is_file(), f"{path} missing; run 'uavloc experiment sweep --out artifacts' first"
    return path


@pytest.mark.criterion(1, "geometry round trip over 1000 poses within 1e-6 m in < 1 s")
def test_criterion_1_round_trip():
    rng = np.random.default_rng(2024)
    cam = CameraIntrinsics.from_degrees(1280, 720, 54.0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        z = rng.uniform(2, 20)
        d = MARKER.diameter_m * cam.focal_px / z
        u = rng.uniform(-(cam.width_px - d) / 2, (cam.width_px - d) / 2)
        v = rng.uniform(-(cam.height_px - d) / 2, (cam.height_px - d) / 2)
        x, y = v * MARKER.diameter_m / (2 * d), u * MARKER.diameter_m / (2 * d)
        pose = MarkerPose.from_euler(x, y, z, rng.uniform(-180, 180), rng.uniform(-5, 5), rng.uniform(-5, 5))
        p = pixel_to_cartesian(project_marker(pose, cam, MARKER), cam, MARKER)
        worst = max(worst, abs(p.x_m - x), abs(p.y_m - y), abs(p.z_m - z))
    elapsed = time.perf_counter() - start
    assert verdict(1, worst < 1e-6 and elapsed < 1.0, f"max error {worst:.2e} m, {elapsed:.3f} s")


@pytest.mark.criterion(2, "propagated errors match finite differences within 1%; quartic factor 4 to 1e-9")
def test_criterion_2_uncertainty_propagation():
    rng = np.random.default_rng(7)
    cam = CameraIntrinsics.from_degrees(1280, 720, 54.0)
    worst = 0.0
    for _ in range(100):
        d = rng.uniform(10, 300)
        u = rng.choice([-1, 1]) * rng.uniform(5, 600)
        o = PixelObservation(1, u, 0.0, d)
        z = pixel_to_z(o, cam, MARKER)
        _, y = pixel_to_xy(o, MARKER)
        dd, du = 1e-3 * d, 1e-3 * abs(u)
        fd_z = pixel_to_z(PixelObservation(1, u, 0, d - dd / 2), cam, MARKER) - pixel_to_z(PixelObservation(1, u, 0, d + dd / 2), cam, MARKER)
        fd_y = pixel_to_xy(PixelObservation(1, u + du / 2, 0, d), MARKER)[1] - pixel_to_xy(PixelObservation(1, u - du / 2, 0, d), MARKER)[1]
        worst = max(worst, abs(delta_z(o, z, dd) / fd_z - 1), abs(delta_y(o, y, du) / fd_y - 1))
    factors = []
    for d in (5.0, 31.0, 40.0, 123.4):
        a = delta_z(PixelObservation(1, 0, 0, d), pixel_to_z(PixelObservation(1, 0, 0, d), cam, MARKER), 1.0)
        b = delta_z(PixelObservation(1, 0, 0, 2 * d), pixel_to_z(PixelObservation(1, 0, 0, 2 * d), cam, MARKER), 1.0)
        factors.append(a / b)
    quartic = max(abs(f - 4) for f in factors)
    assert verdict(2, worst <= 0.01 and quartic <= 1e-9, f"max relative deviation {worst:.2e}, quartic {quartic:.1e}")


def _hand_examples():
    w = 299
    q = torch.tensor([[1.0, 0, 0, 0]], dtype=torch.float64)

    def pred(u, v, d):
        logit = torch.tensor([50.0], dtype=torch.float64)
        t = lambda a: torch.tensor([a], dtype=torch.float64)  # noqa: E731
        return Prediction(torch.sigmoid(logit), logit, t(u), t(v), t(d), q)

    truth = Targets(*(torch.tensor([a], dtype=torch.float64) for a in (1.0, 0.0, 0.0, 40 / w)), q)
    base = compute_loss(pred(3 / w, 4 / w, 40 / w), truth, LossConfig()).item()
    truth_up = Targets(*(torch.tensor([a], dtype=torch.float64) for a in (1.0, 0.0, 0.0, 10 / w)), q)
    up = compute_loss(pred(3 / w, 4 / w, 10 / w), truth_up, LossConfig(variant="up")).item()
    return base, up


def _fd_gradient_error(variant, rng):
    net = TinyNet().double()
    x = torch.from_numpy(rng.random((4, 1, 12, 12)))
    m = np.array([1.0, 1.0, 0.0, 1.0])
    q = rng.normal(size=(4, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q[q[:, 0] < 0] *= -1
    truth = Targets.from_arrays(m, rng.uniform(-0.4, 0.4, 4), rng.uniform(-0.4, 0.4, 4), m * rng.uniform(0.1, 0.9, 4), q, dtype=torch.float64)
    cfg = LossConfig(variant=variant)
    params = list(net.parameters())
    analytic = torch.cat([g.reshape(-1) for g in torch.autograd.grad(compute_loss(net(x), truth, cfg), params)])
    numeric = []
    h = 1e-6
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                lp = compute_loss(net(x), truth, cfg).item()
                flat[i] = old - h
                lm = compute_loss(net(x), truth, cfg).item()
                flat[i] = old
                numeric.append((lp - lm) / (2 * h))
    numeric = torch.tensor(numeric, dtype=torch.float64)
    return ((analytic - numeric).norm() / numeric.norm()).item()


@pytest.mark.criterion(3, "loss gradients match finite differences within 1e-4; eps=0 zeroes regression gradients; 50 and 5 examples")
def test_criterion_3_losses():
    torch.manual_seed(3)
    rng = np.random.default_rng(3)
    grad_err = max(_fd_gradient_error(v, rng) for v in ("base", "up") for _ in range(10))

    net = TinyNet().double()
    pred = net(torch.rand(6, 1, 12, 12, dtype=torch.float64))
    neg = Targets.from_arrays(np.zeros(6), np.zeros(6), np.zeros(6), np.zeros(6), np.tile([1.0, 0, 0, 0], (6, 1)), dtype=torch.float64)
    zero = True
    for variant in ("base", "up"):
        heads = [pred.u_hat, pred.v_hat, pred.d_hat, pred.q_hat]
        grads = torch.autograd.grad(compute_loss(pred, neg, LossConfig(variant=variant)), heads, retain_graph=True)
        zero = zero and all(torch.count_nonzero(g) == 0 for g in grads)

    base, up = _hand_examples()
    ok = grad_err <= 1e-4 and zero and abs(base - 50) <= 1e-9 and abs(up - 5) <= 1e-9
    assert verdict(3, ok, f"gradient error {grad_err:.1e}, eps=0 exact {zero}, base {base:.12f}, up {up:.12f}")


@pytest.mark.criterion(4, "NoisyCutout masked fraction, white split, identity path, binary output")
def test_criterion_4_noisycutout(small_dataset):
    images = small_dataset.load_pixels([r for r in small_dataset.records if r.m == 1][:20])
    rng = np.random.default_rng(4)
    cfg = NoisyCutoutConfig()
    windows = masked = white = 0
    binary = True
    while windows < 10_000:
        for img in images:
            out, tr = noisy_cutout_pixels(img, cfg, rng)
            windows += tr.n_windows
            masked += tr.n_masked
            white += tr.n_white
            binary = binary and set(np.unique(out)) <= {0, 1}
    frac = masked / windows
    split_dev = abs(white - masked / 2) / math.sqrt(masked / 4)
    ident = NoisyCutoutConfig(mask_probability=0.0, blur_kernels=((1, 1),))
    identity = all(np.array_equal(noisy_cutout_pixels(img, ident, rng)[0], img) for img in images)
    ok = 0.045 <= frac <= 0.055 and split_dev <= 3 and identity and binary
    assert verdict(4, ok, f"{windows} windows, masked {frac:.4f}, white split {split_dev:.2f} sigma, identity {identity}")


@pytest.mark.slow
@pytest.mark.criterion(5, "overfit 64 images below 0.01 in 500 epochs; full training >= 99% accuracy and <= 2 px")
def test_criterion_5a_overfit(default_dataset):
    start = time.perf_counter()
    res = overfit(default_dataset, cfg=OVERFIT_CFG, target=0.01)
    elapsed = time.perf_counter() - start
    final = res.history[-1]
    ok = final.train_loss < 0.01
    assert verdict(5, ok, f"overfit: loss {final.train_loss:.4f} after {final.epoch} epochs, {elapsed / 60:.1f} min")


@pytest.mark.criterion(5, "overfit 64 images below 0.01 in 500 epochs; full training >= 99% accuracy and <= 2 px")
def test_criterion_5b_full_training(default_dataset, artifacts):
    det = Detector.load(checkpoint(artifacts, "base", "noisycutout", 0))
    val = default_dataset.split("val")
    stats = evaluate(det.model, default_dataset.load_pixels(val), targets_from_records(val), LossConfig())
    ok = len(val) == 1400 and stats["acc"] >= 0.99 and stats["pixel_mae"] <= 2.0
    assert verdict(5, ok, f"full training: accuracy {stats['acc']:.4f}, pixel error {stats['pixel_mae']:.3f} px on {len(val)} images")


@pytest.fixture(scope="module")
def study(artifacts):
    ckpts = {method_tag(v, a): [checkpoint(artifacts, v, a, s) for s in SEEDS] for v, a in METHODS}
    return flight_study(ckpts, square_flights(0), corrupt=True, tau_by_method=TAU_BY_METHOD)


@pytest.mark.slow
@pytest.mark.criterion(6, "median z-RMSE ordering on corrupted flights over 3 seeds")
def test_criterion_6_ordering(study):
    med = {tag: m["median_overall"]["z"] for tag, m in study["methods"].items()}
    sp, nc, up = med["MbULNet_0(SPCutout)"], med["MbULNet_0(NoisyCutout)"], med["MbULNet_UP(NoisyCutout)"]
    ok_a, ok_b = nc < sp, up <= nc
    detail = f"median z-RMSE SPCutout {sp:.3f} m, NoisyCutout {nc:.3f} m, UP {up:.3f} m; (a) {ok_a} (b) {ok_b}"
    assert verdict(6, ok_a and ok_b, detail)


@pytest.mark.slow
@pytest.mark.criterion(7, "flight acquisition within one search cycle; RMSE <= 3x static error; 3D^2 = 2D^2 + z^2")
def test_criterion_7_integration(artifacts):
    spec = square_flights(0)[0]
    tag = method_tag("up", "noisycutout")
    det = Detector.load(checkpoint(artifacts, "up", "noisycutout", 0))
    tau = TAU_BY_METHOD[tag]
    tracker = make_tracker(det, spec, tau, roi_seed=None)
    run = fly({"up": tracker}, spec)["up"]
    assert run.report is not None, "tracker never locked on"
    acquired = run.first_lock_frame - spec.background_frames < len(tracker.positions)
    static = static_error(det, spec, threshold=ThresholdConfig(tau))
    rep = run.report
    ratio = rep.rmse_3d_m / static.rmse_3d_m
    identity = abs(rep.rmse_3d_m**2 - (rep.rmse_2d_m**2 + rep.rmse_z_m**2)) <= 1e-9 * rep.rmse_3d_m**2
    ok = acquired and ratio <= 3 and identity
    detail = (
        f"locked after {run.first_lock_frame - spec.background_frames} frames ({len(tracker.positions)} windows), "
        f"RMSE 3D {rep.rmse_3d_m:.3f} m vs static {static.rmse_3d_m:.3f} m (x{ratio:.2f}), identity {identity}"
    )
    assert verdict(7, ok, detail)


@pytest.mark.criterion(8, "Butterworth: unit DC gain, settles within 2 s, > 10 dB down at 5 Hz")
def test_criterion_8_butterworth():
    fs = 12.5
    b, a = butterworth(fs, 1.0)
    dc = abs(np.sum(b) / np.sum(a))
    _, h5 = signal.freqz(b, a, worN=[5.0], fs=fs)
    att = -20 * math.log10(abs(h5[0]))
    out = smooth_series(np.r_[np.zeros(5), np.ones(60)], fs)
    settle = next(i for i in range(len(out)) if np.all(np.abs(out[i:] - 1) <= 0.02)) - 5
    settle_s = settle / fs
    constant = np.allclose(smooth_series(np.full(50, 3.0), fs), 3.0, atol=1e-12)
    ok = abs(dc - 1) <= 1e-12 and constant and settle_s <= 2.0 and att > 10
    assert verdict(8, ok, f"DC gain {dc:.12f}, 2% settling {settle_s:.2f} s, 5 Hz attenuation {att:.1f} dB")
