import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavloc.errors import ConfigError, DataError, InsufficientDataError, NoOverlapError
from uavloc.evaluation import (
    GroundTruthTrack,
    RmseReport,
    Track,
    compare_methods,
    interpolate_at,
    interpolate_track,
    match_and_rmse,
    nearest_indices,
    plot_flight,
    pooled,
    read_gt,
    relative_reduction,
    write_gt,
    write_report,
)


def square_gt(n=21, rate=5.0, t0=4.0):
    t = t0 + np.arange(n) / rate
    xyz = np.column_stack([np.cos(t), np.sin(t), 12 + 0.1 * t])
    return GroundTruthTrack(t, xyz)


def test_interpolation_midpoint():
    out = interpolate_track(Track([0.0, 1.0], [[0, 0, 0], [0, 0, 1]]))
    assert len(out) == 101
    assert out.xyz[50, 2] == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(span=st.floats(0.05, 30.0), t0=st.floats(-100, 100))
def test_grid_length(span, t0):
    out = interpolate_track(Track([t0, t0 + span], np.zeros((2, 3))))
    assert len(out) == math.floor(span / 0.01 + 1e-9) + 1


def test_uniform_track_preserved():
    t = np.arange(0, 2.0001, 0.04)
    xyz = np.random.default_rng(0).normal(size=(t.size, 3))
    out = interpolate_track(Track(t, xyz))
    assert np.allclose(out.xyz[::4], xyz, atol=1e-12)
    assert np.array_equal(interpolate_at(Track(t, xyz), t), xyz)


def test_interpolation_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        interpolate_track(Track([0.0], [[0, 0, 0]]))


def test_identical_prediction_has_zero_error():
    gt = square_gt()
    rep = match_and_rmse(Track(gt.t, gt.xyz), gt)
    assert (rep.rmse_2d_m, rep.rmse_z_m, rep.rmse_3d_m) == pytest.approx((0, 0, 0), abs=1e-12)
    assert rep.sample_count == len(gt)


def test_constant_z_offset():
    gt = square_gt()
    t = np.arange(gt.t[0], gt.t[-1] + 1e-9, 0.08)
    pred = Track(t, interpolate_at(gt, t) + [0, 0, 0.3])
    # straight-line interpolation of a curve costs a little in x, y
    rep = match_and_rmse(Track(gt.t, gt.xyz + [0, 0, 0.3]), gt)
    assert rep.rmse_z_m == pytest.approx(0.3, abs=1e-12)
    assert rep.rmse_2d_m == pytest.approx(0.0, abs=1e-12)
    assert rep.rmse_3d_m == pytest.approx(0.3, abs=1e-12)
    assert match_and_rmse(pred, gt).rmse_z_m == pytest.approx(0.3, abs=1e-9)


def test_time_offset_alignment():
    gt = square_gt()
    pred = Track(gt.t - 0.5, gt.xyz)
    assert match_and_rmse(pred, gt, time_offset=0.5).rmse_3d_m == pytest.approx(0.0, abs=1e-12)
    assert match_and_rmse(pred, gt).rmse_3d_m > 0.1


def test_no_overlap():
    gt = square_gt()
    with pytest.raises(NoOverlapError):
        match_and_rmse(Track(gt.t + 100, gt.xyz), gt)


def test_ties_go_to_earlier_sample():
    grid = np.array([0.0, 1.0, 2.0])
    assert nearest_indices(grid, np.array([0.5, 1.5, 1.6, -3.0, 9.0])).tolist() == [0, 1, 2, 0, 2]


def test_gt_timestamps_must_increase():
    with pytest.raises(DataError):
        GroundTruthTrack([0.0, 0.0], np.zeros((2, 3)))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 50))
def test_rmse_invariants(seed, n):
    rng = np.random.default_rng(seed)
    res = rng.normal(0, rng.uniform(0.01, 5), size=(n, 3))
    rep = RmseReport.from_residuals(res)
    assert min(rep.rmse_2d_m, rep.rmse_z_m, rep.rmse_3d_m) >= 0
    assert rep.rmse_3d_m**2 == pytest.approx(rep.rmse_2d_m**2 + rep.rmse_z_m**2, rel=1e-9)
    shuffled = RmseReport.from_residuals(res[rng.permutation(n)])
    assert shuffled.rmse_3d_m == pytest.approx(rep.rmse_3d_m, rel=1e-12)


def noisy_reports(seed=0, sizes=(40, 42, 44, 43)):
    rng = np.random.default_rng(seed)
    return {f"flight{k + 1}": RmseReport.from_residuals(rng.normal(0, 0.2 * (k + 1), (n, 3))) for k, n in enumerate(sizes)}


def test_overall_pools_pairs():
    reps = noisy_reports()
    # four flights, 169 ground-truth points
    assert sum(r.sample_count for r in reps.values()) == 169
    table = compare_methods([("A", reps)])
    overall = table.cells[("A", "Overall")]
    allres = np.concatenate([r.residuals for r in reps.values()])
    brute_z = math.sqrt(sum(float(e) ** 2 for e in allres[:, 2]) / len(allres))
    assert overall.rmse_z_m == pytest.approx(brute_z, rel=1e-12)
    assert overall.sample_count == 169
    mean_of_rmse = np.mean([r.rmse_z_m for r in reps.values()])
    assert abs(overall.rmse_z_m - mean_of_rmse) > 1e-3
    assert len(table.row_labels()) == 15


def test_single_method_single_flight_table():
    table = compare_methods([("A", {"f": noisy_reports()["flight1"]})])
    assert [label for label in table.row_labels() if label[0] == "f"] == [("f", "2D"), ("f", "z"), ("f", "3D")]
    assert "| f | z |" in table.to_markdown()


def test_relative_improvement():
    base = RmseReport.from_residuals([[0, 0, 1.0]])
    new = RmseReport.from_residuals([[0, 0, 0.757]])
    red = relative_reduction(base, new)
    assert red["z"] == pytest.approx(0.243) and math.isnan(red["2D"])
    table = compare_methods([("base", {"f": base}), ("up", {"f": new})], improvements=[("base", "up")])
    assert table.improvements["up vs base"]["z"] == pytest.approx(0.243)
    assert "z 24.3%" in table.to_markdown()


def test_mismatched_flights_rejected():
    reps = noisy_reports()
    other = dict(list(reps.items())[:3])
    with pytest.raises(ConfigError):
        compare_methods([("A", reps), ("B", other)])
    with pytest.raises(ConfigError):
        compare_methods([("A", reps)], improvements=[("A", "C")])


def test_pooled_equals_concatenation():
    reps = list(noisy_reports(3).values())
    assert pooled(reps).rmse_2d_m == pytest.approx(RmseReport.from_residuals(np.vstack([r.residuals for r in reps])).rmse_2d_m)


def test_files_and_plots(tmp_path):
    gt = square_gt()
    write_gt(tmp_path / "gt.csv", gt)
    back = read_gt(tmp_path / "gt.csv")
    assert np.array_equal(back.t, np.round(gt.t, 6)) and np.array_equal(back.xyz, gt.xyz)
    write_report(tmp_path / "r.json", match_and_rmse(Track(gt.t, gt.xyz), gt))
    assert '"rmse_z_m": 0.0' in (tmp_path / "r.json").read_text()
    paths = plot_flight(tmp_path / "plots" / "f1", gt, {"A": Track(gt.t, gt.xyz + 0.1)})
    assert all(p.exists() and p.stat().st_size > 0 for p in paths)
