import os
from pathlib import Path

import pytest

from uavloc.synthgen import generate_dataset

ROOT = Path(__file__).resolve().parents[1]
ARTIFACTS = Path(os.environ.get("UAVLOC_ARTIFACTS", ROOT / "artifacts"))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """240 marker images and 60 null images with the default sampler."""
    return generate_dataset(240, 60, out_path=tmp_path_factory.mktemp("ds"), seed=11)


@pytest.fixture(scope="session")
def artifacts() -> Path:
    return ARTIFACTS


_criteria: dict[int, list] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None or (report.when != "call" and report.passed):
        return
    number, summary = marker
    entry = _criteria.setdefault(number, [summary, True])
    entry[1] = entry[1] and report.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        summary, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}")


@pytest.fixture(scope="session")
def default_dataset():
    """The default 6800-image dataset written by ``uavloc generate`` (seed 0)."""
    from uavloc.synthgen import DatasetManifest

    root = ROOT / "data" / "synth"
    assert (root / "manifest.csv").is_file(), f"{root} missing; run 'uavloc generate --seed 0' first"
    return DatasetManifest.load(root)
