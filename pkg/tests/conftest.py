import numpy as np
import pytest

from cardiorad.phantom import PhantomSpec, generate_dataset
from cardiorad.preprocess import RegionOfInterest


def line_region(values, spacing=(1.0, 1.0, 1.0), structure="LV", phase="ED"):
    """Region whose voxels lie along the x axis with the given intensities."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    mask = np.ones((n, 1, 1), dtype=bool)
    idx = np.argwhere(mask)
    return RegionOfInterest(structure, phase, idx, values, spacing, mask)


@pytest.fixture
def make_region():
    return line_region


@pytest.fixture(scope="session")
def small_phantom(tmp_path_factory):
    """Two subjects per class on a 32^3 grid, written to disk once per session."""
    out = tmp_path_factory.mktemp("phantom")
    manifest = generate_dataset(PhantomSpec(per_class=2), out)
    return out, manifest


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns ``ok`` so tests can assert on it."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_VERDICTS].append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
