from pathlib import Path

import numpy as np
import pytest

from gridstorm.windfield import BBox, WindFieldSeries

DATA = Path(__file__).parent / "data"

# criterion label -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def data_dir():
    return DATA


def constant_series(sustained_ms, times, bbox=BBox(17.0, 19.0, -68.0, -65.0), cell=0.5, gust_factor=1.49):
    """Wind series with one uniform sustained value per time step."""
    times = np.asarray(times, dtype="datetime64[s]")
    values = np.broadcast_to(np.asarray(sustained_ms, dtype=float), (times.size,))
    nlat = int(round((bbox.north - bbox.south) / cell))
    nlon = int(round((bbox.east - bbox.west) / cell))
    stack = np.repeat(values[:, None, None], nlat, axis=1).repeat(nlon, axis=2)
    return WindFieldSeries(bbox, cell, times, stack, gust_factor)


def hourly(n, start="2022-09-18T00:00:00", step=3600):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step, "s")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        ok, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}")
