import numpy as np
import pytest

from spect_bayes import angles_from_step, default_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def geom8():
    return default_geometry((8, 8, 8), 1.0, (0.0, 45.0, 90.0))


def slab_chord(origin, direction, lo, hi):
    """Independent per-ray box clip, one axis at a time in pure Python."""
    t0, t1 = 0.0, float("inf")
    for o, d, a, b in zip(origin, direction, lo, hi):
        if d == 0.0:
            if o < a or o > b:
                return 0.0
            continue
        ta, tb = (a - o) / d, (b - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
    return max(t1 - t0, 0.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
