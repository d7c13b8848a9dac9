import numpy as np
import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)


def interior_points(speed, count, rng, rel_margin=0.1):
    """Random spectra well inside the admissible cone, including mixed signs."""
    out = []
    while len(out) < count:
        lam = rng.uniform(-0.5, 2.0, size=(4 * count, speed.n))
        lam = lam[np.linalg.norm(lam, axis=1) > 0.5]
        keep = speed.cone.contains(lam, rel_margin)
        out.extend(lam[keep])
    return np.array(out[:count])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
