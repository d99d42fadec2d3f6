import re

import numpy as np
import pytest

from rasc.datamodel import GridConfig
from rasc.synthetic import synthetic_frame, synthetic_scan


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def frame():
    return synthetic_frame(3, 64, 64)


@pytest.fixture(scope="session")
def scan():
    return synthetic_scan(5)


@pytest.fixture(scope="session")
def small_grid_cfg():
    return GridConfig(16, 64)



_CRITERIA = pytest.StashKey[dict]()
N_CRITERIA = 9
_FAILED_RUNS = set()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records the verdict of acceptance criterion ``n``."""
    results = request.config.stash[_CRITERIA]

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        results.setdefault(n, []).append((ok, line))
        print(line)
        return ok

    return record


def _criterion_number(nodeid):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_", nodeid)
    return int(m.group(1)) if m else None


def pytest_runtest_logreport(report):
    n = _criterion_number(report.nodeid)
    if n is not None and report.failed:
        _FAILED_RUNS.add(n)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_CRITERIA]
    if not results and not _FAILED_RUNS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        entries = results.get(n)
        if not entries:
            state = "FAIL  (errored before a verdict)" if n in _FAILED_RUNS else "NOT RUN"
            terminalreporter.write_line(f"criterion {n}: {state}")
            continue
        ok = all(e[0] for e in entries) and n not in _FAILED_RUNS
        detail = "; ".join(e[1].split("  ", 1)[1] for e in entries)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
