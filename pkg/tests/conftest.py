import os
from pathlib import Path

import numpy as np
import pytest

DATA_DIRS = [os.environ.get("FMLSMR_DATA_DIR"), str(Path(__file__).resolve().parents[1] / "data")]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def find_data(*names):
    """First existing file among ``names`` in the data directories, or None."""
    for d in DATA_DIRS:
        if not d:
            continue
        for name in names:
            p = Path(d) / name
            if p.exists():
                return p
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for rep in _acceptance:
        name = rep.nodeid.split("::")[-1]
        status = {"passed": "PASS", "failed": "FAIL"}.get(rep.outcome, "SKIP")
        terminalreporter.write_line(f"{status} {name}")
