from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def excerpt_path():
    return DATA / "age_excerpt.csv"


@pytest.fixture
def excerpt(excerpt_path):
    from medipool.data import read_dataset
    return read_dataset(excerpt_path)


# One summary line per acceptance criterion, printed after the run.
_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    num = int(report.nodeid.split("test_criterion_")[1][:2])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _ACCEPTANCE[num] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {_ACCEPTANCE[num]}")
