import csv
from pathlib import Path

import pytest

from qfreg import fit, io

DATA = Path(__file__).parent / "data"

# filled by the acceptance tests, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def read_table(name):
    with open(DATA / name, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def lung_data():
    return io.load_lung_params()


@pytest.fixture(scope="session")
def lung_fit(lung_data):
    return fit(lung_data)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
