import pytest

from v2gcosim.grid import PerUnitBase, build_feeder
from v2gcosim.scenario import load_scenario

REF_R, REF_X, REF_L = 0.227, 0.401, 4.63


@pytest.fixture(scope="session")
def base():
    return PerUnitBase(12e6, 6600.0, 50.0)


@pytest.fixture(scope="session")
def feeder(base):
    return build_feeder(REF_L, REF_R, REF_X, base)


@pytest.fixture(scope="session")
def sec5():
    return load_scenario("paper_sec5.scn")


@pytest.fixture(scope="session")
def sec5_80_30():
    return load_scenario("paper_sec5_80_30.scn")


@pytest.fixture(scope="session")
def sec7():
    return load_scenario("paper_sec7.scn")


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """``report(n, title, ok, detail)``: record one acceptance line, then assert ``ok``."""

    def report(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
