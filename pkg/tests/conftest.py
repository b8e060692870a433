import numpy as np
import pytest

from nqovi.linear_mg import random_linear_mg, random_tabular_mg

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record a named acceptance line: criterion(name, passed, detail)."""
    def _record(name, passed, detail=""):
        _CRITERIA[name] = (bool(passed), detail)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split()[0])):
        passed, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def small_mg():
    return random_linear_mg(1, 4, 3, (2, 2), 3, 2)


@pytest.fixture
def tab_mg():
    return random_tabular_mg(0, 2, (2, 2), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
