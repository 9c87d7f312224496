import numpy as np
import pytest

from hwnmle.geometry import exp_origin
from hwnmle.model import HwnParams
from hwnmle.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def params2():
    return HwnParams(exp_origin([1.2, -0.7]), np.array([[0.5, 0.2], [0.2, 0.3]]))


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(number, ok, detail):
        _ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
