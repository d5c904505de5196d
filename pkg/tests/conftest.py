"""Shared market set-ups for the test suite."""

import numpy as np
import pytest

from tcalloc import CoefficientCurve, MarketModel, StableLaw, TimeGrid

MU = np.array([0.08, 0.06])
R_RATE = 0.02
LAM = 0.25
T = 10.0


def two_asset(sign: float = 1.0, M: float = 100.0) -> MarketModel:
    sigma = np.array([[0.20, sign * 0.10], [sign * 0.10, 0.15]])
    corr = np.array([[1.0, sign * 0.5], [sign * 0.5, 1.0]])
    return MarketModel(mu=MU, sigma=sigma, r=R_RATE, T=T, law=StableLaw.brownian(2), M=M, R=corr)


def one_asset(mu=0.08, r=R_RATE, sigma=0.2, T_=T, law=None, M=100.0) -> MarketModel:
    law = law or StableLaw.brownian()
    return MarketModel(mu=np.array([mu]), sigma=np.array([[sigma]]), r=r, T=T_, law=law, M=M)


@pytest.fixture
def unit_grid():
    return TimeGrid(N=10, T=T)


@pytest.fixture
def asset1():
    return one_asset()


@pytest.fixture(params=[1.0, -1.0], ids=["pos", "neg"])
def market2(request):
    return two_asset(request.param)


def lam_curve(value=LAM):
    return CoefficientCurve(value)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
