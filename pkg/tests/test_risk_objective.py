import math

import numpy as np
import pytest
from scipy import stats

from tcalloc import (DomainError, ObjectiveSpec, PenaltySpec, RiskSpec, StableLaw, Strategy, TargetSpec, TimeGrid,
                     UnsupportedConfiguration, evaluate_J, expected_target, grad_J, quantile, rho_base, rho_closed)
from tcalloc.objective import target_moments
from tcalloc.risk import rho_from_moments

from conftest import one_asset, two_asset


def test_rho_base_brownian():
    assert rho_base(RiskSpec.var(0.01), StableLaw.brownian()) == pytest.approx(2.326348, abs=1e-6)
    assert rho_base(RiskSpec.var(0.01), StableLaw.brownian()) == pytest.approx(stats.norm.ppf(0.99), rel=1e-14)
    avar = stats.norm.pdf(stats.norm.ppf(0.025)) / 0.025
    assert rho_base(RiskSpec.avar(0.025), StableLaw.brownian()) == pytest.approx(avar, rel=1e-8)
    assert rho_base(RiskSpec.sd(), StableLaw.brownian()) == 1.0


def test_rho_base_stable():
    sym = StableLaw.symmetric(1.5)
    assert rho_base(RiskSpec.var(0.05), sym) == pytest.approx(quantile(sym, 0.95), rel=1e-9)
    sk = StableLaw.skewed(1.5, p=0.2)
    assert rho_base(RiskSpec.var(0.05), sk) == pytest.approx(-quantile(sk, 0.05), rel=1e-12)
    assert rho_base(RiskSpec.avar(0.05), sym) > rho_base(RiskSpec.var(0.05), sym)
    with pytest.raises(DomainError):
        rho_base(RiskSpec.sd(), sym)


def test_nonpositive_base_warns():
    with pytest.warns(RuntimeWarning):
        rho_base(RiskSpec.var(0.6), StableLaw.brownian())


def test_risk_spec_validation():
    with pytest.raises(DomainError):
        RiskSpec.var(0.0)
    with pytest.raises(DomainError):
        RiskSpec("sd", invariance="cash")
    with pytest.raises(DomainError):
        RiskSpec("other")
    assert RiskSpec.custom(1.3, "shift").cash is False


def test_rho_closed_example():
    model = one_asset(mu=0.06, r=0.0, T_=1.0)
    g = TimeGrid(1, 1.0)
    rho = rho_closed(RiskSpec.var(0.01), model, Strategy.constant(g, 1.0), 0.0)
    assert rho == pytest.approx(-0.06 + 2.326348 * 0.2, abs=1e-6)
    assert rho == pytest.approx(0.405270, abs=1e-6)


def test_rho_axioms():
    model = two_asset(1.0)
    g = TimeGrid(5, 10.0)
    u = Strategy.constant(g, [1.0, -0.4])
    u3 = Strategy.constant(g, [3.0, -1.2])
    for spec in (RiskSpec.var(0.01), RiskSpec.avar(0.05), RiskSpec.sd()):
        # positive homogeneity in the strategy
        assert rho_closed(spec, model, u3, 0.0) == pytest.approx(3 * rho_closed(spec, model, u, 0.0), rel=1e-13)
    # cash-invariance and shift-invariance through the moment formula
    assert rho_from_moments(RiskSpec.var(0.01), 0.5, 0.2, 2.0) == pytest.approx(
        rho_from_moments(RiskSpec.var(0.01), 0.0, 0.2, 2.0) - 0.5)
    assert rho_from_moments(RiskSpec.sd(), 0.5, 0.2, 1.0) == rho_from_moments(RiskSpec.sd(), 0.0, 0.2, 1.0)


def test_target_moments_exponential():
    E, Ea, Eb = target_moments(TargetSpec.exponential(1.0, 1.0), StableLaw.brownian(), 0.06, 0.2)
    assert E == pytest.approx(1 - math.exp(-0.04), rel=1e-14)
    assert round(E, 6) == 0.039211
    h = 1e-6
    f = lambda a, b: target_moments(TargetSpec.exponential(2.0, 1.5), StableLaw.brownian(), a, b)[0]
    _, Ea, Eb = target_moments(TargetSpec.exponential(2.0, 1.5), StableLaw.brownian(), 0.06, 0.2)
    assert Ea == pytest.approx((f(0.06 + h, 0.2) - f(0.06 - h, 0.2)) / (2 * h), rel=1e-8)
    assert Eb == pytest.approx((f(0.06, 0.2 + h) - f(0.06, 0.2 - h)) / (2 * h), rel=1e-8)


def test_custom_target_density_route():
    # numerical expectation reproduces the log-normal closed form
    g = 1.3
    custom = TargetSpec("custom", fn=lambda x: (1 - np.exp(-g * x)), dfn=lambda x: g * np.exp(-g * x))
    closed = target_moments(TargetSpec.exponential(1.0, g), StableLaw.brownian(), 0.1, 0.3)
    num = target_moments(custom, StableLaw.brownian(), 0.1, 0.3)
    np.testing.assert_allclose(num, closed, rtol=1e-7)


def test_custom_target_stable_concave():
    law = StableLaw.symmetric(1.6)
    tg = TargetSpec("custom", fn=lambda x: -np.log1p(np.exp(-x)), dfn=lambda x: 1 / (1 + np.exp(x)))
    E = target_moments(tg, law, 0.0, 0.5, grad=False)[0]
    # Jensen: E f(0.5 L) <= f(0) for concave f and a symmetric law
    assert E < -math.log(2.0)
    with pytest.raises(DomainError):
        target_moments(TargetSpec.exponential(), law, 0.0, 0.5)


def test_evaluate_J_examples():
    model = one_asset(mu=0.06, r=0.0, T_=1.0)
    g = TimeGrid(1, 1.0)
    u = Strategy.constant(g, 1.0)
    mv = ObjectiveSpec(TargetSpec.identity(), PenaltySpec("positive-square", 0.25), RiskSpec.sd())
    assert evaluate_J(model, mv, u, 0.0) == pytest.approx(0.06 - 0.25 * 0.04, abs=1e-15)
    ex = ObjectiveSpec(TargetSpec.exponential(), PenaltySpec("zero", 0.25), RiskSpec.var(0.01))
    assert evaluate_J(model, ex, u, 0.0) == pytest.approx(1 - math.exp(-0.04), rel=1e-13)
    assert expected_target(model, TargetSpec.exponential(), u, 0.0) == pytest.approx(1 - math.exp(-0.04))


def test_penalty_spec():
    assert PenaltySpec("square").kind == "positive-square"
    assert PenaltySpec("none").F(3.0) == 0.0
    p = PenaltySpec("positive-square", 0.5)
    assert p.F(-1.0) == 0.0 and p.F(2.0) == 4.0 and p.dF(2.0) == 4.0
    with pytest.raises(DomainError):
        PenaltySpec("identity", -0.1)
    with pytest.raises(DomainError):
        PenaltySpec("cubic")


def test_grad_J_single_config():
    model = two_asset(-1.0)
    g = TimeGrid(5, 10.0)
    rng = np.random.default_rng(0)
    st_ = Strategy(g, rng.uniform(-2, 3, (5, 2)))
    obj = ObjectiveSpec(TargetSpec.exponential(1.0, 1.0), PenaltySpec("positive-square", 0.25),
                        RiskSpec.var(0.01))
    h = 1e-6
    for n in range(1, 5):
        ana = grad_J(model, obj, st_, 2.0, n)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd = (evaluate_J(model, obj, st_.with_value(n, st_.values[n] + e), 2.0)
                  - evaluate_J(model, obj, st_.with_value(n, st_.values[n] - e), 2.0)) / (2 * h)
            assert ana[k] == pytest.approx(fd, rel=1e-6, abs=1e-10)
    with pytest.raises(DomainError):
        grad_J(model, obj, st_, 4.0, 0)


def test_grad_needs_callbacks():
    model = one_asset()
    g = TimeGrid(2, 10.0)
    obj = ObjectiveSpec(TargetSpec("custom", fn=np.tanh), PenaltySpec("identity"), RiskSpec.var(0.01))
    with pytest.raises(UnsupportedConfiguration):
        grad_J(model, obj, Strategy.constant(g, 1.0), 0.0, 0)
