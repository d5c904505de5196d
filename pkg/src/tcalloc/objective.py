"""The mean-risk functional ``J = E[T(gain)] - lambda(t) F(rho(gain))`` and its gradient.

Everything is evaluated from the gain decomposition ``gain = a + b L_1``, so
the functional never depends on current wealth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as spi

from .errors import DomainError, UnsupportedConfiguration
from .market import CoefficientCurve, GridQuadrature, MarketModel, Strategy
from .risk import RiskSpec, rho_base, rho_from_moments
from .stable import StableLaw, pdf

__all__ = [
    "TargetSpec",
    "PenaltySpec",
    "ObjectiveSpec",
    "StepFunctional",
    "target_moments",
    "expected_target",
    "evaluate_J",
    "grad_J",
]


@dataclass(frozen=True)
class TargetSpec:
    """Reward function: identity, exponential ``(1/beta)(1 - exp(-gamma x))`` or custom."""

    kind: str = "identity"
    beta: float = 1.0
    gamma: float = 1.0
    fn: Callable[[float], float] | None = None
    dfn: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "exponential", "custom"):
            raise DomainError(f"unknown target kind {self.kind!r}")
        if self.kind == "exponential" and not (self.beta > 0 and self.gamma > 0):
            raise DomainError("exponential target needs beta > 0 and gamma > 0")
        if self.kind == "custom" and self.fn is None:
            raise DomainError("custom target needs a value callback")

    @classmethod
    def identity(cls) -> "TargetSpec":
        return cls("identity")

    @classmethod
    def exponential(cls, beta: float = 1.0, gamma: float = 1.0) -> "TargetSpec":
        return cls("exponential", beta=beta, gamma=gamma)

    def __call__(self, x):
        if self.kind == "identity":
            return x
        if self.kind == "exponential":
            return (1.0 - np.exp(-self.gamma * np.asarray(x))) / self.beta
        return self.fn(x)

    def deriv(self, x):
        if self.kind == "identity":
            return np.ones_like(np.asarray(x, dtype=float))
        if self.kind == "exponential":
            return self.gamma / self.beta * np.exp(-self.gamma * np.asarray(x))
        if self.dfn is None:
            raise UnsupportedConfiguration("custom target without a derivative callback")
        return self.dfn(x)


_PENALTY_ALIASES = {
    "zero": "zero", "none": "zero",
    "identity": "identity", "linear": "identity",
    "positive-square": "positive-square", "square": "positive-square",
    "custom": "custom",
}


@dataclass(frozen=True)
class PenaltySpec:
    """Risk penalty ``F`` and the risk-aversion curve ``lambda(t) > 0``."""

    kind: str = "identity"
    lam: CoefficientCurve | float = 0.25
    fn: Callable[[float], float] | None = None
    dfn: Callable[[float], float] | None = None

    def __post_init__(self):
        kind = _PENALTY_ALIASES.get(self.kind)
        if kind is None:
            raise DomainError(f"unknown penalty kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        lam = self.lam if isinstance(self.lam, CoefficientCurve) else CoefficientCurve(float(self.lam))
        if lam.shape != ():
            raise DomainError("lambda must be scalar-valued")
        if np.any(np.asarray(lam.values) <= 0):
            raise DomainError("lambda must be positive")
        object.__setattr__(self, "lam", lam)
        if kind == "custom" and self.fn is None:
            raise DomainError("custom penalty needs a value callback")

    def F(self, x: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "identity":
            return x
        if self.kind == "positive-square":
            return max(x, 0.0) ** 2
        return self.fn(x)

    def dF(self, x: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "identity":
            return 1.0
        if self.kind == "positive-square":
            return 2.0 * max(x, 0.0)
        if self.dfn is None:
            raise UnsupportedConfiguration("custom penalty without a derivative callback")
        return self.dfn(x)

    def lam_at(self, t: float) -> float:
        return float(self.lam(t))

    def dlam_at(self, t: float) -> float:
        return float(self.lam.derivative(t))


@dataclass(frozen=True)
class ObjectiveSpec:
    target: TargetSpec = field(default_factory=TargetSpec)
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    risk: RiskSpec = field(default_factory=RiskSpec.sd)

    def has_gradient(self) -> bool:
        t_ok = self.target.kind != "custom" or self.target.dfn is not None
        p_ok = self.penalty.kind != "custom" or self.penalty.dfn is not None
        return t_ok and p_ok


# ---------------------------------------------------------------------------


def _density_expectation(law: StableLaw, g: Callable[[float], float]) -> float:
    """``E[g(L_1)]`` for a one-dimensional marginal, absolute tolerance about 1e-7."""
    law1 = law.marginal()
    if law1.kind == "brownian":
        # mass beyond |y| = 40 is below 1e-300; skipping it avoids inf * 0 in the integrand
        def f(y):
            dens = math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)
            return 0.0 if dens == 0.0 else g(y) * dens

        pieces = [(-40.0, -8.0), (-8.0, 0.0), (0.0, 8.0), (8.0, 40.0)]
        return sum(spi.quad(f, lo, hi, epsabs=1e-11, epsrel=1e-10, limit=400)[0] for lo, hi in pieces)
    lim = 1e3
    f = lambda y: g(y) * pdf(law1, y)
    pieces = [(-lim, -10.0), (-10.0, 0.0), (0.0, 10.0), (10.0, lim)]
    return sum(spi.quad(f, lo, hi, epsabs=1e-9, epsrel=1e-8, limit=400)[0] for lo, hi in pieces)


def target_moments(target: TargetSpec, law: StableLaw, a: float, b: float, grad: bool = True):
    """``(E[T(a + b L_1)], dE/da, dE/db)``; derivatives are ``None`` when ``grad`` is false."""
    if target.kind == "identity":
        return a, 1.0, 0.0
    if target.kind == "exponential":
        if law.alpha < 2.0:
            raise DomainError("exponential moments do not exist for alpha < 2")
        g = target.gamma
        ex = math.exp(-g * a + 0.5 * g * g * b * b)
        return (1.0 - ex) / target.beta, g / target.beta * ex, -g * g * b / target.beta * ex
    E = _density_expectation(law, lambda y: float(target(a + b * y)))
    if not grad:
        return E, None, None
    Ea = _density_expectation(law, lambda y: float(target.deriv(a + b * y)))
    Eb = _density_expectation(law, lambda y: float(target.deriv(a + b * y)) * y)
    return E, Ea, Eb


def expected_target(model: MarketModel, target: TargetSpec, strategy: Strategy, t: float) -> float:
    grid = strategy.grid
    gm = GridQuadrature(model, grid).moments(strategy, grid.index_of(t))
    return target_moments(target, model.law, gm.a, gm.b, grad=False)[0]


class StepFunctional:
    """``J`` at a fixed time as a function of the control on one interval.

    ``a_tail`` and ``bpow_tail`` are the contributions of all later intervals
    (``b**alpha`` is additive over disjoint intervals).
    """

    def __init__(self, quad: GridQuadrature, objective: ObjectiveSpec, base: float | None = None):
        self.quad = quad
        self.obj = objective
        self.law = quad.model.law
        self.alpha = quad.alpha
        self.base = rho_base(objective.risk, self.law) if base is None else base

    def moments(self, n: int, u, a_tail: float, bpow_tail: float) -> tuple[float, float, float]:
        u = np.asarray(u, dtype=float)
        a = a_tail + self.quad.a_part(n, u)
        bp = max(bpow_tail + self.quad.bpow_part(n, u), 0.0)
        return a, bp, bp ** (1.0 / self.alpha)

    def J_ab(self, t: float, a: float, b: float) -> float:
        E = target_moments(self.obj.target, self.law, a, b, grad=False)[0]
        rho = rho_from_moments(self.obj.risk, a, b, self.base)
        return E - self.obj.penalty.lam_at(t) * self.obj.penalty.F(rho)

    def value(self, t: float, n: int, u, a_tail: float, bpow_tail: float) -> float:
        a, _, b = self.moments(n, u, a_tail, bpow_tail)
        return self.J_ab(t, a, b)

    def gradient(self, t: float, n: int, u, a_tail: float, bpow_tail: float) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        a, bp, b = self.moments(n, u, a_tail, bpow_tail)
        _, Ea, Eb = target_moments(self.obj.target, self.law, a, b)
        pen = self.obj.penalty
        rho = rho_from_moments(self.obj.risk, a, b, self.base)
        lam_dF = pen.lam_at(t) * pen.dF(rho)
        da = self.quad.a_grad(n)
        if b > 0.0:
            db = self.quad.bpow_grad(n, u) * (bp ** (1.0 / self.alpha - 1.0) / self.alpha)
        else:
            db = np.zeros_like(u)
        cash = 1.0 if self.obj.risk.cash else 0.0
        return Ea * da + Eb * db - lam_dF * (-cash * da + self.base * db)


def _setup(model: MarketModel, strategy: Strategy, t: float):
    strategy.check(model)
    grid = strategy.grid
    m = grid.index_of(t)
    if m >= grid.N:
        raise DomainError("t must be a grid point before T")
    return grid, m, GridQuadrature(model, grid)


def evaluate_J(model: MarketModel, objective: ObjectiveSpec, strategy: Strategy, t: float) -> float:
    """``E[T(gain)] - lambda(t) F(rho(gain))`` for the gain on ``(t, T]``."""
    grid, m, quad = _setup(model, strategy, t)
    gm = quad.moments(strategy, m)
    return StepFunctional(quad, objective).J_ab(t, gm.a, gm.b)


def grad_J(model: MarketModel, objective: ObjectiveSpec, strategy: Strategy, t: float,
           n: int, k: int | None = None):
    """Partial derivative of :func:`evaluate_J` in the control on interval ``(t_n, t_{n+1}]``.

    Returns the full gradient vector when ``k`` is ``None``.  At ``b = 0`` the
    risk-scale fraction is assigned its limit value 0.
    """
    if not objective.has_gradient():
        raise UnsupportedConfiguration("analytic gradient needs derivative callbacks")
    grid, m, quad = _setup(model, strategy, t)
    if not m <= n < grid.N:
        raise DomainError(f"interval {n} does not lie in (t, T]")
    u = strategy.values[n]
    a_tail = 0.0
    bp_tail = 0.0
    for j in range(m, grid.N):
        if j != n:
            a_tail += quad.a_part(j, strategy.values[j])
            bp_tail += quad.bpow_part(j, strategy.values[j])
    g = StepFunctional(quad, objective).gradient(t, n, u, a_tail, bp_tail)
    return g if k is None else float(g[k])
