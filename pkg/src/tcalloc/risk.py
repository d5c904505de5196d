"""Law-invariant, positively homogeneous risk measures on terminal gains.

A risk measure enters only through its value on the standardized driver,
``rho_base = rho(L_1)``, and an invariance tag.  On a gain ``a + b L_1``:

    rho = -a * [cash-invariant] + rho_base * b.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import DomainError
from .market import MarketModel, Strategy, gain_moments
from .stable import StableLaw, lower_tail_mean_quantile, quantile

__all__ = ["RiskSpec", "rho_base", "rho_closed", "rho_from_moments"]

_KINDS = ("var", "avar", "sd", "custom")


@dataclass(frozen=True)
class RiskSpec:
    """``kind`` in {var, avar, sd, custom}; ``level`` is the tail probability ``p``."""

    kind: str
    level: float | None = None
    invariance: str | None = None
    base_constant: float | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise DomainError(f"unknown risk kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        default_inv = {"var": "cash", "avar": "cash", "sd": "shift"}.get(kind)
        inv = self.invariance or default_inv
        if inv not in ("cash", "shift"):
            raise DomainError("invariance must be 'cash' or 'shift'")
        if default_inv is not None and inv != default_inv:
            raise DomainError(f"{kind} is {default_inv}-invariant")
        object.__setattr__(self, "invariance", inv)
        if kind in ("var", "avar"):
            if self.level is None or not 0.0 < self.level < 1.0:
                raise DomainError("VaR/AVaR level must lie in (0, 1)")
        if kind == "custom" and self.base_constant is None:
            raise DomainError("custom risk needs a base constant")

    @classmethod
    def var(cls, p: float) -> "RiskSpec":
        return cls("var", level=p)

    @classmethod
    def avar(cls, p: float) -> "RiskSpec":
        return cls("avar", level=p)

    @classmethod
    def sd(cls) -> "RiskSpec":
        return cls("sd")

    @classmethod
    def custom(cls, base_constant: float, invariance: str) -> "RiskSpec":
        return cls("custom", invariance=invariance, base_constant=base_constant)

    @property
    def cash(self) -> bool:
        return self.invariance == "cash"


def rho_base(spec: RiskSpec, law: StableLaw) -> float:
    """The constant ``rho(L_1)`` for the one-dimensional marginal of ``law``.

    VaR uses ``-quantile(p)``, i.e. the essential infimum of capital ``m``
    with ``P(L_1 + m < 0) <= p``; for symmetric laws this is ``quantile(1-p)``.
    AVaR averages VaR levels over ``(0, p]``.
    """
    if spec.kind == "custom":
        val = float(spec.base_constant)
    elif spec.kind == "sd":
        if law.alpha < 2.0:
            raise DomainError("standard deviation is infinite for alpha < 2")
        val = 1.0
    else:
        one_d = law.marginal()
        if spec.kind == "var":
            val = -quantile(one_d, spec.level)
        else:
            val = -lower_tail_mean_quantile(one_d, spec.level)
    if val <= 0:
        warnings.warn(f"non-positive base risk constant {val:g}", RuntimeWarning, stacklevel=2)
    return val


def rho_from_moments(spec: RiskSpec, a: float, b: float, base: float) -> float:
    return (-a if spec.cash else 0.0) + base * b


def rho_closed(spec: RiskSpec, model: MarketModel, strategy: Strategy, t: float) -> float:
    """Closed-form risk of the gain on ``(t, T]`` under a deterministic strategy."""
    gm = gain_moments(model, strategy, t)
    return rho_from_moments(spec, gm.a, gm.b, rho_base(spec, model.law))
