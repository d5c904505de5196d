"""Market specification, time grids, deterministic strategies and the gain decomposition.

For a deterministic strategy ``u`` followed on ``(t, T]`` the discounted-to-T
gain of the wealth process satisfies, in distribution,

    X_T - x e^{r(T-t)} = a_t + b_t * L_1,

with ``a_t = int_t^T u^T (mu_s - r) e^{r(T-s)} ds`` and
``b_t = (int_t^T w_s(u)**alpha ds)**(1/alpha)``.  All integrals are computed
with a fixed 16-node Gauss-Legendre rule on every grid interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .stable import StableLaw

__all__ = [
    "REGIMES",
    "CoefficientCurve",
    "MarketModel",
    "TimeGrid",
    "Strategy",
    "GainMoments",
    "GridQuadrature",
    "integrate",
    "m_at",
    "w_at",
    "gain_moments",
]

REGIMES = ("alpha2", "alpha-lt-2-symmetric", "alpha-lt-2-one-dim")
GL_NODES = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


class CoefficientCurve:
    """A deterministic, continuous, array-valued function on ``[0, T]``.

    Either a constant or piecewise-linear interpolation of samples
    ``values[j]`` taken at increasing ``times[j]`` (with ``times[0] = 0`` and
    ``times[-1] = T``).
    """

    def __init__(self, value=None, *, times=None, values=None):
        if times is None:
            if value is None:
                raise DomainError("CoefficientCurve needs a constant value or samples")
            self.times = None
            self.values = np.asarray(value, dtype=float)
            self.shape = self.values.shape
        else:
            t = np.asarray(times, dtype=float)
            v = np.asarray(values, dtype=float)
            if t.ndim != 1 or len(t) < 2 or v.shape[0] != len(t):
                raise DomainError("piecewise-linear curve needs >= 2 times and matching samples")
            if np.any(np.diff(t) <= 0):
                raise DomainError("sample times must be strictly increasing")
            self.times = t
            self.values = v
            self.shape = v.shape[1:]
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, value) -> "CoefficientCurve":
        return cls(value)

    @classmethod
    def piecewise_linear(cls, times, values) -> "CoefficientCurve":
        return cls(times=times, values=values)

    @property
    def is_constant(self) -> bool:
        return self.times is None

    @property
    def knots(self) -> np.ndarray:
        return np.empty(0) if self.times is None else self.times

    def check_domain(self, T: float) -> None:
        if self.times is not None and (abs(self.times[0]) > 1e-12 or abs(self.times[-1] - T) > 1e-9):
            raise DomainError(f"curve samples must span [0, {T}]")

    def __call__(self, s):
        """Value at time(s) ``s``; an array of times adds a leading axis."""
        if self.times is None:
            if np.ndim(s) == 0:
                return self.values.copy() if self.values.ndim else float(self.values)
            return np.broadcast_to(self.values, np.shape(s) + self.shape).copy()
        s_arr = np.asarray(s, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if np.any(s_arr < lo - 1e-12) or np.any(s_arr > hi + 1e-12):
            raise DomainError(f"time {s} outside curve domain [{lo}, {hi}]")
        flat = self.values.reshape(len(self.times), -1)
        out = np.stack([np.interp(s_arr, self.times, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
        out = out.reshape(s_arr.shape + self.shape)
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        """Right derivative in time (zero for constants)."""
        if self.times is None:
            return np.zeros(self.shape) if self.shape else 0.0
        j = int(np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, len(self.times) - 2))
        slope = (self.values[j + 1] - self.values[j]) / (self.times[j + 1] - self.times[j])
        return float(slope) if np.ndim(slope) == 0 else slope

    def __repr__(self):
        if self.times is None:
            return f"CoefficientCurve({self.values.tolist()!r})"
        return f"CoefficientCurve(times={self.times.tolist()!r}, ...)"


def _as_curve(x) -> CoefficientCurve:
    return x if isinstance(x, CoefficientCurve) else CoefficientCurve(x)


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid ``t_n = n T / N``, ``n = 0..N``."""

    N: int
    T: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError("N must be a positive integer")
        if not self.T > 0:
            raise DomainError("T must be positive")

    @classmethod
    def from_step(cls, T: float, delta: float) -> "TimeGrid":
        N = round(T / delta)
        if abs(N * delta - T) > 1e-9 * max(1.0, T):
            raise DomainError(f"step {delta} does not divide horizon {T}")
        return cls(N=N, T=T)

    @property
    def delta(self) -> float:
        return self.T / self.N

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def t(self, n: int) -> float:
        if not 0 <= n <= self.N:
            raise DomainError(f"grid index {n} outside 0..{self.N}")
        return self.T * n / self.N

    def index_of(self, t: float) -> int:
        n = round(t / self.delta)
        if abs(n * self.delta - t) > 1e-9 * max(1.0, self.T):
            raise DomainError(f"{t} is not a grid point")
        return n

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(N=self.N * int(factor), T=self.T)


@dataclass(frozen=True, eq=False)
class MarketModel:
    """``d`` risky assets driven by an alpha-stable Levy process plus a bank account."""

    mu: CoefficientCurve
    sigma: CoefficientCurve
    r: float
    T: float
    law: StableLaw
    M: float = 10.0
    R: CoefficientCurve | None = None
    regime: str | None = None
    d: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mu", _as_curve(self.mu))
        object.__setattr__(self, "sigma", _as_curve(self.sigma))
        if self.R is not None:
            object.__setattr__(self, "R", _as_curve(self.R))
        mu_shape = self.mu.shape
        d = 1 if mu_shape == () else mu_shape[0]
        if mu_shape not in ((), (d,)):
            raise DomainError("mu must be a scalar or a vector curve")
        object.__setattr__(self, "d", d)
        if self.sigma.shape not in ((), (d, d)) or (self.sigma.shape == () and d != 1):
            raise DomainError(f"sigma must be a {d}x{d} matrix curve")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if self.M < 0:
            raise DomainError("M must be non-negative")
        regime = self.regime
        if regime is None:
            if self.law.alpha == 2.0:
                regime = "alpha2"
            elif self.law.kind == "skewed":
                regime = "alpha-lt-2-one-dim"
            else:
                regime = "alpha-lt-2-symmetric"
            object.__setattr__(self, "regime", regime)
        if regime not in REGIMES:
            raise DomainError(f"unknown regime {regime!r}")
        if (regime == "alpha2") != (self.law.alpha == 2.0):
            raise DomainError(f"regime {regime} does not match alpha={self.law.alpha}")
        if regime == "alpha-lt-2-one-dim" and d != 1:
            raise DomainError("the one-dimensional regime forces d = 1")
        if regime == "alpha-lt-2-symmetric":
            if self.law.kind == "skewed":
                raise DomainError("the symmetric regime needs a symmetric driver")
            if self.law.d != d:
                raise DomainError(f"driver dimension {self.law.d} does not match d={d}")
        if regime == "alpha2":
            if self.R is None:
                object.__setattr__(self, "R", CoefficientCurve(np.eye(d)))
            if self.R.shape not in ((), (d, d)) or (self.R.shape == () and d != 1):
                raise DomainError(f"R must be a {d}x{d} matrix curve")
        for c in (self.mu, self.sigma, self.R):
            if c is not None:
                c.check_domain(self.T)
        self._validate_matrices()

    def check_points(self) -> np.ndarray:
        knots = [c.knots for c in (self.mu, self.sigma, self.R) if c is not None]
        return np.unique(np.concatenate([np.linspace(0.0, self.T, 11)] + knots))

    def _validate_matrices(self) -> None:
        for s in self.check_points():
            S = self.sigma_at(s)
            if not np.allclose(S, S.T, atol=1e-12):
                raise DomainError(f"sigma({s}) is not symmetric")
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise DomainError(f"sigma({s}) is not positive definite") from None
            if self.regime == "alpha2":
                R = self.R_at(s)
                if not np.allclose(R, R.T, atol=1e-12):
                    raise DomainError(f"R({s}) is not symmetric")
                try:
                    np.linalg.cholesky(R)
                except np.linalg.LinAlgError:
                    raise DomainError(f"R({s}) is not positive definite") from None

    def mu_at(self, s) -> np.ndarray:
        return np.reshape(self.mu(s), np.shape(s) + (self.d,))

    def sigma_at(self, s) -> np.ndarray:
        return np.reshape(self.sigma(s), np.shape(s) + (self.d, self.d))

    def R_at(self, s) -> np.ndarray:
        return np.reshape(self.R(s), np.shape(s) + (self.d, self.d))

    @property
    def alpha(self) -> float:
        return self.law.alpha

    def lower_bound(self) -> float:
        return 0.0 if self.regime == "alpha-lt-2-one-dim" else -self.M

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Spectral directions ``(K, d)`` and weights for the symmetric regime.

        One-dimensional symmetric and skewed drivers act through the single
        direction ``+1``: only ``|u sigma|`` matters when ``u >= 0``.
        """
        if self.law.kind == "multivariate":
            return self.law.spectral.V, self.law.spectral.w
        return np.ones((1, 1)), np.ones(1)

    def discount(self, s):
        return np.exp(self.r * (self.T - np.asarray(s, dtype=float)))


@dataclass(frozen=True)
class Strategy:
    """Piecewise-constant control: ``values[n-1]`` applies on ``(t_{n-1}, t_n]``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.N:
            raise DomainError(f"strategy needs {self.grid.N} rows, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: TimeGrid, u) -> "Strategy":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls(grid, np.tile(u, (grid.N, 1)))

    @classmethod
    def zeros(cls, grid: TimeGrid, d: int) -> "Strategy":
        return cls(grid, np.zeros((grid.N, d)))

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __call__(self, s: float) -> np.ndarray:
        """Left-continuous evaluation: the control in force just before ``s``."""
        n = int(math.ceil(s / self.grid.delta - 1e-9))
        return self.values[min(max(n, 1), self.grid.N) - 1]

    def with_value(self, n: int, u) -> "Strategy":
        """Copy with ``values[n] = u`` (interval ``(t_n, t_{n+1}]``)."""
        v = np.array(self.values)
        v[n] = u
        return Strategy(self.grid, v)

    def check(self, model: MarketModel, tol: float = 1e-12) -> None:
        if self.d != model.d:
            raise DomainError(f"strategy dimension {self.d} does not match d={model.d}")
        if np.any(np.abs(self.values) > model.M + tol):
            raise DomainError("strategy leaves the box |u| <= M")
        if model.regime == "alpha-lt-2-one-dim" and np.any(self.values < -tol):
            raise DomainError("short selling is prohibited in the one-dimensional regime")


@dataclass(frozen=True)
class GainMoments:
    """Gain ``a + b L_1`` in distribution; ``a`` is always the cash drift."""

    a: float
    b: float

    def __post_init__(self):
        if self.b < 0:
            raise DomainError("b must be non-negative")


def integrate(f: Callable, lo: float, hi: float, grid: TimeGrid | None = None) -> float:
    """Integral of a vectorized function on ``[lo, hi]``.

    Panels are the grid intervals when a grid is given (16 Gauss-Legendre nodes
    each); otherwise one 16-node panel per unit length.
    """
    if lo > hi:
        raise DomainError("integration bounds reversed")
    if lo == hi:
        return 0.0
    if grid is not None:
        pts = grid.points
        inner = pts[(pts > lo + 1e-12) & (pts < hi - 1e-12)]
        edges = np.concatenate([[lo], inner, [hi]])
    else:
        edges = np.linspace(lo, hi, max(1, int(math.ceil(hi - lo))) + 1)
    total = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        half = 0.5 * (x1 - x0)
        s = x0 + half * (_GL_X + 1.0)
        total += half * float(np.sum(_GL_W * np.asarray(f(s), dtype=float)))
    return total


def m_at(model: MarketModel, u, s: float, invariance: str = "cash") -> float:
    """Drift density of the risk formula: cash ``u^T (mu_s - r) e^{r(T-s)}``, shift 0."""
    if invariance == "shift":
        return 0.0
    if invariance != "cash":
        raise DomainError(f"unknown invariance {invariance!r}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(u @ (model.mu_at(s) - model.r)) * float(model.discount(s))


def w_at(model: MarketModel, u, s: float) -> float:
    """Scale density ``w_s(u)`` of the regime."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    x = (u @ model.sigma_at(s)) * float(model.discount(s))
    if model.regime == "alpha2":
        return float(math.sqrt(max(x @ model.R_at(s) @ x, 0.0)))
    if model.regime == "alpha-lt-2-one-dim":
        return float(x[0])
    V, w = model.atoms()
    al = model.alpha
    return float(np.sum(w * np.abs(V @ x) ** al) ** (1.0 / al))


class GridQuadrature:
    """Per-interval quadrature data for fast ``(a, b)`` evaluation on a grid.

    For interval ``n`` (``(t_n, t_{n+1}]``):

    * ``A[n] = int (mu_s - r) e^{r(T-s)} ds`` so that ``a`` contributions are ``A[n] @ u``;
    * ``alpha = 2``: ``Q[n] = int sigma R sigma^T e^{2r(T-s)} ds`` so that ``b^2`` contributions are ``u Q u``;
    * ``alpha < 2``: ``G[n, j] = sigma(s_j)`` projected on the spectral directions and
      discounted at the Gauss nodes, so ``b^alpha`` contributions are
      ``sum_j omega_j sum_k w_k |G[n, j, k] @ u|^alpha``.
    """

    def __init__(self, model: MarketModel, grid: TimeGrid):
        if abs(grid.T - model.T) > 1e-12:
            raise DomainError("grid horizon differs from the model horizon")
        self.model = model
        self.grid = grid
        self.alpha = model.alpha
        half = 0.5 * grid.delta
        starts = grid.points[:-1]
        nodes = starts[:, None] + half * (_GL_X[None, :] + 1.0)  # (N, 16)
        omega = half * _GL_W  # (16,)
        disc = model.discount(nodes)  # (N, 16)
        mu = model.mu_at(nodes)  # (N, 16, d)
        sig = model.sigma_at(nodes)  # (N, 16, d, d)
        self.A = np.einsum("j,njk,nj->nk", omega, mu - model.r, disc)
        self.omega = omega
        if model.regime == "alpha2":
            R = model.R_at(nodes)
            SRS = np.einsum("njab,njbc,njdc->njad", sig, R, sig)
            self.Q = np.einsum("j,njad,nj->nad", omega, SRS, disc ** 2)
            self.G = None
            self.atom_w = None
        else:
            V, w = model.atoms()
            # x = (u^T sigma) e, projected on v_k:  u^T sigma v_k e
            self.G = np.einsum("njab,kb,nj->njka", sig, V, disc)  # (N, 16, K, d)
            self.atom_w = w
            self.Q = None

    @property
    def N(self) -> int:
        return self.grid.N

    def a_part(self, n: int, u: np.ndarray) -> float:
        return float(self.A[n] @ u)

    def bpow_part(self, n: int, u: np.ndarray) -> float:
        """Contribution of interval ``n`` to ``b**alpha``."""
        if self.Q is not None:
            return float(u @ self.Q[n] @ u)
        proj = np.abs(self.G[n] @ u)  # (16, K)
        return float(self.omega @ (np.abs(proj) ** self.alpha @ self.atom_w))

    def a_grad(self, n: int) -> np.ndarray:
        return self.A[n]

    def bpow_grad(self, n: int, u: np.ndarray) -> np.ndarray:
        """Gradient of :meth:`bpow_part` in ``u``."""
        if self.Q is not None:
            return 2.0 * (self.Q[n] @ u)
        x = self.G[n] @ u  # (16, K)
        coef = self.alpha * np.abs(x) ** (self.alpha - 1.0) * np.sign(x) * self.atom_w  # (16, K)
        return np.einsum("j,jk,jka->a", self.omega, coef, self.G[n])

    def tails(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tail sums ``a_tail[n]`` and ``bpow_tail[n]`` over intervals ``n..N-1``."""
        N = self.N
        a_tail = np.zeros(N + 1)
        b_tail = np.zeros(N + 1)
        for n in range(N - 1, -1, -1):
            a_tail[n] = a_tail[n + 1] + self.a_part(n, values[n])
            b_tail[n] = b_tail[n + 1] + self.bpow_part(n, values[n])
        return a_tail, b_tail

    def moments(self, strategy: Strategy, n: int) -> GainMoments:
        a = 0.0
        bp = 0.0
        for m in range(n, self.N):
            a += self.a_part(m, strategy.values[m])
            bp += self.bpow_part(m, strategy.values[m])
        return GainMoments(a, max(bp, 0.0) ** (1.0 / self.alpha))


def gain_moments(model: MarketModel, strategy: Strategy, t: float) -> GainMoments:
    """``(a_t, b_t)`` of the gain on ``(t, T]`` by per-interval Gauss-Legendre quadrature."""
    grid = strategy.grid
    n = grid.index_of(t)
    if n >= grid.N:
        raise DomainError("t must be a grid point before T")
    strategy.check(model)
    return GridQuadrature(model, grid).moments(strategy, n)
