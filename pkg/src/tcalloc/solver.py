"""Backward-recursion equilibrium solver, closed-form special cases and residual checks.

The equilibrium control on ``(t_n, t_{n+1}]`` maximizes ``J(t_n, .)`` with the
equilibrium already fixed on all later intervals.  ``J`` is concave in that
control, so any box-constrained stationary point is the step optimum.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError, UnsupportedConfiguration
from .market import GL_NODES, GridQuadrature, MarketModel, Strategy, TimeGrid, m_at, w_at
from .objective import ObjectiveSpec, StepFunctional, target_moments
from .risk import rho_base, rho_from_moments

__all__ = [
    "SolverConfig",
    "EquilibriumResult",
    "solve_equilibrium",
    "mean_variance_closed",
    "mean_variance_continuous",
    "no_penalty_closed",
    "no_penalty_continuous",
    "foc_residual_continuous",
    "StrategyCurve",
    "ContinuousResult",
    "solve_continuous_equilibrium",
    "hjb_residual_discrete",
    "generator_risk_continuous",
    "write_strategy_csv",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


@dataclass(frozen=True)
class SolverConfig:
    foc_tol: float = 1e-10
    max_iter: int = 200
    xtol: float = 1e-14
    start: np.ndarray | None = None  # None: warm start from the later step

    def __post_init__(self):
        if not self.foc_tol > 0:
            raise DomainError("foc_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")


@dataclass
class EquilibriumResult:
    strategy: Strategy
    V: np.ndarray  # V(t_n), n = 0..N
    residuals: np.ndarray  # projected-gradient norm per step
    iterations: np.ndarray
    flags: list[set] = field(default_factory=list)
    a_tail: np.ndarray | None = None
    bpow_tail: np.ndarray | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.strategy.grid

    @property
    def boundary_steps(self) -> list[int]:
        return [n for n, f in enumerate(self.flags) if "boundary" in f]


# ---------------------------------------------------------------------------
# one-step concave maximization on a box
# ---------------------------------------------------------------------------


def _proj_grad(u, g, lo, hi, eps=1e-14):
    pg = g.copy()
    at_lo = (u <= lo + eps) & (g < 0)
    at_hi = (u >= hi - eps) & (g > 0)
    pg[at_lo | at_hi] = 0.0
    return pg, at_lo | at_hi


def _fd_hessian(grad, u, lo, hi):
    d = len(u)
    H = np.empty((d, d))
    for j in range(d):
        h = 1e-6 * max(1.0, abs(u[j]))
        e = np.zeros(d)
        e[j] = h
        up, um = u + e, u - e
        H[:, j] = (grad(up) - grad(um)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _newton_box(f, grad, u0, lo, hi, cfg: SolverConfig):
    """Projected Newton ascent with Armijo backtracking along the projection arc."""
    u = np.clip(np.asarray(u0, dtype=float), lo, hi)
    fu = f(u)
    for it in range(1, cfg.max_iter + 1):
        g = grad(u)
        pg, active = _proj_grad(u, g, lo, hi)
        if np.max(np.abs(pg)) <= 1e-3 * cfg.foc_tol:
            return u, float(np.max(np.abs(pg))), it
        free = ~active
        H = _fd_hessian(grad, u, lo, hi)[np.ix_(free, free)]
        ev, Vec = np.linalg.eigh(H)
        floor = 1e-12 * max(1.0, float(np.max(np.abs(ev))))
        ev = np.minimum(ev, -floor)
        p = np.zeros_like(u)
        p[free] = -Vec @ ((Vec.T @ g[free]) / ev)
        step = 1.0
        un = np.clip(u + p, lo, hi)
        fn = f(un)
        if float(g @ (un - u)) <= 1e-12 * max(1.0, abs(fu)):
            # predicted gain below the resolution of f: take the Newton step as is
            accept = True
        else:
            while fn < fu + 1e-4 * float(g @ (un - u)) and step >= 1e-12:
                step *= 0.5
                un = np.clip(u + step * p, lo, hi)
                fn = f(un)
            accept = fn >= fu - 1e-15 * max(1.0, abs(fu))
        moved = float(np.max(np.abs(un - u)))
        if accept:
            u, fu = un, fn
        if moved <= cfg.xtol * (1.0 + float(np.max(np.abs(u)))):
            pg, _ = _proj_grad(u, grad(u), lo, hi)
            return u, float(np.max(np.abs(pg))), it
    pg, _ = _proj_grad(u, grad(u), lo, hi)
    return u, float(np.max(np.abs(pg))), cfg.max_iter


def _golden_box(f, lo, hi, cfg: SolverConfig):
    res = optimize.minimize_scalar(lambda x: -f(np.array([x])), bounds=(lo[0], hi[0]), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": cfg.max_iter})
    cand = [res.x, lo[0], hi[0]]
    best = max(cand, key=lambda x: f(np.array([x])))
    return np.array([best]), res.nit


def _fd_grad(f, u, lo, hi):
    g = np.empty_like(u)
    for j in range(len(u)):
        h = 1e-7 * max(1.0, abs(u[j]))
        e = np.zeros_like(u)
        e[j] = h
        g[j] = (f(u + e) - f(u - e)) / (2.0 * h)
    return g


def _projected_gradient(f, u0, lo, hi, cfg: SolverConfig):
    u = np.clip(u0, lo, hi)
    fu = f(u)
    step = 1.0
    for it in range(1, 50 * cfg.max_iter + 1):
        g = _fd_grad(f, u, lo, hi)
        pg, _ = _proj_grad(u, g, lo, hi)
        if np.max(np.abs(pg)) <= cfg.foc_tol:
            return u, float(np.max(np.abs(pg))), it
        while step > 1e-16:
            un = np.clip(u + step * g, lo, hi)
            fn = f(un)
            if fn > fu:
                break
            step *= 0.5
        else:
            return u, float(np.max(np.abs(pg))), it
        u, fu = un, fn
        step *= 2.0
    return u, float(np.max(np.abs(pg))), 50 * cfg.max_iter


def _zero_is_optimal(sf: StepFunctional, t, n, a_tail, lo, hi) -> bool:
    """Directional-derivative test for the kink at ``u = 0`` when nothing is invested later.

    With ``b = 0`` on later intervals, ``J(eps v) = J(0) + eps (c A v - k ||v||) + o(eps)``
    where ``||v||`` is the scale of interval ``n`` alone.
    """
    obj = sf.obj
    _, Ea, Eb = target_moments(obj.target, sf.law, a_tail, 0.0)
    rho0 = rho_from_moments(obj.risk, a_tail, 0.0, sf.base)
    lam_dF = obj.penalty.lam_at(t) * obj.penalty.dF(rho0)
    cash = 1.0 if obj.risk.cash else 0.0
    c = Ea + lam_dF * cash
    k = lam_dF * sf.base - Eb
    A = sf.quad.a_grad(n)
    quad = sf.quad
    if quad.Q is not None:
        Q = quad.Q[n]
        if np.all(lo >= 0):  # one-sided box: maximize over the non-negative cone
            dual = _cone_dual(lambda v: math.sqrt(max(v @ Q @ v, 0.0)), A, c)
        else:
            dual = abs(c) * math.sqrt(max(A @ np.linalg.solve(Q, A), 0.0))
    else:
        norm = lambda v: max(quad.bpow_part(n, v), 0.0) ** (1.0 / quad.alpha)
        dual = _cone_dual(norm, A, c, nonneg=bool(np.all(lo >= 0)))
    return dual <= k * (1.0 + 1e-12) + 1e-300


def _cone_dual(norm, A, c, nonneg=True):
    """``max c A.v`` over ``norm(v) <= 1`` (``v >= 0`` when ``nonneg``)."""
    d = len(A)
    if d == 1:
        cands = [1.0] if nonneg else [1.0, -1.0]
        return max(c * A[0] * s / norm(np.array([s])) for s in cands)
    best = -np.inf
    angles = np.linspace(0.0, 0.5 * math.pi if nonneg else 2.0 * math.pi, 721)
    for th in angles:
        v = np.zeros(d)
        v[0], v[1] = math.cos(th), math.sin(th)
        nv = norm(v)
        if nv > 0:
            best = max(best, c * float(A @ v) / nv)

    def neg(x):
        nv = norm(x)
        return 0.0 if nv == 0 else -c * float(A @ x) / nv

    rng = np.random.default_rng(0)
    for _ in range(3):
        x0 = rng.standard_normal(d)
        res = optimize.minimize(neg, np.abs(x0) if nonneg else x0,
                                bounds=[(0, None)] * d if nonneg else None, method="L-BFGS-B")
        best = max(best, -res.fun)
    return best


def _solve_step(sf: StepFunctional, t, n, a_tail, bp_tail, lo, hi, u0, cfg: SolverConfig, gradient_ok: bool):
    f = lambda u: sf.value(t, n, u, a_tail, bp_tail)
    flags = set()
    d = len(lo)
    zero = np.zeros(d)
    if np.all(hi <= 0) and np.all(lo >= 0):
        return zero, 0.0, 0, {"degenerate-box"}
    if not gradient_ok:
        if d == 1:
            u, it = _golden_box(f, lo, hi, cfg)
            res = 0.0
            flags.add("golden-section")
        else:
            u, res, it = _projected_gradient(f, u0, lo, hi, cfg)
            flags.add("projected-gradient")
    else:
        if bp_tail <= 0.0 and _zero_is_optimal(sf, t, n, a_tail, lo, hi):
            return zero, 0.0, 0, {"kink-zero"}
        grad = lambda u: sf.gradient(t, n, u, a_tail, bp_tail)
        start = np.clip(u0, lo, hi)
        if bp_tail <= 0.0 and np.max(np.abs(start)) < 1e-8:
            # move off the kink in the ascent direction of the drift
            A = sf.quad.a_grad(n)
            start = np.clip(1e-3 * (hi - lo) * np.sign(A + (A == 0)), lo, hi)
        u, res, it = _newton_box(f, grad, start, lo, hi, cfg)
    fu, f0 = f(u), f(zero)
    if np.all(zero >= lo) and np.all(zero <= hi) and f0 >= fu - 1e-15 * max(1.0, abs(fu)) and np.any(u != 0):
        if f0 >= fu or np.max(np.abs(u)) < 1e-9:
            u = zero
            res = 0.0
            flags.add("tie-zero")
    if np.any(u <= lo + 1e-14) and np.any(lo < 0) or np.any(u >= hi - 1e-14):
        flags.add("boundary")
    return u, res, it, flags


def solve_equilibrium(model: MarketModel, objective: ObjectiveSpec, grid: TimeGrid,
                      config: SolverConfig | None = None, *, tail: Strategy | None = None,
                      start_index: int = 0) -> EquilibriumResult:
    """Nash-subgame equilibrium by backward induction over ``grid``.

    ``tail`` with ``start_index = m`` fixes nothing but lets callers re-solve the
    truncated problem ``[t_m, T]``; rows before ``m`` are then left as in ``tail``.
    """
    cfg = config or SolverConfig()
    if abs(grid.T - model.T) > 1e-12:
        raise DomainError("grid horizon differs from the model horizon")
    quad = GridQuadrature(model, grid)
    sf = StepFunctional(quad, objective)
    gradient_ok = objective.has_gradient()
    d, N = model.d, grid.N
    lo = np.full(d, model.lower_bound())
    hi = np.full(d, model.M)
    values = np.zeros((N, d)) if tail is None else np.array(tail.values)
    V = np.empty(N + 1)
    pen = objective.penalty
    V[N] = float(objective.target(0.0)) - pen.lam_at(grid.T) * pen.F(0.0)
    a_tail = np.zeros(N + 1)
    bp_tail = np.zeros(N + 1)
    residuals = np.zeros(N)
    iters = np.zeros(N, dtype=int)
    flags: list[set] = [set() for _ in range(N)]
    prev = np.zeros(d) if cfg.start is None else np.asarray(cfg.start, float)
    for n in range(N - 1, start_index - 1, -1):
        t = grid.t(n)
        u0 = prev if cfg.start is None else np.asarray(cfg.start, float)
        u, res, it, fl = _solve_step(sf, t, n, a_tail[n + 1], bp_tail[n + 1], lo, hi, u0, cfg, gradient_ok)
        if gradient_ok and res > cfg.foc_tol:
            # gradients carry round-off proportional to the size of the control
            if it >= cfg.max_iter or res > cfg.foc_tol * max(1.0, float(np.max(np.abs(u)))):
                raise ConvergenceError(
                    f"step {n}: projected gradient {res:.3e} above tolerance {cfg.foc_tol:g}")
            fl.add("roundoff-limited")
        values[n] = u
        residuals[n] = res
        iters[n] = it
        flags[n] = fl
        a_tail[n] = a_tail[n + 1] + quad.a_part(n, u)
        bp_tail[n] = bp_tail[n + 1] + quad.bpow_part(n, u)
        V[n] = sf.J_ab(t, a_tail[n], max(bp_tail[n], 0.0) ** (1.0 / quad.alpha))
        prev = u
    if start_index > 0:
        V[:start_index] = np.nan
    return EquilibriumResult(Strategy(grid, values), V, residuals, iters, flags, a_tail, bp_tail)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def mean_variance_closed(mu: float, r: float, sigma: float, lam: float, grid: TimeGrid) -> Strategy:
    """Discrete mean-variance equilibrium for one asset with constant coefficients."""
    T = grid.T
    t = grid.points
    vals = (mu - r) / (lam * sigma ** 2) / (np.exp(r * (T - t[:-1])) + np.exp(r * (T - t[1:])))
    return Strategy(grid, vals[:, None])


def mean_variance_continuous(mu: float, r: float, sigma: float, lam: float, t, T: float):
    return (mu - r) / (2.0 * lam * sigma ** 2) * np.exp(-r * (T - np.asarray(t, dtype=float)))


def no_penalty_closed(model: MarketModel, gamma: float, grid: TimeGrid) -> Strategy:
    """Exponential target without risk penalty: ``gamma Q_n u = A_n`` on every interval."""
    if model.alpha != 2.0:
        raise UnsupportedConfiguration("the zero-penalty closed form needs alpha = 2")
    quad = GridQuadrature(model, grid)
    vals = np.empty((grid.N, model.d))
    for n in range(grid.N):
        try:
            vals[n] = np.linalg.solve(gamma * quad.Q[n], quad.A[n])
        except np.linalg.LinAlgError as exc:
            raise DomainError(f"singular system on interval {n}") from exc
    return Strategy(grid, vals)


def no_penalty_continuous(model: MarketModel, gamma: float, t: float) -> np.ndarray:
    if model.alpha != 2.0:
        raise UnsupportedConfiguration("the zero-penalty closed form needs alpha = 2")
    S = model.sigma_at(t)
    H = S @ model.R_at(t) @ S.T
    return np.linalg.solve(gamma * H, model.mu_at(t) - model.r) * math.exp(-model.r * (model.T - t))


# ---------------------------------------------------------------------------
# residual checks
# ---------------------------------------------------------------------------


def _curve(strategy) -> Callable[[float], np.ndarray]:
    if isinstance(strategy, Strategy):
        return strategy
    return lambda s: np.atleast_1d(np.asarray(strategy(s), dtype=float))


def _densities(model: MarketModel, S: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cash drift density ``m`` and ``w**alpha`` at times ``S`` for controls ``U`` (rows)."""
    disc = model.discount(S)
    m = np.einsum("ka,ka->k", U, model.mu_at(S) - model.r) * disc
    X = np.einsum("ka,kab->kb", U, model.sigma_at(S)) * disc[:, None]
    if model.regime == "alpha2":
        wp = np.einsum("ka,kab,kb->k", X, model.R_at(S), X)
    else:
        V, w = model.atoms()
        wp = np.abs(X @ V.T) ** model.alpha @ w
    return m, np.maximum(wp, 0.0)


def _panel(x0, x1):
    half = 0.5 * (x1 - x0)
    return x0 + half * (_GL_X + 1.0), half * _GL_W


_QUAD_CACHE: dict = {}


def _quad_cache(model: MarketModel, grid: TimeGrid) -> GridQuadrature:
    key = (id(model), grid)
    hit = _QUAD_CACHE.get(key)
    if hit is None or hit.model is not model:
        if len(_QUAD_CACHE) > 8:
            _QUAD_CACHE.clear()
        hit = _QUAD_CACHE[key] = GridQuadrature(model, grid)
    return hit


def _tail_integrals(model: MarketModel, u_of, t: float):
    """``a_t`` and ``int_t^T w_s^alpha ds`` of a strategy curve by panel Gauss-Legendre."""
    if isinstance(u_of, StrategyCurve):
        knots = u_of.knots
        edges = np.concatenate([[t], knots[knots > t + 1e-12]])
        if len(edges) < 2:
            return 0.0, 0.0
        half = 0.5 * np.diff(edges)
        S = (edges[:-1, None] + half[:, None] * (_GL_X + 1.0)).ravel()
        W = (half[:, None] * _GL_W).ravel()
        m, wp = _densities(model, S, u_of.at(S))
        return float(W @ m), float(W @ wp)
    if isinstance(u_of, Strategy):
        grid = u_of.grid
        j = min(int(math.floor(t / grid.delta + 1e-9)), grid.N - 1)  # interval containing t
        S, W = _panel(t, grid.t(j + 1))
        m, wp = _densities(model, S, np.tile(u_of.values[j], (GL_NODES, 1)))
        a, bp = float(W @ m), float(W @ wp)
        if j + 1 < grid.N:
            quad = _quad_cache(model, grid)
            vals = u_of.values
            a += float(np.einsum("na,na->", quad.A[j + 1:], vals[j + 1:]))
            if quad.Q is not None:
                bp += float(np.einsum("na,nab,nb->", vals[j + 1:], quad.Q[j + 1:], vals[j + 1:]))
            else:
                bp += sum(quad.bpow_part(n, vals[n]) for n in range(j + 1, grid.N))
        return a, bp
    edges = np.linspace(t, model.T, max(2, int(math.ceil((model.T - t) * 100)) + 1))
    a = bp = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        S, W = _panel(x0, x1)
        U = np.array([np.atleast_1d(u_of(s)) for s in S], dtype=float)
        m, wp = _densities(model, S, U)
        a += float(W @ m)
        bp += float(W @ wp)
    return a, bp


def _foc_vector(model: MarketModel, objective: ObjectiveSpec, t: float, u: np.ndarray,
                a: float, b: float, base: float) -> np.ndarray:
    """Continuous-time first-order condition in every component at time ``t``.

    At ``b = 0`` (only possible at ``t = T`` or for ``u = 0`` afterwards) the
    product ``F'(rho) <u sigma, sigma^k>_R / b`` takes its limit: ``2 rho_base``
    times the inner product for the positive-square penalty, 0 otherwise.
    """
    e = float(model.discount(t))
    S, R = model.sigma_at(t), model.R_at(t)
    drift = (model.mu_at(t) - model.r) * e
    inner = (S * e) @ R @ (S.T @ u * e)  # <u sigma e, sigma^{k.} e>_R for every k
    tg = objective.target
    if tg.kind == "exponential":
        g = tg.gamma
        ex = math.exp(-g * a + 0.5 * g * g * b * b)
        target_part = -ex / tg.beta * (-g * drift + g * g * inner)
    else:
        target_part = drift
    rho = rho_from_moments(objective.risk, a, b, base)
    pen = objective.penalty
    cash = 1.0 if objective.risk.cash else 0.0
    lam = pen.lam_at(t)
    dF = pen.dF(rho)
    if b > 0:
        scale_term = dF * base * inner / b
    elif pen.kind == "positive-square":
        scale_term = 2.0 * max(base, 0.0) * base * inner
    else:
        scale_term = np.zeros_like(inner)
    return target_part - lam * (-cash * dF * drift + scale_term)


def _check_foc_config(model: MarketModel, objective: ObjectiveSpec) -> None:
    if model.alpha != 2.0:
        raise UnsupportedConfiguration("continuous first-order condition needs alpha = 2")
    if objective.target.kind not in ("exponential", "identity"):
        raise UnsupportedConfiguration("continuous first-order condition needs an exponential or identity target")
    if not objective.has_gradient():
        raise UnsupportedConfiguration("continuous first-order condition needs derivative callbacks")


def foc_residual_continuous(model: MarketModel, objective: ObjectiveSpec, strategy, t: float, k: int) -> float:
    """Pointwise first-order condition of the continuous-time equilibrium in component ``k``.

    Evaluated with ``u_t`` from the strategy curve (left-continuous for a
    piecewise-constant :class:`Strategy`) and the tail moments ``a_t``, ``b_t``
    over ``(t, T]``.  Positive values mean that increasing ``u^k`` at ``t``
    would raise the objective.
    """
    _check_foc_config(model, objective)
    u_of = strategy if isinstance(strategy, (Strategy, StrategyCurve)) else _curve(strategy)
    u = np.atleast_1d(np.asarray(u_of(t), dtype=float))
    a, bp = (0.0, 0.0) if t >= model.T else _tail_integrals(model, u_of, t)
    base = rho_base(objective.risk, model.law)
    return float(_foc_vector(model, objective, t, u, a, math.sqrt(max(bp, 0.0)), base)[k])


@dataclass(frozen=True)
class StrategyCurve:
    """Continuous piecewise-linear control curve through ``values[i]`` at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, s: float) -> np.ndarray:
        return np.array([np.interp(s, self.times, self.values[:, j]) for j in range(self.values.shape[1])])

    def at(self, S) -> np.ndarray:
        """Values at many times, shape ``(len(S), d)``."""
        return np.stack([np.interp(S, self.times, self.values[:, j]) for j in range(self.values.shape[1])], axis=1)

    @property
    def knots(self) -> np.ndarray:
        return self.times


@dataclass
class ContinuousResult:
    curve: StrategyCurve
    residuals: np.ndarray  # max-norm of the first-order condition at every node


def solve_continuous_equilibrium(model: MarketModel, objective: ObjectiveSpec, grid: TimeGrid,
                                 tol: float = 1e-13) -> ContinuousResult:
    """Continuous-time equilibrium by backward collocation of the first-order condition.

    Starting at ``t = T``, the control at each node ``t_i`` solves the pointwise
    first-order condition, with the curve linear between ``t_i`` and
    ``t_{i+1}`` and already fixed on ``[t_{i+1}, T]``.  Box constraints are
    not imposed; nodes leaving the box are reported through the residuals of
    the clipped value.
    """
    _check_foc_config(model, objective)
    base = rho_base(objective.risk, model.law)
    N, d = grid.N, model.d
    times = grid.points
    vals = np.zeros((N + 1, d))
    res = np.zeros(N + 1)
    a_cum = 0.0
    bp_cum = 0.0

    def solve_at(i, panel, x0):
        def fun(u):
            a, bp = a_cum, bp_cum
            if panel is not None:
                S, W, lam_lin = panel
                U = np.outer(1.0 - lam_lin, u) + np.outer(lam_lin, vals[i + 1])
                m, wp = _densities(model, S, U)
                a += float(W @ m)
                bp += float(W @ wp)
            return _foc_vector(model, objective, times[i], u, a, math.sqrt(max(bp, 0.0)), base)

        sol = optimize.root(fun, x0, method="hybr", tol=tol)
        u = sol.x
        r = float(np.max(np.abs(fun(u))))
        if r > 1e-10:
            sol = optimize.root(fun, u, method="lm", tol=tol)
            if np.max(np.abs(fun(sol.x))) < r:
                u = sol.x
                r = float(np.max(np.abs(fun(u))))
        return u, r

    start = np.zeros(d)
    if model.M > 0:
        try:
            start = no_penalty_continuous(model, getattr(objective.target, "gamma", 1.0), model.T)
        except (DomainError, UnsupportedConfiguration):
            pass
    vals[N], res[N] = solve_at(N, None, start)
    for i in range(N - 1, -1, -1):
        S, W = _panel(times[i], times[i + 1])
        lam_lin = (S - times[i]) / (times[i + 1] - times[i])
        vals[i], res[i] = solve_at(i, (S, W, lam_lin), vals[i + 1])
        U = np.outer(1.0 - lam_lin, vals[i]) + np.outer(lam_lin, vals[i + 1])
        m, wp = _densities(model, S, U)
        a_cum += float(W @ m)
        bp_cum += float(W @ wp)
    return ContinuousResult(StrategyCurve(times, vals), res)


def hjb_residual_discrete(model: MarketModel, objective: ObjectiveSpec, result: EquilibriumResult,
                          n: int, candidate) -> float:
    """Bracket of the discrete extended HJB equation at step ``n`` for control ``candidate``.

    Assembled from its three pieces: the value-function increment, the
    telescoped expected-target term and the risk-penalty term.  It is zero at
    the equilibrium control and non-positive for every other feasible control.
    """
    grid = result.grid
    N = grid.N
    if not 0 <= n < N:
        raise DomainError(f"step {n} outside 0..{N - 1}")
    quad = GridQuadrature(model, grid)
    sf = StepFunctional(quad, objective)
    al = quad.alpha
    u = np.atleast_1d(np.asarray(candidate, dtype=float))
    pen = objective.penalty
    t_n, t_n1 = grid.t(n), grid.t(n + 1)
    # later intervals follow the equilibrium
    a1, bp1 = result.a_tail[n + 1], result.bpow_tail[n + 1]
    b1 = max(bp1, 0.0) ** (1.0 / al)
    a0 = a1 + quad.a_part(n, u)
    b0 = max(bp1 + quad.bpow_part(n, u), 0.0) ** (1.0 / al)
    E1 = target_moments(objective.target, model.law, a1, b1, grad=False)[0]
    E0 = target_moments(objective.target, model.law, a0, b0, grad=False)[0]
    rho1 = rho_from_moments(objective.risk, a1, b1, sf.base)
    rho0 = rho_from_moments(objective.risk, a0, b0, sf.base)
    lam0, lam1 = pen.lam_at(t_n), pen.lam_at(t_n1)
    value_increment = result.V[n + 1] - result.V[n]
    target_term = E1 - E0
    risk_term = lam1 * (pen.F(rho1) - pen.F(rho0)) - (lam0 - lam1) * pen.F(rho0)
    return float(value_increment - target_term + risk_term)


def generator_risk_continuous(model: MarketModel, objective: ObjectiveSpec, strategy, t: float) -> float:
    """Time derivative of ``lambda_t F(rho_t)`` along the strategy curve.

    ``rho_t = -int_t^T m_s ds + rho_base (int_t^T w_s^alpha ds)^(1/alpha)`` so

        d/dt rho_t = m_t - rho_base (1/alpha) w_t^alpha (int_t^T w_s^alpha ds)^(1/alpha - 1).

    When ``w`` vanishes on ``(t, T]`` the scale term takes its limit 0 and a
    warning is issued.
    """
    if t >= model.T:
        raise DomainError("t must be before T")
    u_of = strategy if isinstance(strategy, Strategy) else _curve(strategy)
    grid = strategy.grid if isinstance(strategy, Strategy) else None
    risk = objective.risk
    pen = objective.penalty
    al = model.alpha
    a, wp = _tail_integrals(model, u_of, t)
    base = rho_base(risk, model.law)
    rho = rho_from_moments(risk, a, max(wp, 0.0) ** (1.0 / al), base)
    u = np.atleast_1d(u_of(t)) if not isinstance(strategy, Strategy) else strategy.values[
        min(int(math.floor(t / grid.delta + 1e-9)), grid.N - 1)]
    m_t = m_at(model, u, t, risk.invariance)
    w_t = w_at(model, u, t)
    if wp > 0:
        scale_rate = base / al * w_t ** al * wp ** (1.0 / al - 1.0)
    else:
        warnings.warn("scale vanishes on (t, T]; using the limit value 0", RuntimeWarning, stacklevel=2)
        scale_rate = 0.0
    return float(pen.dlam_at(t) * pen.F(rho) + pen.lam_at(t) * pen.dF(rho) * (m_t - scale_rate))


def write_strategy_csv(result: EquilibriumResult, path: str | os.PathLike) -> None:
    """``t, u_1..u_d, V, foc_residual``: one row per left grid point ``t_0..t_{N-1}``."""
    grid = result.grid
    d = result.strategy.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"u_{i + 1}" for i in range(d)] + ["V", "foc_residual"])
        for n in range(grid.N):
            row = [grid.t(n)] + list(result.strategy.values[n]) + [result.V[n], result.residuals[n]]
            w.writerow([repr(float(x)) for x in row])
