"""Monte-Carlo validation of the closed-form gain law, risk and objective.

Two independent routes to terminal gains:

* ``exact-law``: ``a + b Z`` with ``Z ~ L_1`` and ``(a, b)`` from the gain decomposition;
* ``euler-path``: Riemann sums of the wealth dynamics on a refined grid, with
  increments of the driver sampled per sub-interval and the integrand taken
  at the right end of each sub-interval.

Paths are generated in fixed-size chunks; chunk ``c`` always uses substream
``c`` of the seed, so results do not depend on the number of workers
(``TC_ALLOC_WORKERS``, default 1).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientSamples
from .market import MarketModel, Strategy, gain_moments
from .objective import ObjectiveSpec
from .risk import RiskSpec
from .stable import rng_stream, sample

__all__ = ["SimResult", "simulate_gains", "empirical_risk", "empirical_J", "write_samples_csv", "CHUNK"]

CHUNK = 1 << 16
N_BOOT = 200
METHODS = ("exact-law", "euler-path")


@dataclass(frozen=True)
class SimResult:
    samples: np.ndarray
    method: str
    seed: int
    n_paths: int

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def mean_se(self) -> float:
        return float(self.samples.std(ddof=1) / math.sqrt(self.n_paths))

    @property
    def sd(self) -> float:
        return float(self.samples.std(ddof=1))


def _workers() -> int:
    raw = os.environ.get("TC_ALLOC_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DomainError(f"TC_ALLOC_WORKERS must be an integer, got {raw!r}") from None


def _chunks(n: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, n - c * CHUNK)) for c in range((n + CHUNK - 1) // CHUNK)]


def _run_chunks(fn, n: int) -> np.ndarray:
    jobs = _chunks(n)
    w = min(_workers(), len(jobs))
    if w <= 1:
        parts = [fn(c, m) for c, m in jobs]
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts)


def _euler_chunk(model: MarketModel, strategy: Strategy, m0: int, refine: int, seed: int, c: int, m: int):
    grid = strategy.grid
    fine = grid.refine(refine)
    h = fine.delta
    rng = rng_stream(seed, c)
    out = np.zeros(m)
    chol = None
    for j in range(m0 * refine + 1, fine.N + 1):
        s = fine.t(j)
        u = strategy.values[(j - 1) // refine]
        if not np.any(u):
            continue
        disc = math.exp(model.r * (model.T - s))
        out += float(u @ (model.mu_at(s) - model.r)) * disc * h
        x = (u @ model.sigma_at(s)) * disc
        if model.regime == "alpha2":
            R = model.R_at(s)
            if model.R.is_constant and chol is None or not model.R.is_constant:
                chol = np.linalg.cholesky(R)
            dL = rng.standard_normal((m, model.d)) @ chol.T * math.sqrt(h)
            out += dL @ x
        elif model.law.d > 1:
            out += sample(model.law, h, m, rng) @ x
        else:
            out += sample(model.law, h, m, rng) * x[0]
    return out


def simulate_gains(model: MarketModel, strategy: Strategy, t: float, n_paths: int, seed: int,
                   method: str = "exact-law", refine: int = 10) -> SimResult:
    """Terminal gains ``X_T - x e^{r(T-t)}`` of ``n_paths`` independent paths."""
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}")
    if n_paths < 2:
        raise DomainError("need at least 2 paths")
    if refine < 1:
        raise DomainError("refinement factor must be at least 1")
    strategy.check(model)
    grid = strategy.grid
    m0 = grid.index_of(t)
    if method == "exact-law":
        gm = gain_moments(model, strategy, t)
        law1 = model.law.marginal() if model.law.kind != "skewed" else model.law

        def draw(c, m):
            if gm.b == 0.0:
                return np.full(m, gm.a)
            return gm.a + gm.b * sample(law1, 1.0, m, seed, stream=c)
    else:
        def draw(c, m):
            return _euler_chunk(model, strategy, m0, refine, seed, c, m)
    return SimResult(_run_chunks(draw, n_paths), method, seed, n_paths)


# ---------------------------------------------------------------------------


def _risk_point(x: np.ndarray, spec: RiskSpec) -> float:
    if spec.kind == "var":
        return -float(np.quantile(x, spec.level))
    if spec.kind == "avar":
        k = max(1, int(math.ceil(spec.level * len(x))))
        return -float(np.partition(x, k - 1)[:k].mean())
    if spec.kind == "sd":
        return float(x.std(ddof=1))
    raise DomainError("a custom risk measure has no empirical estimator")


def _check_n(n: int, spec: RiskSpec) -> None:
    if spec.kind in ("var", "avar") and n < 10.0 / spec.level:
        raise InsufficientSamples(f"{spec.kind} at level {spec.level} needs at least {10.0 / spec.level:g} samples")
    if n < 2:
        raise InsufficientSamples("need at least 2 samples")


def _bootstrap(x: np.ndarray, stat, seed: int, n_boot: int = N_BOOT) -> float:
    rng = np.random.default_rng(seed)
    n = len(x)
    vals = np.empty(n_boot)
    for i in range(n_boot):
        vals[i] = stat(x[rng.integers(0, n, n)])
    return float(vals.std(ddof=1))


def _tail_bootstrap(x: np.ndarray, spec: RiskSpec, seed: int, n_boot: int = N_BOOT) -> float:
    """Bootstrap error of VaR/AVaR using only the lower tail of the sorted sample.

    In a resample of size ``n`` the number of draws that land in the ``K``
    smallest observations is Binomial(n, K/n) and those draws are uniform on
    them, so the resampled lower order statistics can be generated exactly
    without touching the rest of the sample.
    """
    n = len(x)
    p = spec.level
    need = int(math.ceil(p * n)) + 2
    K = min(n, need + int(10 * math.sqrt(need)) + 10)
    tail = np.sort(np.partition(x, K - 1)[:K]) if K < n else np.sort(x)
    rng = np.random.default_rng(seed)
    vals = np.empty(n_boot)
    for i in range(n_boot):
        c = rng.binomial(n, K / n) if K < n else n
        if c < need:
            vals[i] = _risk_point(x[rng.integers(0, n, n)], spec)
            continue
        ys = np.sort(tail[rng.integers(0, K, c)])
        if spec.kind == "var":
            h = p * (n - 1)
            j = int(math.floor(h))
            vals[i] = -(ys[j] + (h - j) * (ys[j + 1] - ys[j]))
        else:
            k = max(1, int(math.ceil(p * n)))
            vals[i] = -float(ys[:k].mean())
    return float(vals.std(ddof=1))


def empirical_risk(samples, spec: RiskSpec, seed: int = 0) -> tuple[float, float]:
    """Risk of the empirical gain distribution and its standard error.

    VaR and AVaR standard errors come from a 200-resample bootstrap; the
    standard deviation uses the delta-method error ``sqrt((m4 - s^4) / (4 n s^2))``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    _check_n(len(x), spec)
    est = _risk_point(x, spec)
    if spec.kind == "sd":
        s2 = x.var(ddof=1)
        if s2 == 0.0:
            return 0.0, 0.0
        m4 = float(np.mean((x - x.mean()) ** 4))
        return est, math.sqrt(max(m4 - s2 * s2, 0.0) / (4.0 * len(x) * s2))
    if np.all(x == x[0]):
        return est, 0.0
    return est, _tail_bootstrap(x, spec, seed)


def empirical_J(samples, objective: ObjectiveSpec, t: float, seed: int = 0) -> tuple[float, float]:
    """``mean T(gain) - lambda(t) F(empirical risk)`` with a bootstrap standard error."""
    x = np.asarray(samples, dtype=float).ravel()
    _check_n(len(x), objective.risk)
    lam = objective.penalty.lam_at(t)
    F = objective.penalty.F
    tg = objective.target

    def stat(y):
        return float(np.mean(tg(y))) - lam * F(_risk_point(y, objective.risk))

    est = stat(x)
    if np.all(x == x[0]):
        return est, 0.0
    return est, _bootstrap(x, stat, seed)


def write_samples_csv(result: SimResult, path) -> None:
    """One gain per line, no header."""
    np.savetxt(path, result.samples, fmt="%.17g")
