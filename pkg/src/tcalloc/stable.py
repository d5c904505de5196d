"""Alpha-stable driver laws: characteristic functions, sampling, CDF and quantiles.

Conventions
-----------
Every law is the distribution of ``L_1`` for a strictly alpha-stable Levy
process ``L`` with ``t**(-1/alpha) * L_t == L_1`` in distribution.

* ``brownian``: ``alpha = 2``, ``L_1 ~ N(0, I_d)``.
* ``symmetric``: one-dimensional, ``E exp(i r L_t) = exp(-t c_alpha |r|**alpha)``.
* ``skewed``: one-dimensional with up-jump probability ``p`` (``q = 1 - p``),
  ``E exp(i r L_t) = exp(-t c_alpha |r|**alpha [1 - i (p - q) tan(pi alpha / 2) sign r])``.
* ``multivariate``: d-dimensional symmetric law with a finite atomic spectral
  measure, ``E exp(i <r, L_t>) = exp(-t c_alpha sum_k w_k |<r, v_k>|**alpha)``.

``c_alpha = c * Gamma(1 - alpha) / alpha * cos(pi alpha / 2)``.

Random streams are counter based: stream ``i`` of seed ``s`` is a Philox
generator keyed by ``s`` whose 256-bit counter starts at ``i * 2**192``, so
streams never overlap and can be handed to workers in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, DomainError

__all__ = [
    "SpectralMeasure",
    "StableLaw",
    "c_alpha",
    "char_fn",
    "sample",
    "cdf",
    "pdf",
    "quantile",
    "rng_stream",
    "tail_quantile",
    "lower_tail_mean_quantile",
    "spectral_norm",
]

_BRACKET_LIMIT = 1e3


def c_alpha(alpha: float, c: float = 1.0) -> float:
    """Scale constant of the Levy measure ``c/w**(alpha+1)`` in the CF exponent."""
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"c_alpha needs alpha in (1, 2), got {alpha}")
    if c <= 0:
        raise DomainError(f"c must be positive, got {c}")
    return c * special.gamma(1.0 - alpha) / alpha * math.cos(math.pi * alpha / 2.0)


@dataclass(frozen=True)
class SpectralMeasure:
    """Finite atomic probability measure on the unit sphere of R^d."""

    directions: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        dirs = np.asarray(self.directions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if dirs.ndim != 2 or dirs.shape[0] != w.shape[0] or w.ndim != 1:
            raise DomainError("directions must be (K, d) and weights (K,)")
        if np.any(w < 0):
            raise DomainError("spectral weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"spectral weights sum to {w.sum()!r}, not 1")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise DomainError("every spectral direction must have unit norm")
        object.__setattr__(self, "directions", tuple(tuple(map(float, v)) for v in dirs))
        object.__setattr__(self, "weights", tuple(map(float, w)))

    @classmethod
    def from_arrays(cls, directions, weights) -> "SpectralMeasure":
        return cls(tuple(map(tuple, np.asarray(directions, float))), tuple(np.asarray(weights, float)))

    @classmethod
    def symmetrized(cls, directions, weights) -> "SpectralMeasure":
        """Atoms ``(v, w/2)`` and ``(-v, w/2)`` for each given ``(v, w)``."""
        dirs = np.asarray(directions, dtype=float)
        w = np.asarray(weights, dtype=float) / 2.0
        return cls.from_arrays(np.vstack([dirs, -dirs]), np.concatenate([w, w]))

    @property
    def dim(self) -> int:
        return len(self.directions[0])

    @property
    def V(self) -> np.ndarray:
        """Directions as a ``(K, d)`` array."""
        return np.asarray(self.directions)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    def is_symmetric(self) -> bool:
        V, w = self.V, self.w
        for v, wt in zip(V, w):
            hit = np.all(np.abs(V + v) <= 1e-12, axis=1) & (np.abs(w - wt) <= 1e-12)
            if not hit.any():
                return False
        return True


@dataclass(frozen=True)
class StableLaw:
    """Distribution of ``L_1``; build instances through the classmethods."""

    alpha: float
    kind: str
    c: float = 1.0
    p: float = 0.5
    spectral: SpectralMeasure | None = None
    d: int = field(default=1)

    def __post_init__(self):
        if self.kind not in ("brownian", "symmetric", "skewed", "multivariate"):
            raise DomainError(f"unknown law kind {self.kind!r}")
        if not 1.0 < self.alpha <= 2.0:
            raise DomainError(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.alpha == 2.0 and self.kind != "brownian":
            raise DomainError("alpha = 2 is Brownian motion; use StableLaw.brownian()")
        if self.kind != "brownian" and self.c <= 0:
            raise DomainError("c must be positive")
        if self.kind == "skewed" and not 0.0 <= self.p <= 1.0:
            raise DomainError("up-jump probability p must lie in [0, 1]")
        if self.kind == "multivariate":
            if self.spectral is None:
                raise DomainError("multivariate law needs a spectral measure")
            if not self.spectral.is_symmetric():
                raise DomainError("only symmetric multivariate laws are supported")
            object.__setattr__(self, "d", self.spectral.dim)
        elif self.kind != "brownian":
            object.__setattr__(self, "d", 1)

    @classmethod
    def brownian(cls, d: int = 1) -> "StableLaw":
        return cls(alpha=2.0, kind="brownian", d=d)

    @classmethod
    def symmetric(cls, alpha: float, c: float = 1.0) -> "StableLaw":
        if alpha == 2.0:
            return cls.brownian()
        return cls(alpha=alpha, kind="symmetric", c=c)

    @classmethod
    def skewed(cls, alpha: float, c: float = 1.0, p: float = 0.5) -> "StableLaw":
        return cls(alpha=alpha, kind="skewed", c=c, p=p)

    @classmethod
    def multivariate(cls, alpha: float, spectral: SpectralMeasure, c: float = 1.0) -> "StableLaw":
        return cls(alpha=alpha, kind="multivariate", c=c, spectral=spectral)

    @property
    def skew(self) -> float:
        """``p - q`` (zero unless the law is skewed)."""
        return 2.0 * self.p - 1.0 if self.kind == "skewed" else 0.0

    @property
    def scale(self) -> float:
        """``c_alpha**(1/alpha)``: the S1 scale of ``L_1`` (1 for Brownian motion)."""
        if self.kind == "brownian":
            return 1.0
        return c_alpha(self.alpha, self.c) ** (1.0 / self.alpha)

    def marginal(self) -> "StableLaw":
        """The one-dimensional symmetric law with the same ``alpha`` and ``c``."""
        if self.kind == "brownian":
            return StableLaw.brownian()
        if self.kind == "multivariate":
            return StableLaw.symmetric(self.alpha, self.c)
        return self


def char_fn(law: StableLaw, t: float, r) -> complex | np.ndarray:
    """Characteristic function of ``L_t`` at frequency ``r``.

    For one-dimensional laws ``r`` may be an array of frequencies; for
    d-dimensional laws the last axis of ``r`` must have length ``d``.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    r = np.asarray(r, dtype=float)
    if law.d > 1:
        if r.ndim == 0 or r.shape[-1] != law.d:
            raise DomainError(f"frequency dimension {r.shape} does not match d={law.d}")
    elif r.ndim >= 1 and law.kind in ("brownian", "multivariate") and r.shape[-1] == 1:
        r = r[..., 0]

    if law.kind == "brownian":
        sq = np.sum(r * r, axis=-1) if law.d > 1 else r * r
        out = np.exp(-0.5 * t * sq)
    elif law.kind == "multivariate":
        proj = np.abs(r @ law.spectral.V.T) ** law.alpha
        out = np.exp(-t * c_alpha(law.alpha, law.c) * (proj @ law.spectral.w))
    else:
        ca = c_alpha(law.alpha, law.c)
        tan = math.tan(math.pi * law.alpha / 2.0)
        expo = -t * ca * np.abs(r) ** law.alpha * (1.0 - 1j * law.skew * tan * np.sign(r))
        out = np.exp(expo)
    return complex(out) if np.ndim(out) == 0 else out


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent counter-based substream ``stream`` of ``seed``."""
    if seed < 0 or stream < 0:
        raise DomainError("seed and stream must be non-negative")
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def _cms_standard(alpha: float, beta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws with CF ``exp(-|r|^a (1 - i beta tan(pi a/2) sign r))``."""
    V = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=n)
    W = rng.standard_exponential(size=n)
    if beta == 0.0:
        return (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
                * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))
    tan = math.tan(math.pi * alpha / 2.0)
    B = math.atan(beta * tan) / alpha
    S = (1.0 + beta * beta * tan * tan) ** (1.0 / (2.0 * alpha))
    return (S * np.sin(alpha * (V + B)) / np.cos(V) ** (1.0 / alpha)
            * (np.cos(V - alpha * (V + B)) / W) ** ((1.0 - alpha) / alpha))


def sample(law: StableLaw, t: float, n: int, seed: int | np.random.Generator, stream: int = 0) -> np.ndarray:
    """``n`` i.i.d. draws of ``L_t``: shape ``(n,)`` for 1-d laws, ``(n, d)`` otherwise.

    ``seed`` may also be a ready ``numpy.random.Generator`` (``stream`` is then ignored).
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if t <= 0:
        raise DomainError("t must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed, stream)
    if law.kind == "brownian":
        shape = (n,) if law.d == 1 else (n, law.d)
        return math.sqrt(t) * rng.standard_normal(size=shape)
    scale = (t * c_alpha(law.alpha, law.c)) ** (1.0 / law.alpha)
    if law.kind == "multivariate":
        V, w = law.spectral.V, law.spectral.w
        out = np.zeros((n, law.d))
        for v, wt in zip(V, w):
            if wt == 0.0:
                continue
            out += np.outer(_cms_standard(law.alpha, 0.0, n, rng), v) * wt ** (1.0 / law.alpha)
        return scale * out
    return scale * _cms_standard(law.alpha, law.skew, n, rng)


# ---------------------------------------------------------------------------
# CDF, density and quantiles by Gil-Pelaez inversion of the standardized CF
# ---------------------------------------------------------------------------

def _require_1d(law: StableLaw) -> None:
    if law.d != 1:
        raise DomainError("distribution functions are only available for 1-d laws")


def _std_cdf(alpha: float, beta: float, x: float) -> float:
    tau = beta * math.tan(math.pi * alpha / 2.0)

    def f(u):
        ua = u ** alpha
        return math.exp(-ua) * math.sin(tau * ua - u * x) / u

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-11, epsrel=1e-10, limit=1000)
    return 0.5 - val / math.pi


def _std_pdf(alpha: float, beta: float, x: float) -> float:
    tau = beta * math.tan(math.pi * alpha / 2.0)

    def f(u):
        ua = u ** alpha
        return math.exp(-ua) * math.cos(tau * ua - u * x)

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-11, epsrel=1e-10, limit=1000)
    return val / math.pi


def cdf(law: StableLaw, x: float) -> float:
    """``P(L_1 <= x)`` for a one-dimensional law."""
    _require_1d(law)
    if law.kind == "brownian":
        return float(special.ndtr(x))
    return _std_cdf(law.alpha, law.skew, x / law.scale)


def pdf(law: StableLaw, x: float) -> float:
    """Density of ``L_1`` for a one-dimensional law."""
    _require_1d(law)
    if law.kind == "brownian":
        return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    s = law.scale
    return _std_pdf(law.alpha, law.skew, x / s) / s


@lru_cache(maxsize=4096)
def _std_quantile(alpha: float, beta: float, p: float) -> float:
    if beta == 0.0 and p == 0.5:
        return 0.0

    def g(x):
        return _std_cdf(alpha, beta, x) - p

    lo, hi = -1.0, 1.0
    while g(lo) > 0:
        lo *= 2.0
        if lo < -_BRACKET_LIMIT:
            raise ConvergenceError(f"no quantile bracket for p={p} within |x| <= {_BRACKET_LIMIT:g}")
    while g(hi) < 0:
        hi *= 2.0
        if hi > _BRACKET_LIMIT:
            raise ConvergenceError(f"no quantile bracket for p={p} within |x| <= {_BRACKET_LIMIT:g}")
    return optimize.brentq(g, lo, hi, xtol=1e-10, rtol=1e-12, maxiter=200)


def quantile(law: StableLaw, p: float) -> float:
    """Inverse CDF of a one-dimensional law (Brownian, symmetric or skewed).

    Skewed laws are supported experimentally: their VaR constant uses the
    left tail, ``-quantile(p)``, without symmetrization.
    """
    _require_1d(law)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if law.kind == "brownian":
        return float(special.ndtri(p))
    return law.scale * _std_quantile(law.alpha, law.skew, float(p))


def tail_quantile(law: StableLaw, p: float) -> float:
    """Power-tail approximation of ``quantile(law, p)`` for ``p`` near 0 or 1.

    Uses ``P(L_1 < -x) ~ C (1 - beta)/2 (x/scale)**-alpha`` with
    ``C = Gamma(alpha) sin(pi alpha / 2) / pi * 2``.
    """
    _require_1d(law)
    if law.kind == "brownian":
        return float(special.ndtri(p))
    C = 2.0 * special.gamma(law.alpha) * math.sin(math.pi * law.alpha / 2.0) / math.pi
    beta = law.skew
    if p < 0.5:
        mass = C * (1.0 - beta) / 2.0
        return -law.scale * (mass / p) ** (1.0 / law.alpha)
    mass = C * (1.0 + beta) / 2.0
    return law.scale * (mass / (1.0 - p)) ** (1.0 / law.alpha)


def lower_tail_mean_quantile(law: StableLaw, p: float, nodes: int = 64) -> float:
    """``(1/p) * integral_0^p quantile(law, q) dq`` by Gauss-Legendre after ``q = p s**k``.

    The power substitution removes the endpoint singularity of the quantile
    function; quantiles outside the inversion bracket fall back to
    :func:`tail_quantile`.
    """
    _require_1d(law)
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (x + 1.0)
    if law.kind == "brownian":
        k = 4
    else:
        k = max(4, math.ceil(3.0 / (1.0 - 1.0 / law.alpha)))
    q = p * s ** k
    vals = np.empty_like(q)
    for i, qi in enumerate(q):
        if qi <= 0.0:
            vals[i] = 0.0
            continue
        try:
            vals[i] = quantile(law, float(qi))
        except ConvergenceError:
            vals[i] = tail_quantile(law, float(qi))
    return float(np.sum(0.5 * w * k * s ** (k - 1) * vals))


def spectral_norm(law_or_measure, x: Sequence[float] | np.ndarray, alpha: float | None = None) -> float:
    """``(sum_k w_k |<x, v_k>|**alpha)**(1/alpha)`` for a spectral measure."""
    meas = law_or_measure.spectral if isinstance(law_or_measure, StableLaw) else law_or_measure
    if alpha is None:
        alpha = law_or_measure.alpha
    proj = np.abs(meas.V @ np.asarray(x, float)) ** alpha
    return float(proj @ meas.w) ** (1.0 / alpha)
