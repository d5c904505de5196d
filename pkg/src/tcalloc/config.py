"""Experiment configuration files.

Configs are TOML documents whose keys are read as flat dotted names, so
``target.kind = "exponential"`` and a ``[target]`` table with ``kind = ...``
are equivalent.  The accepted keys are listed in ``KEYS``; see the README
for the full schema.  Errors raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DomainError
from .market import CoefficientCurve, MarketModel, TimeGrid
from .objective import ObjectiveSpec, PenaltySpec, TargetSpec
from .risk import RiskSpec
from .stable import SpectralMeasure, StableLaw

__all__ = ["KEYS", "RUN_KINDS", "ExperimentConfig", "load_config", "parse_config"]

RUN_KINDS = ("solve", "validate", "figure1", "mv-compare")

KEYS = {
    "kind": "run kind (optional; the command line wins)",
    "d": "number of risky assets",
    "r": "short rate",
    "T": "horizon",
    "N": "number of grid intervals",
    "delta": "grid step (alternative to N)",
    "alpha": "stability index in (1, 2]",
    "c": "Levy measure constant (alpha < 2)",
    "regime": "alpha2 | alpha-lt-2-symmetric | alpha-lt-2-one-dim",
    "M": "bound on |u^i|",
    "mu": "drift vector, or one vector per entry of times",
    "sigma": "volatility matrix, or one matrix per entry of times",
    "R": "correlation matrix (alpha = 2), or one per entry of times",
    "times": "sample times of piecewise-linear coefficient curves",
    "spectral_atoms": "list of {direction, weight} tables (alpha < 2, d > 1)",
    "skew_p": "up-jump probability of a one-dimensional driver",
    "target.kind": "identity | exponential",
    "target.beta": "exponential target beta",
    "target.gamma": "exponential target gamma",
    "penalty.kind": "zero | identity | positive-square",
    "lambda": "risk aversion, constant or one value per entry of times",
    "risk.kind": "var | avar | sd | custom",
    "risk.level": "tail probability p",
    "risk.invariance": "cash | shift (custom risk)",
    "risk.base_constant": "rho(L_1) for custom risk",
    "seed": "Monte-Carlo seed",
    "paths": "Monte-Carlo path count",
    "mc.refine": "Euler refinement factor",
    "mc.euler": "also validate with Euler paths (bool)",
}


@dataclass
class ExperimentConfig:
    model: MarketModel
    objective: ObjectiveSpec
    grid: TimeGrid
    kind: str | None
    seed: int
    paths: int
    refine: int
    euler: bool
    raw: dict


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _num(raw: dict, key: str, default=None, *, kind=float, required=False):
    if key not in raw:
        if required:
            raise ConfigError(key, "missing")
        return default
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(key, f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _curve(raw: dict, key: str, const_shape: tuple, times, default=None) -> CoefficientCurve:
    if key not in raw:
        if default is None:
            raise ConfigError(key, "missing")
        return CoefficientCurve(default)
    try:
        arr = np.asarray(raw[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected numbers or nested lists of numbers") from None
    if arr.shape == const_shape or (const_shape == (1,) and arr.shape == ()) or (
            const_shape == (1, 1) and arr.shape in ((), (1,))):
        return CoefficientCurve(arr.reshape(const_shape) if const_shape else arr)
    if times is not None and arr.shape[:1] == (len(times),):
        rest = arr.shape[1:]
        if rest == const_shape or (const_shape in ((1,), (1, 1)) and rest in ((), (1,))):
            return CoefficientCurve(times=times, values=arr.reshape((len(times),) + const_shape))
    raise ConfigError(key, f"shape {arr.shape} does not match {const_shape} (or per-time samples)")


def parse_config(tree: dict) -> ExperimentConfig:
    raw = _flatten(tree)
    for key in raw:
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
    kind = raw.get("kind")
    if kind is not None and kind not in RUN_KINDS:
        raise ConfigError("kind", f"must be one of {RUN_KINDS}")

    T = _num(raw, "T", required=True)
    d = _num(raw, "d", 1, kind=int)
    if d < 1:
        raise ConfigError("d", "must be at least 1")
    if "N" in raw and "delta" in raw:
        raise ConfigError("delta", "give either N or delta, not both")
    try:
        if "delta" in raw:
            grid = TimeGrid.from_step(T, _num(raw, "delta"))
        else:
            grid = TimeGrid(N=_num(raw, "N", required=True, kind=int), T=T)
    except DomainError as exc:
        raise ConfigError("N" if "N" in raw else "delta", str(exc)) from None

    times = None
    if "times" in raw:
        times = np.asarray(raw["times"], dtype=float)
        if times.ndim != 1 or len(times) < 2 or abs(times[0]) > 1e-12 or abs(times[-1] - T) > 1e-9:
            raise ConfigError("times", f"must be an increasing list from 0 to T={T}")

    alpha = _num(raw, "alpha", 2.0)
    c = _num(raw, "c", 1.0)
    try:
        if alpha == 2.0:
            law = StableLaw.brownian(d)
        elif "spectral_atoms" in raw:
            atoms = raw["spectral_atoms"]
            if not isinstance(atoms, list) or not atoms:
                raise ConfigError("spectral_atoms", "expected a non-empty list of tables")
            try:
                dirs = [a["direction"] for a in atoms]
                wts = [a["weight"] for a in atoms]
            except (TypeError, KeyError):
                raise ConfigError("spectral_atoms", "each atom needs 'direction' and 'weight'") from None
            try:
                law = StableLaw.multivariate(alpha, SpectralMeasure.from_arrays(dirs, wts), c=c)
            except DomainError as exc:
                raise ConfigError("spectral_atoms", str(exc)) from None
        elif "skew_p" in raw:
            law = StableLaw.skewed(alpha, c=c, p=_num(raw, "skew_p"))
        elif d == 1:
            law = StableLaw.symmetric(alpha, c=c)
        else:
            raise ConfigError("spectral_atoms", "required for alpha < 2 with d > 1")
    except DomainError as exc:
        raise ConfigError("alpha", str(exc)) from None

    mu = _curve(raw, "mu", (d,), times)
    sigma = _curve(raw, "sigma", (d, d), times)
    R = _curve(raw, "R", (d, d), times) if "R" in raw else None
    if R is not None and alpha < 2.0:
        raise ConfigError("R", "correlation matrices are only used for alpha = 2")
    regime = raw.get("regime")
    try:
        model = MarketModel(mu=mu, sigma=sigma, r=_num(raw, "r", 0.0), T=T, law=law,
                            M=_num(raw, "M", 10.0), R=R, regime=regime)
    except DomainError as exc:
        msg = str(exc)
        key = next((k for k in ("sigma", "R", "regime", "M", "mu") if k in msg), "regime")
        raise ConfigError(key, msg) from None

    try:
        target = TargetSpec(raw.get("target.kind", "identity"), beta=_num(raw, "target.beta", 1.0),
                            gamma=_num(raw, "target.gamma", 1.0))
    except DomainError as exc:
        raise ConfigError("target.kind", str(exc)) from None
    lam = _curve(raw, "lambda", (), times, default=0.25)
    try:
        penalty = PenaltySpec(raw.get("penalty.kind", "identity"), lam=lam)
    except DomainError as exc:
        raise ConfigError("penalty.kind" if "kind" in str(exc) else "lambda", str(exc)) from None
    try:
        risk = RiskSpec(raw.get("risk.kind", "var"), level=_num(raw, "risk.level", 0.01),
                        invariance=raw.get("risk.invariance"),
                        base_constant=_num(raw, "risk.base_constant"))
    except DomainError as exc:
        raise ConfigError("risk.kind", str(exc)) from None
    if risk.kind == "sd" and alpha < 2.0:
        raise ConfigError("risk.kind", "standard deviation needs alpha = 2")

    euler = raw.get("mc.euler", True)
    if not isinstance(euler, bool):
        raise ConfigError("mc.euler", "expected true or false")
    return ExperimentConfig(
        model=model,
        objective=ObjectiveSpec(target, penalty, risk),
        grid=grid,
        kind=kind,
        seed=_num(raw, "seed", 0, kind=int),
        paths=_num(raw, "paths", 100_000, kind=int),
        refine=_num(raw, "mc.refine", 10, kind=int),
        euler=euler,
        raw=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return parse_config(tree)
