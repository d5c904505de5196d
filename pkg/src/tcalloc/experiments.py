"""Batch pipelines behind the command line: solve, validate, figure1 and mv-compare."""

from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .market import CoefficientCurve, MarketModel, TimeGrid, gain_moments
from .montecarlo import empirical_J, empirical_risk, simulate_gains
from .objective import ObjectiveSpec, PenaltySpec, TargetSpec, evaluate_J
from .risk import RiskSpec, rho_closed
from .solver import (EquilibriumResult, mean_variance_closed, mean_variance_continuous, solve_equilibrium,
                     write_strategy_csv)
from .stable import StableLaw

__all__ = [
    "FIGURE1_SCENARIOS",
    "Z_LIMIT",
    "ValidationFailure",
    "run_solve",
    "run_validate",
    "run_figure1",
    "run_mv_compare",
    "flip_dependency",
    "figure1_curves",
]

log = logging.getLogger("tcalloc")

Z_LIMIT = 4.0
MV_TOL = 1e-9

# (label, target kind, penalty kind) of the risk-penalized strategies compared to mean-variance
FIGURE1_SCENARIOS = (
    ("exp_zero", "exponential", "zero"),
    ("exp_identity", "exponential", "identity"),
    ("exp_square", "exponential", "positive-square"),
    ("id_identity", "identity", "identity"),
    ("id_square", "identity", "positive-square"),
)


class ValidationFailure(RuntimeError):
    """An internal consistency check of a run failed."""


def _fmt(x) -> str:
    return repr(float(x) + 0.0)  # no "-0.0" in output


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])


def run_solve(cfg: ExperimentConfig, out: Path) -> EquilibriumResult:
    res = solve_equilibrium(cfg.model, cfg.objective, cfg.grid)
    write_strategy_csv(res, out / "strategy.csv")
    if res.boundary_steps:
        log.warning("box constraint active on %d of %d steps", len(res.boundary_steps), cfg.grid.N)
    return res


def run_validate(cfg: ExperimentConfig, out: Path) -> list[tuple]:
    """Solve, then compare closed-form quantities at ``t = 0`` with Monte Carlo."""
    res = run_solve(cfg, out)
    model, obj, strat = cfg.model, cfg.objective, res.strategy
    gm = gain_moments(model, strat, 0.0)
    rows = []

    def add(name, closed, est, se):
        z = 0.0 if se == 0 and est == closed else ((est - closed) / se if se > 0 else float("inf"))
        rows.append((name, closed, est, se, z))

    methods = ["exact-law"] + (["euler-path"] if cfg.euler else [])
    for i, method in enumerate(methods):
        sim = simulate_gains(model, strat, 0.0, cfg.paths, cfg.seed + i, method, refine=cfg.refine)
        tag = "" if method == "exact-law" else "_euler"
        add("mean_gain" + tag, gm.a, sim.mean, sim.mean_se)
        if obj.risk.kind != "custom":
            est, se = empirical_risk(sim.samples, obj.risk, seed=cfg.seed)
            add("rho" + tag, rho_closed(obj.risk, model, strat, 0.0), est, se)
            est, se = empirical_J(sim.samples, obj, 0.0, seed=cfg.seed)
            add("J" + tag, evaluate_J(model, obj, strat, 0.0), est, se)
    _write_rows(out / "validation.csv", ["quantity", "closed_form", "mc_estimate", "stderr", "z_score"], rows)
    bad = [r for r in rows if abs(r[4]) > Z_LIMIT]
    if bad:
        names = ", ".join(f"{r[0]} (z={r[4]:.2f})" for r in bad)
        raise ValidationFailure(f"Monte-Carlo z-score above {Z_LIMIT:g}: {names}")
    return rows


def flip_dependency(model: MarketModel) -> MarketModel:
    """Same model with the off-diagonal entries of ``sigma`` and ``R`` negated."""

    def flip(curve):
        if curve is None:
            return None
        d = model.d
        sign = -np.ones((d, d)) + 2.0 * np.eye(d)
        if curve.is_constant:
            return CoefficientCurve(np.asarray(curve.values).reshape(d, d) * sign)
        return CoefficientCurve(times=curve.times, values=np.asarray(curve.values) * sign)

    return replace(model, sigma=flip(model.sigma), R=flip(model.R))


def _mv_objective(lam: CoefficientCurve) -> ObjectiveSpec:
    return ObjectiveSpec(TargetSpec.identity(), PenaltySpec("positive-square", lam), RiskSpec.sd())


def figure1_curves(model: MarketModel, objective: ObjectiveSpec, grid: TimeGrid) -> dict[str, np.ndarray]:
    """Ratio ``u^scenario / u^mean-variance`` per scenario, shape ``(N, d)`` each."""
    lam = objective.penalty.lam
    risk = objective.risk if objective.risk.kind == "var" else RiskSpec.var(0.01)
    tgt = objective.target
    mv = solve_equilibrium(model, _mv_objective(lam), grid).strategy.values
    out = {}
    for label, tk, fk in FIGURE1_SCENARIOS:
        target = TargetSpec.exponential(tgt.beta, tgt.gamma) if tk == "exponential" else TargetSpec.identity()
        obj = ObjectiveSpec(target, PenaltySpec(fk, lam), risk)
        u = solve_equilibrium(model, obj, grid).strategy.values
        with np.errstate(divide="ignore", invalid="ignore"):
            out[label] = np.where(mv != 0, u / mv, np.nan)
    return out


def run_figure1(cfg: ExperimentConfig, out: Path) -> dict[str, dict[str, np.ndarray]]:
    """Ratio curves for the configured dependency sign and its mirror image."""
    model = cfg.model
    if model.alpha != 2.0:
        raise ValueError("figure1 compares with mean-variance and needs alpha = 2")
    signs = {"pos": model, "neg": flip_dependency(model)}
    if model.d > 1 and model.sigma_at(0.0)[0, 1] < 0:
        signs = {"pos": flip_dependency(model), "neg": model}
    curves = {name: figure1_curves(m, cfg.objective, cfg.grid) for name, m in signs.items()}
    header = ["t"]
    cols = []
    for name, sc in curves.items():
        for label, _, _ in FIGURE1_SCENARIOS:
            for i in range(model.d):
                header.append(f"{name}_{label}_u{i + 1}")
                cols.append(sc[label][:, i])
    t = cfg.grid.points[:-1]
    _write_rows(out / "ratios.csv", header, zip(t, *cols))
    return curves


def run_mv_compare(cfg: ExperimentConfig, out: Path) -> float:
    """One-asset mean-variance run against its closed form; returns the largest deviation."""
    model = cfg.model
    mu = float(model.mu_at(0.0)[0])
    sigma = float(model.sigma_at(0.0)[0, 0])
    lam_curve = cfg.objective.penalty.lam
    if not (model.mu.is_constant and model.sigma.is_constant and lam_curve.is_constant):
        raise ValueError("mv-compare needs constant coefficients")
    lam = float(lam_curve(0.0))
    one = MarketModel(mu=mu, sigma=sigma, r=model.r, T=model.T, law=StableLaw.brownian(), M=model.M)
    res = solve_equilibrium(one, _mv_objective(lam_curve), cfg.grid)
    write_strategy_csv(res, out / "strategy.csv")
    closed = mean_variance_closed(mu, model.r, sigma, lam, cfg.grid).values[:, 0]
    closed = np.clip(closed, one.lower_bound(), one.M)
    t = cfg.grid.points[:-1]
    cont = mean_variance_continuous(mu, model.r, sigma, lam, t, model.T)
    u = res.strategy.values[:, 0]
    _write_rows(out / "comparison.csv", ["t", "u_solver", "u_closed", "u_continuous", "abs_diff"],
                zip(t, u, closed, cont, np.abs(u - closed)))
    dev = float(np.max(np.abs(u - closed)))
    if dev > MV_TOL:
        raise ValidationFailure(f"solver deviates from the closed form by {dev:.3e}")
    return dev
