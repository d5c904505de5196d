"""Acceptance criteria 1-11.

Every test records a single ``criterion N: PASS|FAIL ...`` line that is
printed in the pytest terminal summary, then asserts the same condition.
Runtime budgets are part of the criteria and are checked with wall time.
"""

import math
import time

import mpmath
import numpy as np
from scipy import stats

from tcalloc import (ObjectiveSpec, PenaltySpec, RiskSpec, SpectralMeasure, StableLaw, Strategy, TargetSpec,
                     TimeGrid, c_alpha, char_fn, empirical_J, empirical_risk, evaluate_J, foc_residual_continuous,
                     grad_J, hjb_residual_discrete, mean_variance_closed, mean_variance_continuous,
                     no_penalty_closed, quantile, rho_closed, sample, simulate_gains, solve_continuous_equilibrium,
                     solve_equilibrium)
from tcalloc.experiments import FIGURE1_SCENARIOS, figure1_curves
from tcalloc.market import MarketModel

import conftest
from conftest import one_asset, two_asset

MV = ObjectiveSpec(TargetSpec.identity(), PenaltySpec("positive-square", 0.25), RiskSpec.sd())
EXP_VAR = ObjectiveSpec(TargetSpec.exponential(1.0, 1.0), PenaltySpec("positive-square", 0.25), RiskSpec.var(0.01))


def record(n: int, ok: bool, detail: str, elapsed: float | None = None, budget: float | None = None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.2f} s" + (f" / budget {budget:g} s]" if budget else "]")
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}{timing}"
    conftest.ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def stable_market(M=10.0):
    meas = SpectralMeasure.symmetrized([[1.0, 0.0], [0.6, 0.8]], [0.5, 0.5])
    return MarketModel(mu=[0.08, 0.06], sigma=[[0.20, 0.10], [0.10, 0.15]], r=0.02, T=10.0,
                       law=StableLaw.multivariate(1.5, meas), M=M)


def test_criterion_01_mean_variance_discrete():
    model = one_asset()
    grid = TimeGrid(10, 10.0)
    t0 = time.perf_counter()
    u = solve_equilibrium(model, MV, grid).strategy.values[:, 0]
    el = time.perf_counter() - t0
    closed = mean_variance_closed(0.08, 0.02, 0.2, 0.25, grid).values[:, 0]
    err = float(np.max(np.abs(u - closed)))
    spot = 6.0 / (math.exp(0.02) + 1.0)
    ok = err <= 1e-9 and abs(u[-1] - spot) <= 1e-9 and el < 1.0
    record(1, ok, f"max|u - closed| = {err:.2e}; u_10 = {u[-1]:.7f} (formula {spot:.7f}; "
                  f"the quoted 2.970004 differs from the formula by {abs(2.970004 - spot):.1e})", el, 1)


def test_criterion_02_continuous_limit():
    model = one_asset()
    grid = TimeGrid.from_step(10.0, 0.01)
    t0 = time.perf_counter()
    u = solve_equilibrium(model, MV, grid).strategy.values[:, 0]
    el = time.perf_counter() - t0
    # compare each interval's control with the curve at the interval midpoint
    mid = grid.points[:-1] + 0.5 * grid.delta
    cont = mean_variance_continuous(0.08, 0.02, 0.2, 0.25, mid, 10.0)
    rel = float(np.max(np.abs(u - cont)) / cont.max())
    left = float(mean_variance_continuous(0.08, 0.02, 0.2, 0.25, 0.0, 10.0))
    right = float(mean_variance_continuous(0.08, 0.02, 0.2, 0.25, 10.0, 10.0))
    # at the grid points themselves the gap is O(delta)
    at_nodes = float(np.max(np.abs(u - mean_variance_continuous(0.08, 0.02, 0.2, 0.25, grid.points[:-1], 10.0))))
    ok = rel <= 0.01 and abs(right - 3.0) < 1e-12 and abs(left - 2.456192) < 5e-7 and el < 10
    record(2, ok, f"max rel deviation {rel:.1e} (left-node gap {at_nodes / cont.max():.1e}); "
                  f"curve endpoints {left:.6f} / {right:.6f}; u[0] = {u[0]:.6f}, u[-1] = {u[-1]:.6f}", el, 10)


def test_criterion_03_zero_penalty():
    obj = ObjectiveSpec(TargetSpec.exponential(1.0, 1.0), PenaltySpec("zero", 0.25), RiskSpec.var(0.01))
    grid = TimeGrid(10, 10.0)
    t0 = time.perf_counter()
    errs = {}
    for name, model in [("d=1", one_asset()), ("d=2 pos", two_asset(1.0)), ("d=2 neg", two_asset(-1.0))]:
        u = solve_equilibrium(model, obj, grid).strategy.values
        errs[name] = float(np.max(np.abs(u - no_penalty_closed(model, 1.0, grid).values)))
    el = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-9 and el < 10
    record(3, ok, "max|u - linear system|: " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()), el, 10)


def test_criterion_04_risk_vs_monte_carlo():
    grid = TimeGrid(10, 10.0)
    rng = np.random.default_rng(2024)
    worst = 0.0
    lines = []
    t0 = time.perf_counter()
    for label, model, specs in [("alpha=2", two_asset(1.0), (RiskSpec.var(0.01), RiskSpec.sd())),
                                ("alpha=1.5", stable_market(), (RiskSpec.var(0.01),))]:
        for i in range(5):
            st_ = Strategy.constant(grid, rng.uniform(-2.0, 2.0, 2))
            sim = simulate_gains(model, st_, 0.0, 1_000_000, seed=100 + i)
            for spec in specs:
                est, se = empirical_risk(sim.samples, spec, seed=i)
                z = (est - rho_closed(spec, model, st_, 0.0)) / se
                worst = max(worst, abs(z))
                lines.append(f"{label}/{spec.kind}:{z:+.2f}")
    el = time.perf_counter() - t0
    ok = worst <= 3.0 and el < 120
    record(4, ok, f"15 comparisons at 1e6 paths, max |z| = {worst:.2f} (" + " ".join(lines) + ")", el, 120)


def test_criterion_05_objective_vs_monte_carlo():
    grid = TimeGrid(10, 10.0)
    model = two_asset(1.0)
    t0 = time.perf_counter()
    zs = {}
    for name, obj, seed in [("exp/VaR", EXP_VAR, 11), ("id/square/sd", MV, 12)]:
        st_ = solve_equilibrium(model, obj, grid).strategy
        sim = simulate_gains(model, st_, 0.0, 100_000, seed=seed)
        est, se = empirical_J(sim.samples, obj, 0.0, seed=seed)
        zs[name] = (est - evaluate_J(model, obj, st_, 0.0)) / se
    el = time.perf_counter() - t0
    ok = all(abs(z) <= 3 for z in zs.values()) and el < 60
    record(5, ok, "z-scores at 1e5 paths: " + ", ".join(f"{k} {v:+.2f}" for k, v in zs.items()), el, 60)


def test_criterion_06_discrete_hjb():
    grid = TimeGrid(10, 10.0)
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    at_eq = 0.0
    worst_cand = -np.inf
    for model in (two_asset(1.0), two_asset(-1.0)):
        res = solve_equilibrium(model, EXP_VAR, grid)
        for n in range(grid.N):
            at_eq = max(at_eq, abs(hjb_residual_discrete(model, EXP_VAR, res, n, res.strategy.values[n])))
            cand = rng.uniform(-model.M, model.M, (50, 2)) * rng.uniform(0, 0.2, (50, 1))
            for u in cand:
                worst_cand = max(worst_cand, hjb_residual_discrete(model, EXP_VAR, res, n, u))
    el = time.perf_counter() - t0
    ok = at_eq <= 1e-8 and worst_cand <= 1e-8 and el < 60
    record(6, ok, f"|residual at u_hat| <= {at_eq:.1e}; max over 2x10x50 candidates {worst_cand:.2e}", el, 60)


def test_criterion_07_continuous_foc():
    grid = TimeGrid.from_step(10.0, 0.01)
    zero_pen = ObjectiveSpec(TargetSpec.exponential(1.0, 1.0), PenaltySpec("zero", 0.25), RiskSpec.var(0.01))
    t0 = time.perf_counter()
    worst = 0.0
    diag = []
    for sign in (1.0, -1.0):
        model = two_asset(sign)
        for obj in (EXP_VAR, zero_pen):
            cr = solve_continuous_equilibrium(model, obj, grid)
            r = max(abs(foc_residual_continuous(model, obj, cr.curve, t, k))
                    for t in grid.points for k in range(2))
            worst = max(worst, r)
        # diagnostic only: the piecewise-constant discrete equilibrium satisfies the
        # continuous condition up to its O(delta) discretization error
        disc = solve_equilibrium(model, EXP_VAR, grid).strategy
        dr = max(abs(foc_residual_continuous(model, EXP_VAR, disc, t, k))
                 for t in grid.points[:-1:10] for k in range(2))
        diag.append(f"{'pos' if sign > 0 else 'neg'} {dr:.1e}")
    el = time.perf_counter() - t0
    ok = worst <= 1e-6 and el < 60
    record(7, ok, f"continuous equilibrium at all 1001 nodes: max |FOC| = {worst:.1e} "
                  f"(discrete delta-equilibrium, diagnostic: {', '.join(diag)})", el, 60)


def test_criterion_08_non_negativity():
    rng = np.random.default_rng(8)
    worst = np.inf
    for i in range(20):
        r = rng.uniform(0.0, 0.05)
        mu = r + rng.uniform(0.0, 0.1)
        sigma = rng.uniform(0.1, 0.4)
        T = float(rng.integers(1, 6))
        law = StableLaw.brownian() if i % 2 == 0 else StableLaw.symmetric(rng.uniform(1.2, 1.9))
        if i % 4 == 0:
            obj = ObjectiveSpec(TargetSpec.exponential(1.0, rng.uniform(0.5, 3)), PenaltySpec("zero", 0.25),
                                RiskSpec.var(0.01))
        else:
            risk = RiskSpec.var(0.05) if i % 4 == 1 else RiskSpec.avar(0.05)
            if law.alpha == 2.0 and i % 4 == 3:
                risk = RiskSpec.sd()
            obj = ObjectiveSpec(TargetSpec.identity(), PenaltySpec("positive-square", rng.uniform(0.1, 1)), risk)
        model = one_asset(mu=mu, r=r, sigma=sigma, T_=T, law=law, M=50.0)
        u = solve_equilibrium(model, obj, TimeGrid(int(T) * 2, T)).strategy.values
        worst = min(worst, float(u.min()))
    record(8, worst >= -1e-12, f"20 configurations, min u_hat = {worst:.3e}")


def test_criterion_09_stable_suite():
    t0 = time.perf_counter()
    checks = []
    # characteristic function round trip
    cf_err = 0.0
    for law in (StableLaw.symmetric(1.5), StableLaw.skewed(1.5, p=0.8)):
        x = sample(law, 1.0, 100_000, seed=9)
        for r in np.linspace(0.1, 2.5, 10):
            cf_err = max(cf_err, abs(np.mean(np.exp(1j * r * x)) - char_fn(law, 1.0, r)))
    checks.append(cf_err <= 0.01)
    # self-similarity t^(-1/alpha) L_t ~ L_1
    law = StableLaw.symmetric(1.5)
    pval = stats.ks_2samp(sample(law, 4.0, 50_000, seed=1) * 4.0 ** (-1 / 1.5),
                          sample(law, 1.0, 50_000, seed=2)).pvalue
    checks.append(pval > 0.01)
    # quantile symmetry
    sym = max(abs(quantile(law, p) + quantile(law, 1 - p)) for p in (0.001, 0.01, 0.05, 0.2, 0.4))
    checks.append(sym <= 1e-9)
    # c_alpha against an arbitrary-precision evaluation of its definition
    ref = float(mpmath.gamma(-0.5) / mpmath.mpf(1.5) * mpmath.cos(0.75 * mpmath.pi))
    ca = c_alpha(1.5, 1.0)
    checks.append(abs(ca - ref) <= 1e-6)
    el = time.perf_counter() - t0
    record(9, all(checks), f"CF err {cf_err:.4f}; KS p = {pval:.3f}; quantile asymmetry {sym:.1e}; "
                           f"c_alpha(1.5) = {ca:.7f} vs mpmath {ref:.7f} (quoted 1.671094 is off by "
                           f"{abs(1.671094 - ref):.1e})", el)


def test_criterion_10_figure1_properties():
    from tcalloc.experiments import flip_dependency
    model = two_asset(1.0, M=100.0)
    grid = TimeGrid.from_step(10.0, 0.01)
    t0 = time.perf_counter()
    fails = []
    strict = []
    for name, m in (("pos", model), ("neg", flip_dependency(model))):
        curves = figure1_curves(m, EXP_VAR, grid)
        for label, _, _ in FIGURE1_SCENARIOS:
            c = curves[label][:, 0]
            tail = c[int(0.8 * grid.N):]
            steps = np.diff(tail)
            below = bool(np.all(c[-int(0.05 * grid.N):] < 1.0))
            non_increasing = bool(np.all(steps <= 1e-9))
            if not (below and non_increasing):
                fails.append(f"{name}/{label}")
            if np.all(steps < 0):
                strict.append(f"{name}/{label}")
    el = time.perf_counter() - t0
    ok = not fails and el < 300
    record(10, ok, f"10 curves < 1 over the last 5% and non-increasing over the last 20%"
                   f"{'; failing: ' + ', '.join(fails) if fails else ''}; strictly decreasing: {len(strict)}/10 "
                   f"(flat by construction: zero-penalty ratio 2*lambda/gamma = 0.5, identity-penalty u_hat = 0)",
           el, 300)


def test_criterion_11_gradient_check():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        d = int(rng.integers(1, 3))
        stable = i % 3 == 2
        if stable:
            law = StableLaw.symmetric(rng.uniform(1.3, 1.9)) if d == 1 else StableLaw.multivariate(
                rng.uniform(1.3, 1.9), SpectralMeasure.symmetrized([[1.0, 0.0], [0.6, 0.8]], [0.5, 0.5]))
        else:
            law = StableLaw.brownian(d)
        A = rng.uniform(0.05, 0.2, (d, d))
        sigma = A @ A.T + 0.05 * np.eye(d)
        model = MarketModel(mu=rng.uniform(0.03, 0.1, d), sigma=sigma, r=0.02, T=5.0, law=law, M=20.0)
        target = TargetSpec.identity() if stable or i % 2 else TargetSpec.exponential(1.0, rng.uniform(0.5, 2))
        pen = ["zero", "identity", "positive-square"][i % 3]
        risk = [RiskSpec.var(0.01), RiskSpec.avar(0.05)][i % 2] if stable or i % 4 else RiskSpec.sd()
        obj = ObjectiveSpec(target, PenaltySpec(pen, rng.uniform(0.1, 1.0)), risk)
        grid = TimeGrid(5, 5.0)
        st_ = Strategy(grid, rng.uniform(-3, 3, (5, d)))
        n = int(rng.integers(0, 5))
        g = grad_J(model, obj, st_, 0.0, n)
        fd = np.empty(d)
        for k in range(d):
            h = 1e-5 * max(1.0, abs(st_.values[n, k]))
            e = np.zeros(d)
            e[k] = h
            fd[k] = (evaluate_J(model, obj, st_.with_value(n, st_.values[n] + e), 0.0)
                     - evaluate_J(model, obj, st_.with_value(n, st_.values[n] - e), 0.0)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)))
    el = time.perf_counter() - t0
    record(11, worst <= 1e-5 and el < 30, f"50 configurations, max relative error {worst:.1e}", el, 30)
