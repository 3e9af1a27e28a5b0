"""Acceptance criteria, each run at its stated tolerance.

Monte Carlo criteria use 10^4 trials.  Setting ``FREQEST_ACCEPTANCE_TRIALS``
to a smaller count (the CI setting is 1000) widens every Monte Carlo
tolerance by ``sqrt(10^4 / trials)``.
"""
import math
import os
import time

import numpy as np
import pytest
from oracles import fd_fisher, gauss_quadrature_moments, hermite_two_outcome_risk
from scipy.optimize import minimize_scalar

from freqest import belief as bl
from freqest import model as mdl
from freqest.cli import risk_table_csv
from freqest.config import load, resolve
from freqest.harness import ExperimentPlan, fit_decay, run_plan, run_strategy
from freqest.model import Measurement
from freqest.strategies import StrategySpec

pytestmark = pytest.mark.acceptance

PI = math.pi
TRIALS = int(os.environ.get("FREQEST_ACCEPTANCE_TRIALS", "10000"))
WIDEN = math.sqrt(10_000 / TRIALS)
SEED = 20140101
T2_SAT = 1e4 * PI
PER_STEP = math.log(1 - math.exp(-1))  # -0.4587


def slope_loglog(cells):
    n = np.log([c.n for c in cells])
    return float(np.polyfit(n, np.log([c.risk_mean for c in cells]), 1)[0])


def test_criterion_01_fisher_identity(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        w = rng.uniform(0.01, 0.99)
        ts = rng.uniform(0.0, 50.0, rng.integers(1, 6))
        eta, t2 = rng.uniform(0.5, 1.0), rng.uniform(5.0, 500.0)
        for got, want in (
            (mdl.fisher_information(ts), fd_fisher(ts, w)),
            (mdl.fisher_information_t2(ts, w, eta, t2), fd_fisher(ts, w, eta, t2)),
        ):
            worst = max(worst, abs(got - want) / max(abs(want), 1e-12))
    elapsed = time.perf_counter() - start
    ok = report(1, worst <= 1e-5 and elapsed < 10, f"max relative error {worst:.2e} over 10^3 pairs, {elapsed:.1f} s")
    assert ok


def test_criterion_02_fixed_time_risk(report):
    start = time.perf_counter()
    (cell,) = run_strategy(StrategySpec("fixed"), [100], TRIALS, seed=SEED)
    elapsed = time.perf_counter() - start
    target = 2 / (PI**2 * 100)
    tol = 0.3 * WIDEN
    rel = cell.risk_mean / target - 1
    ok = report(
        2,
        abs(rel) <= tol and elapsed < 60,
        f"risk {cell.risk_mean:.4e} +- {cell.risk_stderr:.1e} vs 2/(pi^2 N) = {target:.4e} "
        f"({rel:+.1%}, tolerance {tol:.0%}); 1/(pi^2 N) = {target / 2:.4e}; {elapsed:.0f} s",
    )
    assert ok


def test_criterion_03_linear_grid_scaling(report):
    # either estimator may satisfy the criterion; both are measured and reported
    tol = 0.4 * WIDEN
    start = time.perf_counter()
    lines, passed = [], False
    for estimator in ("mle", "bayes_mean"):
        cells = run_strategy(StrategySpec("linear", estimator=estimator), [31, 62, 124], TRIALS, seed=SEED)
        slope = slope_loglog(cells)
        above = all(c.risk_mean >= c.crb - 2 * c.risk_stderr for c in cells)
        passed |= abs(slope + 3) <= tol and above
        lines.append(
            f"{estimator}: slope {slope:.3f}, risk >= CRB - 2 se everywhere: {above}, "
            + ", ".join(f"N={c.n} {c.risk_mean:.3e}/{c.crb:.3e}" for c in cells)
        )
    elapsed = time.perf_counter() - start
    ok = report(3, passed and elapsed < 600, f"target slope -3 +- {tol:.2f}; " + "; ".join(lines) + f"; {elapsed:.0f} s")
    assert ok


def test_criterion_04_fourier_scaling(report):
    start = time.perf_counter()
    cells = run_strategy(StrategySpec("linear", estimator="fourier"), [31, 62, 124], TRIALS, seed=SEED)
    elapsed = time.perf_counter() - start
    slope = slope_loglog(cells)
    tol = 0.3 * WIDEN
    constants = ", ".join(f"N={c.n}: {c.risk_mean * PI**2 * c.n**2:.2f}" for c in cells)
    ok = report(
        4,
        abs(slope + 2) <= tol and not any(c.failed for c in cells) and elapsed < 300,
        f"log-log slope {slope:.3f} (target -2 +- {tol:.2f}); risk * pi^2 N^2 = {constants} (diagnostic); "
        f"failures {[c.failures for c in cells]}; {elapsed:.0f} s",
    )
    assert ok


@pytest.fixture(scope="module")
def adaptive_noiseless():
    start = time.perf_counter()
    cells = run_strategy(StrategySpec("adaptive"), range(16, 125, 4), TRIALS, seed=SEED)
    return cells, time.perf_counter() - start


def test_criterion_05_adaptive_exponential_decay(report, adaptive_noiseless):
    cells, elapsed = adaptive_noiseless
    # pre-saturation: risk still above the double-precision resolution of omega
    pre = [c for c in cells if c.risk_mean > 1e-29]
    fit = fit_decay(pre, "adaptive")
    med = fit_decay(pre, "adaptive", column="risk_median")
    tol = 0.1 * WIDEN
    ok = report(
        5,
        abs(fit.slope - PER_STEP) <= tol and elapsed < 900,
        f"slope of ln(mean risk) vs N {fit.slope:.3f} over N={pre[0].n}..{pre[-1].n} "
        f"(target {PER_STEP:.3f} +- {tol:.2f}); median-risk slope {med.slope:.3f} (diagnostic); "
        f"mean risk at N=124 {cells[-1].risk_mean:.2e}, median {cells[-1].risk_median:.2e}; {elapsed:.0f} s",
    )
    assert ok


def test_criterion_06_finite_t2_saturation(report):
    cfg = load(resolve("fig1_t2_1e4pi"))
    assert cfg.t2 == T2_SAT
    start = time.perf_counter()
    cells = {}
    for spec in cfg.strategies:
        # the exponential schedule's MLE dominates the cost; it is run at 10^3 trials to fit the budget
        trials = min(TRIALS, 1000) if spec.kind == "exponential" else TRIALS
        cells[spec.label] = run_strategy(spec, cfg.n_values, trials, cfg.eta, cfg.t2, cfg.seed)
    elapsed = time.perf_counter() - start

    adaptive = cells["adaptive"]
    decay = [c for c in adaptive if c.time_median <= 0.1 * T2_SAT]
    saturated = [c for c in adaptive if c.time_median >= 0.5 * T2_SAT]
    tol = 0.1 * WIDEN
    d_fit = fit_decay(decay, "adaptive") if len(decay) >= 5 else None
    d_med = fit_decay(decay, "adaptive", column="risk_median") if len(decay) >= 5 else None
    s_fit = fit_decay(saturated, "adaptive") if len(saturated) >= 5 else None
    exponential = d_fit is not None and abs(d_fit.slope - PER_STEP) <= tol
    flattens = exponential and s_fit is not None and abs(s_fit.slope) < 0.5 * abs(d_fit.slope)
    violations = [
        f"{c.strategy} N={c.n}"
        for cs in cells.values()
        for c in cs
        if c.risk_mean < c.crb_ultimate - 2 * c.risk_stderr
    ]
    max_time = max(c.time_median for c in adaptive) / T2_SAT
    ok = report(
        6,
        exponential and flattens and not violations and elapsed < 900,
        f"decay phase (median time <= 0.1 T2, N={decay[0].n}..{decay[-1].n}): mean-risk slope "
        f"{d_fit.slope if d_fit else float('nan'):.3f} (target {PER_STEP:.3f} +- {tol:.2f}), "
        f"median-risk slope {d_med.slope if d_med else float('nan'):.3f} (diagnostic); "
        f"saturated phase slope {s_fit.slope if s_fit else float('nan'):.4f}; median time reaches {max_time:.2f} T2; "
        f"cells below e^2/(N T2^2) - 2 se: {violations or 'none'}; {elapsed:.0f} s",
    )
    assert ok


def test_criterion_07_gaussian_update_oracle(report):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        mu, sigma = rng.uniform(0.1, 0.9), rng.uniform(1e-4, 1e-2)
        b = bl.GaussianBelief(mu, sigma**2)
        for t2 in (math.inf, T2_SAT):
            _, t = bl.controller_time(b, t2)
            for d in (0, 1):
                nb = bl.gauss_update(b, Measurement(d, t)) if math.isinf(t2) else bl.gauss_update_t2(b, Measurement(d, t), t2)
                qm, qv = gauss_quadrature_moments(mu, sigma**2, d, t, t2=t2, n=400_001)
                worst = max(worst, abs((nb.mu - mu) / (qm - mu) - 1), abs(nb.sigma2 / qv - 1))
    elapsed = time.perf_counter() - start
    ok = report(7, worst <= 1e-4 and elapsed < 30, f"max relative error {worst:.2e} over 100 beliefs x 2 models x 2 outcomes, {elapsed:.1f} s")
    assert ok


def test_criterion_08_expected_risk_formula(report):
    rng = np.random.default_rng(8)
    worst_brute, worst_gap = 0.0, math.inf
    for _ in range(10_000):
        mu, s2 = rng.uniform(0.05, 0.95), 10 ** rng.uniform(-8, -2)
        t = rng.uniform(0, 3) / math.sqrt(s2)
        r = bl.expected_posterior_variance(bl.GaussianBelief(mu, s2), t)
        worst_brute = max(worst_brute, abs(r.risk - hermite_two_outcome_risk(mu, s2, t)) / s2)
        worst_gap = min(worst_gap, (r.risk - r.envelope) / s2)
    s2 = 2.5e-5
    res = minimize_scalar(lambda t: float(bl.risk_envelope(t, s2)), bounds=(0, 4 / math.sqrt(s2)), method="bounded", options={"xatol": 1e-12})
    at_min = float(bl.risk_envelope(1 / math.sqrt(s2), s2)) / s2
    ok = report(
        8,
        worst_brute <= 1e-10 and worst_gap >= -1e-15 and abs(res.x * math.sqrt(s2) - 1) <= 1e-6
        and abs(at_min - (1 - math.exp(-1))) <= 1e-12,
        f"max |r - brute force| / sigma^2 {worst_brute:.1e}; min (r - E) / sigma^2 {worst_gap:.1e}; "
        f"argmin E * sigma = {res.x * math.sqrt(s2):.9f}; E(1/sigma)/sigma^2 - (1 - 1/e) = {at_min - (1 - math.exp(-1)):.1e}",
    )
    assert ok


def test_criterion_09_greedy_first_time(report):
    start = time.perf_counter()
    post = bl.GridPosterior.uniform(100_000)
    risk = lambda t: float(np.asarray(bl.grid_expected_posterior_variance(post, [t])).ravel()[0])
    ts = np.linspace(0.05 * PI, 4 * PI, 800)
    i = int(np.argmin([risk(t) for t in ts]))
    res = minimize_scalar(risk, bounds=(ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]), method="bounded", options={"xatol": 1e-10})
    elapsed = time.perf_counter() - start
    ok = report(9, abs(res.x / PI - 1.136) <= 0.01 and elapsed < 10, f"t1 = {res.x / PI:.4f} pi (target 1.136 pi +- 0.01 pi), {elapsed:.1f} s")
    assert ok


def test_criterion_10_determinism(report):
    cfg = load(resolve("fig1_noiseless"))
    plan = dict(strategies=cfg.strategies, n_values=(16, 20, 24, 60, 124), trials=40, seed=SEED)
    tables = [
        risk_table_csv([c.row() for c in run_plan(ExperimentPlan(**plan, workers=w)).cells]) for w in (1, 1, 2)
    ]
    ok = report(10, tables[0] == tables[1] == tables[2], "serial rerun and 2-worker run give byte-identical CSV")
    assert ok
