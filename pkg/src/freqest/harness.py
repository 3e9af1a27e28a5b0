"""Monte Carlo Bayes-risk estimation over strategies and measurement counts.

Trial ``i`` of a plan with seed ``s`` draws its true frequency from the
stream ``(s, i)`` and its outcomes from ``(s, i, strategy_key)``, so every
strategy sees the same frequencies and results do not depend on how trials
are split between worker processes.
"""
from __future__ import annotations

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import model as mdl
from .model import INF, TrueModel, draw_omega
from .strategies import StrategySpec, schedule, simulate, trial_rng

log = logging.getLogger(__name__)

FAILURE_TOLERANCE = 0.01
DEFAULT_N_VALUES = tuple(range(16, 125, 4))

__all__ = [
    "ExperimentPlan",
    "RiskCell",
    "RiskCurve",
    "CellFailure",
    "estimate_bayes_risk",
    "run_strategy",
    "run_plan",
    "fit_decay",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "strategy",
    "estimator",
    "n",
    "risk_mean",
    "risk_stderr",
    "risk_median",
    "failures",
    "crb",
    "crb_sharp",
    "crb_ultimate",
    "floor",
)


class CellFailure(RuntimeError):
    """More than 1% of trials in a cell failed to produce an estimate."""


@dataclass(frozen=True)
class ExperimentPlan:
    strategies: tuple[StrategySpec, ...]
    n_values: tuple[int, ...] = DEFAULT_N_VALUES
    trials: int = 10_000
    eta: float = 1.0
    t2: float = INF
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.strategies:
            raise ValueError("plan needs at least one strategy")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])) or not self.n_values:
            raise ValueError("n_values must be non-empty and strictly increasing")
        if self.n_values[0] < 0:
            raise ValueError("n_values must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        labels = [s.label + "/" + s.estimator_name for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate strategy/estimator pair in plan")


@dataclass
class RiskCell:
    strategy: str
    estimator: str
    n: int
    risk_mean: float
    risk_stderr: float
    risk_median: float
    failures: int
    trial_count: int
    crb: float
    crb_sharp: float
    crb_ultimate: float
    floor: float
    # diagnostics, not part of the CSV schema
    belief_variance_mean: float = math.nan
    time_median: float = math.nan
    failed: bool = False

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@dataclass
class RiskCurve:
    cells: list[RiskCell]
    eta: float = 1.0
    t2: float = INF
    trials: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def strategies(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.strategy not in seen:
                seen.append(c.strategy)
        return seen

    def select(self, strategy: str, estimator: str | None = None) -> list[RiskCell]:
        return [
            c for c in self.cells if c.strategy == strategy and (estimator is None or c.estimator == estimator)
        ]

    @property
    def failed(self) -> bool:
        return any(c.failed for c in self.cells)


def strategy_key(spec: StrategySpec) -> int:
    return zlib.crc32(f"{spec.label}/{spec.warmup_len}".encode())


# --------------------------------------------------------------------------
# trial execution


def _run_chunk(args):
    spec, estimator, n_values, eta, t2, seed, start, stop = args
    key = strategy_key(spec)
    n = len(n_values)
    sq = np.full((stop - start, n), np.nan)
    s2 = np.full((stop - start, n), np.nan)
    info = np.zeros((stop - start, n))
    sharp = np.zeros((stop - start, n))
    tlast = np.full((stop - start, n), np.nan)
    for row, i in enumerate(range(start, stop)):
        omega = draw_omega(trial_rng(seed, i))
        truth = TrueModel(omega, eta, t2)
        res = simulate(spec, truth, trial_rng(seed, i, key), n_values, estimator)
        times = res.record.times
        for j, nv in enumerate(n_values):
            if nv in res.estimates:
                sq[row, j] = (res.estimates[nv] - omega) ** 2
            if nv in res.sigma2:
                s2[row, j] = res.sigma2[nv]
            if nv <= times.size:
                info[row, j] = mdl.fisher_information(times[:nv])
                sharp[row, j] = mdl.sharp_information(times[:nv], eta, t2)
                if nv > 0:
                    tlast[row, j] = times[nv - 1]
    return sq, s2, info, sharp, tlast


def _chunks(trials: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(trials / (4 * workers))) if workers > 1 else trials
    return [(a, min(a + size, trials)) for a in range(0, trials, size)]


def run_strategy(
    spec: StrategySpec,
    n_values: Sequence[int],
    trials: int,
    eta: float = 1.0,
    t2: float = INF,
    seed: int = 0,
    estimator: str | Callable | None = None,
    workers: int = 1,
) -> list[RiskCell]:
    """Risk cells of one strategy at each ``n`` in ``n_values``."""
    n_values = tuple(int(n) for n in n_values)
    estimator = estimator or spec.estimator_name
    chunks = _chunks(trials, workers)
    jobs = [(spec, estimator, n_values, eta, t2, seed, a, b) for a, b in chunks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    sq, s2, info, sharp, tlast = (np.concatenate(p, axis=0) for p in zip(*parts))

    name = estimator if isinstance(estimator, str) else getattr(estimator, "__name__", "custom")
    cells = []
    for j, n in enumerate(n_values):
        ok = np.isfinite(sq[:, j])
        fails = int(trials - ok.sum())
        vals = sq[ok, j]
        mean = float(np.mean(vals)) if vals.size else math.nan
        stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
        if spec.offline:
            times = schedule(spec.with_n(n))
            crb = mdl.crb(times) if n else INF
            crb_sharp = mdl.crb_t2_sharp(times, eta, t2) if n else INF
        else:
            crb = _inv(float(np.mean(info[:, j])))
            crb_sharp = _inv(float(np.mean(sharp[:, j])))
        with np.errstate(all="ignore"):
            bvar = float(np.nanmean(s2[:, j])) if np.any(np.isfinite(s2[:, j])) else math.nan
            tmed = float(np.nanmedian(tlast[:, j])) if np.any(np.isfinite(tlast[:, j])) else math.nan
        cells.append(
            RiskCell(
                strategy=spec.label,
                estimator=name,
                n=n,
                risk_mean=mean,
                risk_stderr=stderr,
                risk_median=float(np.median(vals)) if vals.size else math.nan,
                failures=fails,
                trial_count=int(vals.size),
                crb=crb,
                crb_sharp=crb_sharp,
                crb_ultimate=mdl.crb_ultimate(n, eta, t2) if n else INF,
                floor=mdl.info_theoretic_floor(n),
                belief_variance_mean=bvar,
                time_median=tmed,
                failed=fails > FAILURE_TOLERANCE * trials,
            )
        )
        if cells[-1].failed:
            log.warning("cell %s/%s n=%d: %d of %d trials failed", spec.label, name, n, fails, trials)
    return cells


def _inv(x: float) -> float:
    return INF if x == 0 else 1.0 / x


def estimate_bayes_risk(
    spec: StrategySpec,
    estimator: str | Callable | None,
    n: int,
    eta: float = 1.0,
    t2: float = INF,
    trials: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo Bayes risk of ``spec`` at ``n`` measurements, with its standard error.

    Raises :class:`CellFailure` if more than 1% of trials fail to estimate.
    """
    (cell,) = run_strategy(spec, [n], trials, eta, t2, seed, estimator, workers)
    if cell.failed:
        raise CellFailure(f"{cell.failures} of {trials} trials failed")
    return cell.risk_mean, cell.risk_stderr


def run_plan(plan: ExperimentPlan) -> RiskCurve:
    cells: list[RiskCell] = []
    for spec in plan.strategies:
        log.info("running %s/%s over %d trials", spec.label, spec.estimator_name, plan.trials)
        cells.extend(
            run_strategy(spec, plan.n_values, plan.trials, plan.eta, plan.t2, plan.seed, None, plan.workers)
        )
    return RiskCurve(cells, plan.eta, plan.t2, plan.trials, plan.seed)


# --------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float
    scale: str
    points: int


def fit_decay(
    curve: RiskCurve | Sequence[RiskCell],
    strategy: str | None = None,
    scale: str | None = None,
    n_range: tuple[int, int] | None = None,
    column: str = "risk_mean",
) -> DecayFit:
    """Least-squares fit of ``ln(risk)`` against ``n`` (adaptive) or ``ln(n)`` (offline).

    Non-positive risks are dropped; at least 5 points must remain.
    """
    cells = curve.select(strategy) if isinstance(curve, RiskCurve) else list(curve)
    if strategy is not None and not isinstance(curve, RiskCurve):
        cells = [c for c in cells if c.strategy == strategy]
    if scale is None:
        scale = "linear" if (strategy or (cells[0].strategy if cells else "")) == "adaptive" else "log"
    if n_range is not None:
        cells = [c for c in cells if n_range[0] <= c.n <= n_range[1]]
    pts = [(c.n, getattr(c, column)) for c in cells if getattr(c, column) > 0 and c.n > 0]
    if len(pts) < 5:
        raise ValueError(f"need at least 5 positive points to fit, got {len(pts)}")
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    x = n if scale == "linear" else np.log(n)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(intercept), r2, scale, len(pts))
