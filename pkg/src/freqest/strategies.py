"""Measurement-time strategies and single-trial simulation.

Offline strategies fix their times in advance (``fixed``: all at pi,
``linear``: k pi, ``exponential``: base^k).  The adaptive strategy warms up
on an exact grid posterior with times k pi, then tracks a Gaussian belief,
measuring where ``cos(mu t) = 0`` nearest the envelope minimum ``t = 1/sigma``
(or its finite-T2 counterpart) and applying the closed-form updates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import belief as bl
from . import estimators as est
from .errors import DegeneratePosteriorError, DomainError
from .model import INF, Measurement, Record, TrueModel, sample_outcome

log = logging.getLogger(__name__)

KINDS = ("fixed", "linear", "exponential", "adaptive")
DEFAULT_ESTIMATOR = {
    "fixed": "mle",
    "linear": "mle",
    "exponential": "mle",
    "adaptive": "posterior_mean",
}
ESTIMATORS = ("mle", "bayes_mean", "fourier", "posterior_mean")

# the Gaussian controller hands over to the grid when the belief is this close to omega = 0
FALLBACK_SIGMAS = 5.0
FALLBACK_NODES = 4_000
# the grid hands over to the Gaussian controller only once its posterior looks Gaussian
GAUSSIAN_MISMATCH = 0.05

__all__ = [
    "StrategySpec",
    "AdaptiveState",
    "TrialResult",
    "schedule",
    "next_time",
    "observe",
    "simulate",
    "run_trial",
    "trial_rng",
    "estimate_offline",
    "optimize_exponential_base",
]


@dataclass(frozen=True)
class StrategySpec:
    """Which times to measure at, and which estimator reads out the record."""

    kind: str
    n: int = 1
    base: float = 9 / 8
    warmup_len: int = 15
    estimator: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.n < 0:
            raise DomainError("n must be >= 0")
        if self.kind == "exponential" and not self.base > 1.0:
            raise DomainError("exponential base must exceed 1")
        if self.warmup_len < 1:
            raise DomainError("warmup_len must be >= 1")
        if self.estimator is not None and self.estimator not in ESTIMATORS:
            raise DomainError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "posterior_mean" and self.kind != "adaptive":
            raise DomainError("posterior_mean readout is only defined for the adaptive strategy")
        if self.kind == "adaptive" and self.estimator not in (None, "posterior_mean"):
            raise DomainError("the adaptive strategy reads out its own posterior mean")
        if self.estimator == "fourier" and self.kind != "linear":
            raise DomainError("the Fourier estimator needs the linear schedule")

    @property
    def estimator_name(self) -> str:
        return self.estimator or DEFAULT_ESTIMATOR[self.kind]

    @property
    def label(self) -> str:
        if self.kind == "exponential":
            return f"exp({self.base:g})"
        return self.kind

    @property
    def offline(self) -> bool:
        return self.kind != "adaptive"

    def with_n(self, n: int) -> "StrategySpec":
        return replace(self, n=n)


def schedule(spec: StrategySpec) -> np.ndarray:
    """Times of an offline strategy, k = 1..n."""
    if not spec.offline:
        raise DomainError("the adaptive strategy has no offline schedule")
    k = np.arange(1, spec.n + 1, dtype=float)
    if spec.kind == "fixed":
        return np.full(spec.n, math.pi)
    if spec.kind == "linear":
        return k * math.pi
    return spec.base ** k


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for ``(seed, *key)``; identical wherever it is built."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


# --------------------------------------------------------------------------
# adaptive controller


@dataclass
class AdaptiveState:
    """Controller state.

    ``grid`` is the exact posterior during warm-up, and during tracking
    whenever the Gaussian controller cannot be used (``mu < 5 sigma``);
    ``belief`` is the Gaussian summary during tracking.
    """

    warmup_len: int = 15
    grid: bl.GridPosterior | None = None
    belief: bl.GaussianBelief | None = None
    history: Record = field(default_factory=Record)
    fallback_steps: int = 0
    tracking_steps: int = 0

    def __post_init__(self):
        if self.grid is None and self.belief is None:
            self.grid = bl.GridPosterior.uniform()

    @property
    def phase(self) -> str:
        return "warmup" if len(self.history) < self.warmup_len else "tracking"

    @property
    def estimate(self) -> float:
        if not len(self.history):
            return 0.5  # uniform prior mean, exactly
        if self.belief is not None:
            return self.belief.estimate
        return bl.grid_moments(self.grid)[0]

    def moments(self) -> tuple[float, float]:
        if self.belief is not None:
            return self.belief.mu, self.belief.sigma2
        return bl.grid_moments(self.grid)


def _gaussian_usable(b: bl.GaussianBelief) -> bool:
    return b.mu >= FALLBACK_SIGMAS * b.sigma


def next_time(state: AdaptiveState, eta: float = 1.0, t2: float = INF) -> float:
    """Time of the next measurement.

    Warm-up and grid fallback step through ``k pi`` (k = measurement index);
    tracking uses :func:`freqest.belief.controller_time`.
    """
    if state.phase == "warmup" or state.belief is None:
        return (len(state.history) + 1) * math.pi
    _, t = bl.controller_time(state.belief, t2)
    return t


def _fallback_grid(state: AdaptiveState, eta: float, t2: float) -> bl.GridPosterior:
    # exact posterior recomputed on a window resolving the record's fastest fringe
    mu, s2 = state.moments()
    hi = min(1.0, mu + 40.0 * math.sqrt(s2))
    t_max = float(state.history.times.max()) if len(state.history) else 0.0
    n = int(min(max(FALLBACK_NODES, math.ceil(4.0 * hi * t_max)), 400_000))
    return bl.GridPosterior.from_record(state.history, eta, t2, n, 0.0, hi)


def observe(state: AdaptiveState, m: Measurement, eta: float = 1.0, t2: float = INF) -> None:
    """Fold one measurement into the controller state (in place)."""
    warm = state.phase == "warmup"
    state.history.append(m)
    if state.belief is not None:
        state.tracking_steps += 1
        if eta == 1.0:
            state.belief = bl.gauss_update_t2(state.belief, m, t2)
        else:
            state.belief = bl.gauss_moment_match(state.belief, m, eta, t2)
        if not _gaussian_usable(state.belief):
            log.debug("belief near omega=0 (mu=%g, sigma=%g); switching to grid", state.belief.mu, state.belief.sigma)
            state.grid = _fallback_grid(state, eta, t2)
            state.belief = None
        return
    state.grid = bl.grid_update(state.grid, m, eta, t2)
    if not warm:
        state.fallback_steps += 1
    if state.phase == "tracking":
        mu, s2 = bl.grid_moments(state.grid)
        b = bl.GaussianBelief(mu, max(s2, bl.SIGMA2_FLOOR))
        if _gaussian_usable(b) and bl.grid_gaussian_mismatch(state.grid) <= GAUSSIAN_MISMATCH:
            state.belief = b
            state.grid = None
        elif state.grid.step * (len(state.history) + 1) * math.pi > 0.25:
            state.grid = _fallback_grid(state, eta, t2)


# --------------------------------------------------------------------------
# trials


@dataclass
class TrialResult:
    record: Record
    estimates: dict[int, float]
    failures: dict[int, str] = field(default_factory=dict)
    sigma2: dict[int, float] = field(default_factory=dict)


def estimate_offline(record: Record, name: str, eta: float = 1.0, t2: float = INF) -> float:
    if len(record) == 0:
        return 0.5
    if name == "mle":
        return est.mle(record, eta, t2).omega_hat
    if name == "bayes_mean":
        return est.bayes_mean(record, eta, t2).omega_hat
    if name == "fourier":
        return est.fourier_estimate(record).omega_hat
    raise DomainError(f"unknown offline estimator {name!r}")


def _offline_readout(spec, record, checkpoints, eta, t2, estimator, model, result):
    name = estimator if isinstance(estimator, str) else None
    if name == "mle":
        positive = [n for n in checkpoints if n > 0]
        try:
            values = est.mle_prefixes(record, positive, eta, t2) if positive else []
        except est.EstimationFailure:
            values = None
        if values is not None:
            it = iter(values)
            for n in checkpoints:
                result.estimates[n] = 0.5 if n == 0 else next(it).omega_hat
            return
    for n in checkpoints:
        try:
            if name is None:
                result.estimates[n] = float(estimator(record[:n], model))
            else:
                result.estimates[n] = estimate_offline(record[:n], name, eta, t2)
        except est.EstimationFailure as exc:
            result.failures[n] = str(exc)


def simulate(
    spec: StrategySpec,
    model: TrueModel,
    rng: np.random.Generator,
    checkpoints: Sequence[int] | None = None,
    estimator: str | Callable | None = None,
) -> TrialResult:
    """Run one trial up to ``max(checkpoints)`` measurements.

    Every strategy is prefix-consistent: the first ``n`` measurements do not
    depend on how many follow, so one run yields the estimate at each
    checkpoint.  ``estimator`` overrides the binding in ``spec``; a callable gets
    ``(record, model)``.
    """
    checkpoints = sorted(set([spec.n] if checkpoints is None else checkpoints))
    n_max = checkpoints[-1] if checkpoints else 0
    eta, t2 = model.eta, model.t2
    estimator = estimator or spec.estimator_name

    if spec.offline:
        times = schedule(spec.with_n(n_max))
        record = Record([Measurement(sample_outcome(model, t, rng), float(t)) for t in times])
        result = TrialResult(record, {})
        _offline_readout(spec, record, checkpoints, eta, t2, estimator, model, result)
        return result

    state = AdaptiveState(spec.warmup_len)
    result = TrialResult(state.history, {})
    pending = iter(checkpoints)
    nxt = next(pending, None)
    for i in range(n_max + 1):
        while nxt is not None and nxt == i:
            if callable(estimator):
                try:
                    result.estimates[i] = float(estimator(state.history[:i], model))
                except est.EstimationFailure as exc:
                    result.failures[i] = str(exc)
            else:
                result.estimates[i] = state.estimate
            result.sigma2[i] = state.moments()[1]
            nxt = next(pending, None)
        if i == n_max:
            break
        t = next_time(state, eta, t2)
        try:
            observe(state, Measurement(sample_outcome(model, t, rng), t), eta, t2)
        except DegeneratePosteriorError as exc:
            for n in [c for c in checkpoints if c > i]:
                result.failures[n] = str(exc)
            break
    return result


def run_trial(spec: StrategySpec, model: TrueModel, seed: int) -> tuple[Record, float]:
    """Simulate ``spec.n`` measurements and return the record and final estimate."""
    res = simulate(spec, model, np.random.default_rng(seed), [spec.n])
    if spec.n in res.failures:
        raise est.EstimationFailure(res.failures[spec.n])
    return res.record, res.estimates[spec.n]


# 1.05 to 1.40 in steps of 0.01, plus 9/8
DEFAULT_BASE_GRID = tuple(sorted({round(1.05 + 0.01 * i, 2) for i in range(36)} | {9 / 8}))


def optimize_exponential_base(
    n: int,
    eta: float = 1.0,
    t2: float = INF,
    base_grid: Sequence[float] = DEFAULT_BASE_GRID,
    trials: int = 1_000,
    seed: int = 0,
    estimator: str | None = None,
    workers: int = 1,
) -> tuple[float, dict[float, tuple[float, float]]]:
    """Base from ``base_grid`` with the lowest Monte Carlo Bayes risk at ``n`` measurements.

    Every base is scored on the same trial frequencies.  Ties go to the
    smaller base.  Returns the chosen base and ``{base: (risk, stderr)}``.
    """
    from .harness import estimate_bayes_risk

    grid = sorted(set(float(b) for b in base_grid))
    if not grid:
        raise DomainError("base_grid is empty")
    if any(not 1.0 < b < 2.0 for b in grid):
        raise DomainError("bases must lie in (1, 2)")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    scores = {}
    for b in grid:
        spec = StrategySpec("exponential", n, base=b, estimator=estimator)
        scores[b] = estimate_bayes_risk(spec, None, n, eta, t2, trials, seed, workers)
    best = min(grid, key=lambda b: (scores[b][0], b))
    return best, scores
