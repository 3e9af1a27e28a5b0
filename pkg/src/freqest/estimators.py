"""Point estimators of omega from a measurement record."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .belief import DEFAULT_NODES, GridPosterior, grid_moments
from .errors import DegeneratePosteriorError, EstimationFailure
from .model import INF, Record

__all__ = [
    "Estimate",
    "mle",
    "mle_prefixes",
    "fourier_estimate",
    "bayes_mean",
    "record_loglik",
]

# node spacing must satisfy step * t_max <= _PHASE_STEP so fringes are resolved
_PHASE_STEP = 0.5
_REFINE = 16  # spacing ratio between successive multi-resolution stages
_WINDOW = 8  # half-width of a refinement window, in previous-stage cells
_KEEP = 16  # candidate peaks carried to the next stage
_MARGIN = 25.0  # nats below the best peak still worth refining
_MIN_STEP = 1e-15


@dataclass(frozen=True)
class Estimate:
    omega_hat: float
    method: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __float__(self) -> float:
        return self.omega_hat


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def record_loglik(omega, times, outcomes, eta: float = 1.0, t2: float = INF):
    """Record log-likelihood at one or more omegas (exact libm evaluation)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.zeros_like(omega)
    kernels.loglik_accumulate(omega, times, kernels.signed_contrast(outcomes, times, eta, t2), out)
    return out


# --------------------------------------------------------------------------
# maximum likelihood


def _refine(best: float, step: float, lo: float, hi: float, times, outcomes, eta, t2, best_ll: float):
    """Bounded Brent search within +-2 cells of the best node."""
    a, b = max(lo, best - 2 * step), min(hi, best + 2 * step)
    res = minimize_scalar(
        lambda w: -record_loglik(w, times, outcomes, eta, t2)[0],
        bounds=(a, b),
        method="bounded",
        options={"xatol": max(step * 1e-7, 1e-16)},
    )
    if res.success and -res.fun >= best_ll:
        return float(res.x), float(-res.fun)
    return best, best_ll


def _local_peaks(ll: np.ndarray) -> np.ndarray:
    """Indices of local maxima (plateaus report their first index)."""
    if ll.size == 1:
        return np.array([0])
    left = np.concatenate(([-np.inf], ll[:-1]))
    right = np.concatenate((ll[1:], [-np.inf]))
    return np.flatnonzero((ll > left) & (ll >= right))


def _coarse_grid(n_nodes: int, t_max: float) -> tuple[float, int]:
    # spacing adapts to the longest time in the first stage
    n = max(n_nodes, int(math.ceil(t_max / _PHASE_STEP)))
    return 1.0 / n, n


def mle(
    record: Record,
    eta: float = 1.0,
    t2: float = INF,
    n_nodes: int = DEFAULT_NODES,
    max_coarse_nodes: int = DEFAULT_NODES,
) -> Estimate:
    """Global maximiser of the record log-likelihood on (0, 1).

    A uniform scan of at least ``n_nodes`` cell centres locates the best
    bracket, then a bounded Brent search refines within +-2 cells.  The scan
    is made fine enough to resolve the fastest fringe; when that would need
    more than ``max_coarse_nodes`` points, the longest times are folded in
    over successive stages, each refining windows around the surviving peaks
    16-fold.  Ties go to the smaller omega.
    """
    if len(record) == 0:
        raise EstimationFailure("maximum likelihood needs at least one measurement")
    times = record.times
    if times.max() <= _PHASE_STEP * n_nodes:
        return mle_prefixes(record, [len(record)], eta, t2, n_nodes)[0]
    outcomes = record.outcomes
    order = np.argsort(times, kind="stable")
    times, outcomes = times[order], outcomes[order]
    a = kernels.signed_contrast(outcomes, times, eta, t2)

    step, n = _coarse_grid(n_nodes, min(times[-1], max_coarse_nodes * _PHASE_STEP))
    t_lim = _PHASE_STEP / step
    used = int(np.searchsorted(times, t_lim, side="right"))
    ll = np.zeros(n)
    kernels.loglik_accumulate_uniform(0.5 * step, step, times[:used], a[:used], ll)
    if not np.isfinite(ll.max()):
        raise EstimationFailure("likelihood vanishes on every grid node")
    centres = 0.5 * step + step * np.arange(n)
    stages = 1

    while used < times.size and step / _REFINE >= _MIN_STEP:
        peaks = _local_peaks(ll)
        peaks = peaks[ll[peaks] >= ll.max() - _MARGIN]
        peaks = peaks[np.argsort(-ll[peaks], kind="stable")][:_KEEP]
        new_step = step / _REFINE
        t_lim = _PHASE_STEP / new_step
        new_used = int(np.searchsorted(times, t_lim, side="right"))
        if new_step / _REFINE < _MIN_STEP:
            new_used = times.size
        half = _WINDOW * _REFINE
        spans: list[list[float]] = []
        for c in np.sort(centres[peaks]):
            s, e = c - half * new_step, c + half * new_step
            if spans and s <= spans[-1][1]:
                spans[-1][1] = e  # overlapping windows merge into one lattice
            else:
                spans.append([s, e])
        ws, lls = [], []
        for s, e in spans:
            w = s + new_step * np.arange(int(round((e - s) / new_step)) + 1)
            keep = (w > 0.0) & (w < 1.0)
            w = w[keep]
            if w.size == 0:
                continue
            buf = np.zeros(w.size)
            kernels.loglik_accumulate_uniform(w[0], new_step, times[:new_used], a[:new_used], buf)
            ws.append(w)
            lls.append(buf)
        centres = np.concatenate(ws)
        ll = np.concatenate(lls)
        order = np.argsort(centres, kind="stable")
        centres, ll = centres[order], ll[order]
        step, used = new_step, new_used
        stages += 1
        if not np.isfinite(ll.max()):
            raise EstimationFailure("likelihood vanishes on every refined node")

    if used < times.size:
        # phases beyond double resolution: include the rest at the current nodes
        kernels.loglik_accumulate(centres, times[used:], a[used:], ll)

    i = int(np.argmax(ll))
    best, best_ll = float(centres[i]), float(ll[i])
    if stages == 1 and (i == 0 or i == n - 1):
        return Estimate(best, "mle", {"loglik": best_ll, "boundary": True, "stages": stages})
    # re-evaluate the winner exactly before refining
    best_ll = float(record_loglik(best, times, outcomes, eta, t2)[0])
    omega, val = _refine(best, step, 0.5 * step if stages == 1 else 0.0, 1.0, times, outcomes, eta, t2, best_ll)
    return Estimate(_clamp01(omega), "mle", {"loglik": val, "stages": stages})


def mle_prefixes(
    record: Record,
    checkpoints: Sequence[int],
    eta: float = 1.0,
    t2: float = INF,
    n_nodes: int = DEFAULT_NODES,
) -> list[Estimate]:
    """MLE of every prefix ``record[:n]`` for ``n`` in ``checkpoints``.

    Identical to calling :func:`mle` on each prefix.  Prefixes whose times
    fit the single-stage scan share one running grid log-likelihood; longer
    prefixes fall back to :func:`mle`.
    """
    checkpoints = list(checkpoints)
    times, outcomes = record.times, record.outcomes
    out: list[Estimate] = []
    if any(n <= 0 for n in checkpoints):
        raise EstimationFailure("maximum likelihood needs at least one measurement")
    step = 1.0 / n_nodes
    fits = np.maximum.accumulate(times) * step <= _PHASE_STEP if times.size else np.zeros(0, bool)
    a = kernels.signed_contrast(outcomes, times, eta, t2)
    ll = np.zeros(n_nodes)
    done = 0
    for n in checkpoints:
        if n > times.size:
            raise EstimationFailure(f"record has only {times.size} measurements, asked for {n}")
        if n < done or not fits[n - 1]:
            out.append(mle(record[:n], eta, t2, n_nodes))
            continue
        kernels.loglik_accumulate_uniform(0.5 * step, step, times[done:n], a[done:n], ll)
        done = n
        if not np.isfinite(ll.max()):
            raise EstimationFailure("likelihood vanishes on every grid node")
        i = int(np.argmax(ll))
        best = 0.5 * step + step * i
        if i == 0 or i == n_nodes - 1:
            out.append(Estimate(best, "mle", {"loglik": float(ll[i]), "boundary": True, "stages": 1}))
            continue
        t_n, d_n = times[:n], outcomes[:n]
        best_ll = float(record_loglik(best, t_n, d_n, eta, t2)[0])
        omega, val = _refine(best, step, 0.5 * step, 1.0, t_n, d_n, eta, t2, best_ll)
        out.append(Estimate(_clamp01(omega), "mle", {"loglik": val, "stages": 1}))
    return out


# --------------------------------------------------------------------------
# Fourier peak estimator


def fourier_estimate(record: Record) -> Estimate:
    """Power-spectrum peak of the mean-subtracted outcome sequence.

    Requires times ``t_k = k * dt`` (k = 1..N).  The peak bin over positive
    frequencies is refined by a parabola through the log-power of its
    neighbours and mapped to ``omega = 2 pi f``.
    """
    times = record.times
    n = times.size
    if n < 3:
        raise EstimationFailure("Fourier estimate needs at least 3 samples")
    dt = times[0]
    expected = dt * np.arange(1, n + 1)
    if not dt > 0 or np.any(np.abs(times - expected) > 1e-12 * np.maximum(1.0, expected)):
        raise EstimationFailure("Fourier estimate needs uniformly spaced times t_k = k dt")
    x = record.outcomes.astype(float)
    x -= x.mean()
    power = np.abs(np.fft.rfft(x)) ** 2
    if power.size < 2 or not np.any(power[1:] > 1e-20 * n):
        raise EstimationFailure("no spectral peak above DC")
    p = 1 + int(np.argmax(power[1:]))
    offset = 0.0
    if 1 < p < power.size - 1 and power[p - 1] > 0 and power[p + 1] > 0:
        la, lb, lc = np.log(power[p - 1 : p + 2])
        den = la - 2 * lb + lc
        if den < 0:
            offset = 0.5 * (la - lc) / den
    f = (p + offset) / (n * dt)
    return Estimate(_clamp01(2 * math.pi * f), "fourier", {"peak_bin": p, "offset": offset})


# --------------------------------------------------------------------------
# posterior mean


def bayes_mean(
    record: Record,
    eta: float = 1.0,
    t2: float = INF,
    n_nodes: int = DEFAULT_NODES,
    max_nodes: int = 2_000_000,
) -> Estimate:
    """Posterior mean under a uniform prior, from an exact grid posterior."""
    if len(record) == 0:
        return Estimate(0.5, "bayes_mean", {"variance": 1.0 / 12.0})
    t_max = float(record.times.max())
    n = int(min(max(n_nodes, math.ceil(4.0 * t_max)), max_nodes))
    try:
        post = GridPosterior.from_record(record, eta, t2, n)
    except DegeneratePosteriorError as exc:
        raise EstimationFailure(str(exc)) from exc
    mean, var = grid_moments(post)
    return Estimate(_clamp01(mean), "bayes_mean", {"variance": var, "nodes": n})
