"""Posterior knowledge of omega.

Two representations are provided:

* :class:`GridPosterior`: an exact posterior density on a uniform grid of
  cell centres (midpoint quadrature), used for warm-up and as an oracle.
* :class:`GaussianBelief`: a ``(mu, sigma2)`` summary under the normality
  assumption, with closed-form predictive probabilities, expected posterior
  variance and the analytic updates used by the adaptive controller.

All Gaussian expressions are written in real arithmetic and in terms of the
centred variable ``omega - mu`` so that tiny variances do not cancel against
``mu**2``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from . import kernels
from .errors import DegeneratePosteriorError, DomainError
from .model import INF, Measurement, Record, contrast

log = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-30
DEFAULT_NODES = 10_000

__all__ = [
    "GaussianBelief",
    "GridPosterior",
    "ExpectedRisk",
    "grid_update",
    "grid_moments",
    "marginal_outcome_prob",
    "posterior_moments",
    "expected_posterior_variance",
    "risk_envelope",
    "noiseless_k",
    "finite_t2_k",
    "controller_time",
    "gauss_update",
    "gauss_update_t2",
    "gauss_moment_match",
]


# --------------------------------------------------------------------------
# Gaussian belief


@dataclass(frozen=True)
class GaussianBelief:
    mu: float
    sigma2: float
    clamped: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.sigma2 > 0.0):
            raise DomainError(f"invalid Gaussian belief mu={self.mu!r}, sigma2={self.sigma2!r}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def estimate(self) -> float:
        """Point estimate of omega, clamped to [0, 1]; the belief itself is not truncated."""
        return min(max(self.mu, 0.0), 1.0)


def _new_belief(mu: float, sigma2: float, clamped: bool = False) -> GaussianBelief:
    if not sigma2 > SIGMA2_FLOOR:
        log.debug("posterior variance %.3g clamped to %.1g", sigma2, SIGMA2_FLOOR)
        return GaussianBelief(mu, SIGMA2_FLOOR, clamped=True)
    return GaussianBelief(mu, sigma2, clamped)


# --------------------------------------------------------------------------
# grid posterior


@dataclass(frozen=True)
class GridPosterior:
    """Posterior density on uniform cell centres ``lo + (i + 1/2) * step``.

    ``weights`` is a density: ``sum(weights) * step == 1``.
    """

    lo: float
    step: float
    weights: np.ndarray

    @classmethod
    def uniform(cls, n_nodes: int = DEFAULT_NODES, lo: float = 0.0, hi: float = 1.0) -> "GridPosterior":
        if n_nodes < 2 or not 0.0 <= lo < hi <= 1.0:
            raise DomainError("grid needs >= 2 nodes on a subinterval of [0, 1]")
        step = (hi - lo) / n_nodes
        return cls(lo, step, np.full(n_nodes, 1.0 / (hi - lo)))

    @classmethod
    def from_record(
        cls,
        record: Record,
        eta: float = 1.0,
        t2: float = INF,
        n_nodes: int = DEFAULT_NODES,
        lo: float = 0.0,
        hi: float = 1.0,
    ) -> "GridPosterior":
        """Posterior from a uniform prior on ``(lo, hi)`` after the whole record."""
        post = cls.uniform(n_nodes, lo, hi)
        if len(record) == 0:
            return post
        logw = np.zeros(n_nodes)
        t = record.times
        a = kernels.signed_contrast(record.outcomes, t, eta, t2)
        kernels.loglik_accumulate_uniform(lo + 0.5 * post.step, post.step, t, a, logw)
        return post._with_logweights(logw)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + (np.arange(self.weights.size) + 0.5) * self.step

    @property
    def hi(self) -> float:
        return self.lo + self.step * self.weights.size

    def __len__(self) -> int:
        return self.weights.size

    def _with_logweights(self, logw: np.ndarray) -> "GridPosterior":
        top = np.max(logw)
        if not np.isfinite(top):
            raise DegeneratePosteriorError("likelihood vanishes on every grid node")
        w = np.exp(logw - top)
        return GridPosterior(self.lo, self.step, w / (w.sum() * self.step))


def grid_update(post: GridPosterior, m: Measurement, eta: float = 1.0, t2: float = INF) -> GridPosterior:
    """Bayes' rule on the grid: multiply by the likelihood and renormalise."""
    c = contrast(m.t, eta, t2)
    lik = 0.5 + 0.5 * (1 - 2 * m.d) * c * np.cos(post.nodes * m.t)
    w = post.weights * lik
    total = w.sum() * post.step
    if not (total > 0.0 and np.isfinite(total)):
        raise DegeneratePosteriorError("posterior weight underflowed to zero")
    return GridPosterior(post.lo, post.step, w / total)


def grid_moments(post: GridPosterior) -> tuple[float, float]:
    """Midpoint-rule mean and variance of the grid density."""
    p = post.weights * post.step
    p = p / p.sum()
    x = post.nodes
    mean = float(np.dot(p, x))
    var = float(np.dot(p, (x - mean) ** 2))
    return mean, max(var, 0.0)


_NORMAL_MASS = (0.6826894921370859, 0.9544997361036416, 0.9973002039367398)


def grid_gaussian_mismatch(post: GridPosterior) -> float:
    """Largest gap between the grid mass within mean +- k sd (k = 1, 2, 3) and the normal value.

    Near 0 for a unimodal, roughly Gaussian posterior; large when the
    posterior is multimodal or skewed.
    """
    p = post.weights * post.step
    p = p / p.sum()
    mean, var = grid_moments(post)
    sd = math.sqrt(var)
    cdf = np.concatenate(([0.0], np.cumsum(p)))
    edges = post.lo + post.step * np.arange(p.size + 1)
    worst = 0.0
    for k, target in zip((1, 2, 3), _NORMAL_MASS):
        lo, hi = np.interp([mean - k * sd, mean + k * sd], edges, cdf)
        worst = max(worst, abs((hi - lo) - target))
    return float(worst)


def grid_expected_posterior_variance(post: GridPosterior, times, eta: float = 1.0, t2: float = INF) -> np.ndarray:
    """Expected posterior variance on the grid for each candidate time."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    p = post.weights * post.step
    p = p / p.sum()
    x = post.nodes
    m1 = float(np.dot(p, x))
    xc = x - m1
    out = np.empty(times.size)
    for j, t in enumerate(times):
        cw = contrast(t, eta, t2) * np.cos(x * t) * p
        a, b, c2 = cw.sum(), np.dot(cw, xc), np.dot(cw, xc * xc)
        v0 = float(np.dot(p, xc * xc))
        total = 0.0
        for s in (1.0, -1.0):
            q = 0.5 * (1.0 + s * a)
            if q <= 0.0:
                continue
            e1 = 0.5 * s * b / q
            e2 = 0.5 * (v0 + s * c2) / q
            total += q * (e2 - e1 * e1)
        out[j] = total
    return out


# --------------------------------------------------------------------------
# Gaussian predictive quantities


class ExpectedRisk(NamedTuple):
    t: float
    risk: float
    envelope: float


def _sig_contrast(t: float, eta: float, t2: float) -> float:
    return float(contrast(t, eta, t2))


def marginal_outcome_prob(b: GaussianBelief, d: int, t: float, eta: float = 1.0, t2: float = INF) -> float:
    """Predictive probability of outcome ``d`` at time ``t`` under the Gaussian belief.

    ``Pr(0) = (1 + c exp(-sigma^2 t^2 / 2) cos(mu t)) / 2`` with contrast ``c``.
    """
    if t < 0:
        raise DomainError("evolution time must be >= 0")
    x = b.sigma2 * t * t
    p0 = 0.5 + 0.5 * _sig_contrast(t, eta, t2) * math.exp(-0.5 * x) * math.cos(b.mu * t)
    return p0 if d == 0 else 1.0 - p0


def posterior_moments(
    b: GaussianBelief, d: int, t: float, eta: float = 1.0, t2: float = INF
) -> tuple[float, float]:
    """Exact posterior mean and variance for a Gaussian prior and one outcome.

    Valid for any time, not only the controller's; used by the moment-matching
    paths and as a reference for the specialised updates.
    """
    s = 1 - 2 * d
    c = _sig_contrast(t, eta, t2)
    x = b.sigma2 * t * t
    damp = c * math.exp(-0.5 * x)
    cos_mt, sin_mt = math.cos(b.mu * t), math.sin(b.mu * t)
    q = 1.0 + s * damp * cos_mt
    if not q > 0.0:
        raise DegeneratePosteriorError(f"outcome {d} has zero predictive probability at t={t!r}")
    # moments of delta = omega - mu
    e1 = -s * damp * b.sigma2 * t * sin_mt / q
    e2 = (b.sigma2 + s * damp * (b.sigma2 - b.sigma2 * x) * cos_mt) / q
    return b.mu + e1, e2 - e1 * e1


def risk_envelope(t, sigma2: float, eta: float = 1.0, t2: float = INF):
    """Lower envelope of the expected posterior variance, ``sigma2 (1 - c^2 x e^-x)``, ``x = sigma2 t^2``."""
    t = np.asarray(t, dtype=float)
    x = sigma2 * t * t
    c = contrast(t, eta, t2)
    return sigma2 * (1.0 - c * c * x * np.exp(-x))


def expected_posterior_variance(
    b: GaussianBelief, t: float, eta: float = 1.0, t2: float = INF
) -> ExpectedRisk:
    """Expected posterior variance (Bayes risk) of measuring next at ``t``.

    For the noiseless model this is
    ``sigma2 * (1 + x sin^2(mu t) / (cos^2(mu t) - e^x))`` with ``x = sigma2 t^2``;
    a contrast ``c < 1`` scales ``sin^2`` and ``cos^2`` by ``c^2``.  The
    denominator is evaluated as ``expm1(x) + (1 - c^2) + c^2 sin^2`` to stay
    accurate near ``t = 0``.
    """
    if t < 0:
        raise DomainError("evolution time must be >= 0")
    s2 = b.sigma2
    x = s2 * t * t
    env = float(risk_envelope(t, s2, eta, t2))
    if t == 0.0 or x > 700.0:
        return ExpectedRisk(t, s2, env)
    c2 = _sig_contrast(t, eta, t2) ** 2
    sin2 = math.sin(b.mu * t) ** 2
    den = math.expm1(x) + (1.0 - c2) + c2 * sin2
    if den == 0.0:
        return ExpectedRisk(t, s2, env)
    risk = s2 * (1.0 - x * c2 * sin2 / den)
    return ExpectedRisk(t, max(risk, env), env)


# --------------------------------------------------------------------------
# controller time selection


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def noiseless_k(mu: float, sigma: float) -> int:
    """Index of the zero of ``cos(mu t)`` nearest ``t = 1/sigma``."""
    return _round_half_up(mu / (math.pi * sigma) + 0.5)


def finite_t2_k(mu: float, sigma: float, t2: float) -> int:
    """Finite-T2 counterpart of :func:`noiseless_k`.

    The closed form comes out non-positive; the time it selects is
    ``|2k - 1| pi / (2 mu)``.  ``mu (1 - sqrt(1 + 4 sigma^2 t2^2))`` is
    rewritten without cancellation.
    """
    st = sigma * t2
    root = math.sqrt(1.0 + 4.0 * st * st)
    num = -mu * 4.0 * st * st / (1.0 + root) + math.pi * sigma * st
    return _round_half_up(num / (2.0 * math.pi * sigma * st))


def controller_time(b: GaussianBelief, t2: float = INF) -> tuple[int, float]:
    """``(k, t)`` chosen by the Gaussian controller; ``cos(mu t) = 0`` at ``t``."""
    if not b.mu > 0.0:
        raise DegeneratePosteriorError("controller needs mu > 0")
    if math.isinf(t2):
        k = max(noiseless_k(b.mu, b.sigma), 1)
        return k, (2 * k - 1) * math.pi / (2.0 * b.mu)
    k = finite_t2_k(b.mu, b.sigma, t2)
    return k, abs(2 * k - 1) * math.pi / (2.0 * b.mu)


def _check_controller_time(b: GaussianBelief, m: Measurement, t: float) -> None:
    if not math.isclose(m.t, t, rel_tol=1e-9):
        raise DomainError(f"analytic update needs the controller time {t!r}, got {m.t!r}")


def gauss_update(b: GaussianBelief, m: Measurement) -> GaussianBelief:
    """Closed-form update of ``(mu, sigma2)`` for the noiseless model.

    The measurement must have been taken at :func:`controller_time`.
    """
    k, t = controller_time(b)
    _check_controller_time(b, m, t)
    mu, s2 = b.mu, b.sigma2
    kk = 2 * k - 1
    sign_k = -1.0 if k % 2 else 1.0
    arg = math.pi ** 2 * s2 * kk * kk / (4.0 * mu * mu)
    shift = math.pi * (2 * m.d - 1) * s2 * sign_k * kk * math.exp(-0.5 * arg) / (2.0 * mu)
    var = s2 - math.pi ** 2 * (1 - 2 * m.d) ** 2 * s2 * s2 * kk * kk * math.exp(-arg) / (4.0 * mu * mu)
    return _new_belief(mu - shift, var)


def gauss_update_t2(b: GaussianBelief, m: Measurement, t2: float) -> GaussianBelief:
    """Closed-form update for the finite-T2 model (unit visibility).

    The exponent is written in terms of the non-positive ``k`` of
    :func:`finite_t2_k`; it equals ``-sigma^2 t^2 / 2 - t / t2`` at the
    selected time.  The mean shift has the same orientation as in the
    noiseless update.
    """
    if math.isinf(t2):
        return gauss_update(b, m)
    k, t = controller_time(b, t2)
    _check_controller_time(b, m, t)
    mu, s2 = b.mu, b.sigma2
    kk = 2 * k - 1
    sign_k = -1.0 if k % 2 else 1.0
    pi = math.pi
    arg = (pi - 2 * pi * k) * (-2 * pi * k * s2 * t2 + 4 * mu + pi * s2 * t2) / (8.0 * mu * mu * t2)
    shift = pi * (2 * m.d - 1) * sign_k * kk * s2 * math.exp(-arg) / (2.0 * mu)
    var = s2 - pi ** 2 * (2 * m.d - 1) ** 2 * kk * kk * s2 * s2 * math.exp(-2.0 * arg) / (4.0 * mu * mu)
    return _new_belief(mu - shift, var)


def gauss_moment_match(
    b: GaussianBelief, m: Measurement, eta: float = 1.0, t2: float = INF, n_points: int | None = None
) -> GaussianBelief:
    """Gaussian refit of the exact posterior by Gauss-Hermite quadrature.

    Works for any visibility and time.  The rule size grows with the number
    of fringe periods ``sigma t`` spanned by the prior; a doubled rule must
    agree or :class:`DegeneratePosteriorError` is raised.
    """
    st = b.sigma * m.t
    n = n_points or int(min(64 + 8 * math.ceil(st), 400))

    def moments(npts: int) -> tuple[float, float, float]:
        z, w = hermegauss(npts)
        w = w / math.sqrt(2.0 * math.pi)
        delta = b.sigma * z
        lik = 0.5 + 0.5 * (1 - 2 * m.d) * _sig_contrast(m.t, eta, t2) * np.cos((b.mu + delta) * m.t)
        p = w * lik
        z0 = p.sum()
        e1 = np.dot(p, delta) / z0
        e2 = np.dot(p, (delta - e1) ** 2) / z0
        return float(z0), float(e1), float(e2)

    z0, e1, var = moments(n)
    if not z0 > 0.0:
        raise DegeneratePosteriorError("predictive probability vanished in quadrature")
    z0b, e1b, varb = moments(min(2 * n, 800))
    scale = b.sigma
    if abs(e1 - e1b) > 1e-8 * scale or abs(var - varb) > 1e-6 * var:
        raise DegeneratePosteriorError("Gauss-Hermite quadrature did not converge")
    return _new_belief(b.mu + e1b, varb)
