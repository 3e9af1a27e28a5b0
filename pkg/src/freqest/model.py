"""Measurement models, outcome simulation, Fisher information and risk bounds.

The qubit is prepared in |+>, evolves for a time ``t`` under a Hamiltonian
with frequency ``omega`` in (0, 1) and is measured in the x basis.  Outcome
``d = 0`` means |+> was found.  With visibility ``eta`` and dephasing time
``t2`` the probability of ``d = 0`` is

    eta * (exp(-t/t2) cos^2(omega t / 2) + (1 - exp(-t/t2)) / 2) + (1 - eta) / 2

which can be rewritten as ``(1 + c cos(omega t)) / 2`` with contrast
``c = eta * exp(-t/t2)``.  ``t2 = math.inf`` selects the dephasing-free model
exactly; no large-float stand-in is ever used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainError

INF = math.inf

__all__ = [
    "INF",
    "TrueModel",
    "Measurement",
    "Record",
    "contrast",
    "likelihood",
    "likelihood_t2",
    "sample_outcome",
    "draw_omega",
    "fisher_information",
    "fisher_information_t2",
    "crb",
    "crb_t2",
    "crb_t2_sharp",
    "crb_ultimate",
    "info_theoretic_floor",
]


def _check_eta_t2(eta: float, t2: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"visibility eta must lie in (0, 1], got {eta!r}")
    if not t2 > 0.0:
        raise DomainError(f"t2 must be positive or inf, got {t2!r}")


@dataclass(frozen=True)
class TrueModel:
    """Ground-truth parameters used to simulate data."""

    omega: float
    eta: float = 1.0
    t2: float = INF

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise DomainError(f"omega must lie in (0, 1), got {self.omega!r}")
        _check_eta_t2(self.eta, self.t2)

    @property
    def noiseless(self) -> bool:
        return self.eta == 1.0 and math.isinf(self.t2)


@dataclass(frozen=True)
class Measurement:
    d: int
    t: float

    def __post_init__(self):
        if self.d not in (0, 1):
            raise DomainError(f"outcome must be 0 or 1, got {self.d!r}")
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise DomainError(f"evolution time must be finite and >= 0, got {self.t!r}")


@dataclass
class Record:
    """Ordered list of measurements."""

    measurements: list[Measurement] = field(default_factory=list)

    @classmethod
    def from_arrays(cls, outcomes: Iterable[int], times: Iterable[float]) -> "Record":
        return cls([Measurement(int(d), float(t)) for d, t in zip(outcomes, times)])

    def append(self, m: Measurement) -> None:
        self.measurements.append(m)

    def __len__(self) -> int:
        return len(self.measurements)

    def __iter__(self) -> Iterator[Measurement]:
        return iter(self.measurements)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Record(self.measurements[item])
        return self.measurements[item]

    @property
    def times(self) -> np.ndarray:
        return np.array([m.t for m in self.measurements], dtype=float)

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([m.d for m in self.measurements], dtype=np.int64)


def contrast(t, eta: float = 1.0, t2: float = INF):
    """Fringe contrast ``eta * exp(-t/t2)``; exactly ``eta`` when ``t2`` is inf."""
    t = np.asarray(t, dtype=float)
    c = np.full_like(t, eta) if math.isinf(t2) else eta * np.exp(-t / t2)
    return c if c.ndim else float(c)


def likelihood(d: int, omega: float, t: float) -> float:
    """Noiseless outcome probability: ``sin^2(omega t/2)`` for d=1, ``cos^2`` for d=0."""
    if t < 0:
        raise DomainError(f"evolution time must be >= 0, got {t!r}")
    p0 = math.cos(omega * t / 2.0) ** 2
    return p0 if d == 0 else 1.0 - p0


def likelihood_t2(d: int, omega: float, t: float, eta: float = 1.0, t2: float = INF) -> float:
    if t < 0:
        raise DomainError(f"evolution time must be >= 0, got {t!r}")
    _check_eta_t2(eta, t2)
    decay = 1.0 if math.isinf(t2) else math.exp(-t / t2)
    p0 = eta * (decay * math.cos(omega * t / 2.0) ** 2 + (1.0 - decay) / 2.0) + (1.0 - eta) / 2.0
    return p0 if d == 0 else 1.0 - p0


def sample_outcome(model: TrueModel, t: float, rng: np.random.Generator) -> int:
    """Draw one outcome; consumes exactly one uniform variate from ``rng``."""
    p1 = likelihood_t2(1, model.omega, t, model.eta, model.t2)
    return int(rng.random() < p1)


def draw_omega(rng: np.random.Generator) -> float:
    """Uniform draw on the open interval (0, 1)."""
    while True:
        w = float(rng.random())
        if w > 0.0:
            return w


def fisher_information(times: Sequence[float]) -> float:
    """Fisher information of the noiseless model, ``sum t_k^2`` (independent of omega)."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise DomainError("evolution times must be >= 0")
    return float(np.sum(t * t))


def _fisher_terms_t2(t: np.ndarray, omega: float, eta: float, t2: float) -> np.ndarray:
    if eta == 1.0 and math.isinf(t2):
        return t * t
    # multiply numerator and denominator by q = exp(-2t/t2); q -> 0 smoothly instead of overflowing
    q = np.ones_like(t) if math.isinf(t2) else np.exp(-2.0 * t / t2)
    one_minus_q = np.zeros_like(t) if math.isinf(t2) else -np.expm1(-2.0 * t / t2)
    s2 = np.sin(omega * t) ** 2
    num = eta * eta * t * t * s2 * q
    den = one_minus_q + q * (1.0 - eta * eta) + q * eta * eta * s2
    out = np.zeros_like(t)
    nz = num > 0
    out[nz] = num[nz] / den[nz]
    return out


def fisher_information_t2(times: Sequence[float], omega: float, eta: float = 1.0, t2: float = INF) -> float:
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise DomainError("evolution times must be >= 0")
    _check_eta_t2(eta, t2)
    return float(np.sum(_fisher_terms_t2(t, omega, eta, t2)))


def _inverse(info: float) -> float:
    return INF if info == 0.0 else 1.0 / info


def crb(times: Sequence[float]) -> float:
    """Cramér-Rao bound ``1 / sum t_k^2``; inf when the information is zero."""
    return _inverse(fisher_information(times))


def crb_t2(times: Sequence[float], omega: float, eta: float = 1.0, t2: float = INF) -> float:
    return _inverse(fisher_information_t2(times, omega, eta, t2))


def sharp_information(times: Sequence[float], eta: float = 1.0, t2: float = INF) -> float:
    """Omega-free upper bound on the finite-T2 information, ``eta^2 sum t^2 exp(-2t/t2)``."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise DomainError("evolution times must be >= 0")
    _check_eta_t2(eta, t2)
    if math.isinf(t2):
        return float(eta * eta * np.sum(t * t))
    return float(eta * eta * np.sum(t * t * np.exp(-2.0 * t / t2)))


def crb_t2_sharp(times: Sequence[float], eta: float = 1.0, t2: float = INF) -> float:
    return _inverse(sharp_information(times, eta, t2))


def crb_ultimate(n: int, eta: float = 1.0, t2: float = INF) -> float:
    """Best risk reachable with ``n`` measurements under dephasing: ``e^2 / (n eta^2 t2^2)``.

    Returns 0 for ``t2 = inf`` (no dephasing, no such bound).
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    _check_eta_t2(eta, t2)
    if math.isinf(t2):
        return 0.0
    return math.e ** 2 / (n * eta * eta * t2 * t2)


def info_theoretic_floor(n: int) -> float:
    """``2^(-2(n+1))``: one bit of omega learned per binary outcome."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n!r}")
    return math.ldexp(1.0, -2 * (n + 1))
