"""
Bayesian Filter Service - multi-hypothesis likelihoods from the dyne photocurrent

Two equivalent routes are implemented: direct accumulation of the likelihood
exponent step by step, and the complex sufficient statistics (R, S) from which
every hypothesis' exponent can be read off at any time. Both are discretized as
left-endpoint (Ito) sums on the same grid, so they agree to rounding error.

Arrays may carry leading batch dimensions: log_liks has shape batch + (N,),
while LO phases, increments and the statistics have shape batch.
"""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import softmax

from src.services.constellation import Constellation
from src.services.errors import ArityError, DomainError, TimeMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SufficientStats:
    """R = sum exp(i Phi) exp(-t/2) I dt,  S = -sum exp(2i Phi) exp(-t) dt"""

    R: np.ndarray
    S: np.ndarray
    t: float = 0.0
    envelope: float = 0.0  # sum exp(-t) dt, the discrete 1 - exp(-t)

    @classmethod
    def zeros(cls, batch_shape=()) -> "SufficientStats":
        return cls(
            R=np.zeros(batch_shape, dtype=complex),
            S=np.zeros(batch_shape, dtype=complex),
        )


@dataclass(frozen=True)
class FilterState:
    """Accumulated log-likelihood exponents and priors for every hypothesis"""

    constellation: Constellation
    log_liks: np.ndarray
    log_priors: np.ndarray
    t: float = 0.0
    envelope: float = 0.0
    stats: Optional[SufficientStats] = None

    @property
    def priors(self) -> np.ndarray:
        return np.exp(self.log_priors)

    @property
    def batch_shape(self):
        return self.log_liks.shape[:-1]

    @property
    def scores(self) -> np.ndarray:
        """Unnormalized log posterior"""
        return self.log_liks + self.log_priors


def new_filter_state(
    constellation: Constellation,
    priors: Optional[Sequence[float]] = None,
    batch_shape=(),
    track_stats: bool = False,
) -> FilterState:
    """Filter at t=0: zero exponents, uniform priors unless given."""
    n = constellation.size
    if priors is None:
        priors = np.full(n, 1.0 / n)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (n,):
        raise ArityError(f"expected {n} priors, got shape {priors.shape}")
    if np.any(priors < 0) or not np.isclose(priors.sum(), 1.0, rtol=0, atol=1e-9):
        raise DomainError("priors must be non-negative and sum to 1")

    with np.errstate(divide="ignore"):
        log_priors = np.log(priors / priors.sum())

    if isinstance(batch_shape, (int, np.integer)):
        batch_shape = (batch_shape,)
    batch_shape = tuple(int(s) for s in batch_shape)
    return FilterState(
        constellation=constellation,
        log_liks=np.zeros(batch_shape + (n,)),
        log_priors=log_priors,
        stats=SufficientStats.zeros(batch_shape) if track_stats else None,
    )


def select_trajectory(state: FilterState, b: int) -> FilterState:
    """Single-trajectory view of a batched filter state"""
    stats = state.stats
    if stats is not None:
        stats = replace(stats, R=stats.R[b], S=stats.S[b])
    return replace(state, log_liks=state.log_liks[b], stats=stats)


def update_loglik(state: FilterState, lo_phase, increment, t: float, dt: float) -> FilterState:
    """Add one step of the likelihood exponent for every hypothesis.

    log_liks[j] += -2a (a e^{-t} cos^2(Phi - phi_j) dt - e^{-t/2} cos(Phi - phi_j) dI)
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if abs(state.t - t) > dt / 2:
        raise TimeMismatchError(f"filter is at t={state.t:.6g} but update is for t={t:.6g}")

    alpha = state.constellation.amplitude
    lo_phase = np.asarray(lo_phase, dtype=float)
    increment = np.asarray(increment, dtype=float)

    c = np.cos(lo_phase[..., None] - state.constellation.phase_array)
    delta = -2.0 * alpha * (
        alpha * np.exp(-t) * c * c * dt - np.exp(-t / 2) * c * increment[..., None]
    )
    stats = state.stats
    if stats is not None:
        stats = update_stats(stats, lo_phase, increment, t, dt)

    return replace(
        state,
        log_liks=state.log_liks + delta,
        t=state.t + dt,
        envelope=state.envelope + np.exp(-t) * dt,
        stats=stats,
    )


def update_stats(stats: SufficientStats, lo_phase, increment, t: float, dt: float) -> SufficientStats:
    """R += e^{i Phi} e^{-t/2} dI,  S += -e^{2i Phi} e^{-t} dt"""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    lo_phase = np.asarray(lo_phase, dtype=float)
    increment = np.asarray(increment, dtype=float)
    return SufficientStats(
        R=stats.R + np.exp(1j * lo_phase) * np.exp(-t / 2) * increment,
        S=stats.S - np.exp(2j * lo_phase) * np.exp(-t) * dt,
        t=stats.t + dt,
        envelope=stats.envelope + np.exp(-t) * dt,
    )


def loglik_from_stats(stats: SufficientStats, constellation: Constellation, j: int):
    """Re(S conj(a_j)^2) + 2 Re(R conj(a_j)) with a_j = alpha exp(i phi_j).

    Equals the accumulated update_loglik exponent plus alpha^2 * stats.envelope.
    """
    if not 0 <= j < constellation.size:
        raise IndexError(f"hypothesis index {j} out of range 0..{constellation.size - 1}")
    a_conj = np.conj(constellation.complex_amplitudes[j])
    return np.real(stats.S * a_conj * a_conj) + 2.0 * np.real(stats.R * a_conj)


def common_log_prefactor(state: FilterState):
    """-ln C_t on the grid: alpha^2 * sum exp(-t) dt"""
    return state.constellation.amplitude ** 2 * state.envelope


def posterior(state: FilterState) -> np.ndarray:
    """Normalized posterior over hypotheses (log-sum-exp softmax)"""
    return softmax(state.scores, axis=-1)


class Decision(NamedTuple):
    index: np.ndarray
    tie: np.ndarray


def map_decision(state: FilterState) -> Decision:
    """Maximum a posteriori hypothesis; ties go to the lowest index and are flagged."""
    scores = state.scores
    index = np.argmax(scores, axis=-1)
    best = np.take_along_axis(scores, index[..., None], axis=-1)
    tie = np.count_nonzero(scores == best, axis=-1) > 1
    if np.ndim(index) == 0:
        return Decision(int(index), bool(tie))
    return Decision(index, tie)


def log_likelihood_ratio(state: FilterState):
    """ln(L_+ / L_-) for a two-phase constellation; accept + iff positive."""
    if state.constellation.size != 2:
        raise ArityError(
            f"likelihood ratio needs exactly 2 hypotheses, got {state.constellation.size}"
        )
    return state.log_liks[..., 0] - state.log_liks[..., 1]
