"""
Strategies Service - local oscillator phase policies

Each strategy maps (t, filter state) to an LO phase in [0, 2pi). Evaluation is
pure and vectorized over any batch dimensions of the filter state.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.services.bayes_filter import FilterState
from src.services.constellation import TWO_PI, Constellation, wrap_angle
from src.services.errors import ArityError, DomainError


def midpoint_quadrature(phi_a, phi_b):
    """pi/2 plus the bisector of two phases, taken on the shorter arc.

    Symmetric in its arguments; antipodal pairs use the plain average.
    """
    a = wrap_angle(np.asarray(phi_a, dtype=float))
    b = wrap_angle(np.asarray(phi_b, dtype=float))
    mean = (a + b) / 2.0
    mean = np.where(np.abs(a - b) > math.pi, mean + math.pi, mean)
    result = np.mod(math.pi / 2 + mean, TWO_PI)
    if np.ndim(result) == 0:
        return float(result)
    return result


class Strategy(ABC):
    """Base class for LO phase policies"""

    kind = "strategy"
    needs_filter = False

    @abstractmethod
    def lo_phase(self, t: float, state: Optional[FilterState]):
        """LO phase for the step starting at t, given the filter state after the previous step"""

    def check(self, constellation: Constellation) -> None:
        """Raise if the strategy cannot be used with this constellation"""

    def name(self) -> str:
        return self.kind

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True)
class StaticHomodyne(Strategy):
    phase: float = math.pi / 2

    kind = "homodyne"

    def lo_phase(self, t, state):
        return _broadcast(float(np.mod(self.phase, TWO_PI)), state)

    def name(self):
        return f"homodyne({self.phase:.4g})"

    def describe(self):
        return {"kind": self.kind, "phase": self.phase}


@dataclass(frozen=True)
class Heterodyne(Strategy):
    rate: float = 100 * math.pi
    initial_phase: float = 0.0

    kind = "heterodyne"

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"heterodyne rate must be positive, got {self.rate}")

    def lo_phase(self, t, state):
        return _broadcast(float(np.mod(self.initial_phase + self.rate * t, TWO_PI)), state)

    def name(self):
        return f"heterodyne({self.rate / math.pi:.4g}pi)"

    def describe(self):
        return {"kind": self.kind, "rate": self.rate, "initial_phase": self.initial_phase}


@dataclass(frozen=True)
class AdaptiveTopTwo(Strategy):
    """Measure symmetrically in quadrature with the two currently most likely phases"""

    kind = "adaptive"
    needs_filter = True

    def check(self, constellation):
        if constellation.size < 2:
            raise ArityError("adaptive strategy needs at least 2 hypotheses")

    def lo_phase(self, t, state):
        if state is None:
            raise ValueError("adaptive strategy needs a filter state")
        # stable sort on -score keeps the lowest index first among ties
        order = np.argsort(-state.scores, axis=-1, kind="stable")
        phases = state.constellation.phase_array
        return midpoint_quadrature(phases[order[..., 0]], phases[order[..., 1]])


@dataclass(frozen=True)
class OptimalTwoPhase(Strategy):
    """Static pi/2 + (phi_0 + phi_1)/2, optimal for two phases"""

    kind = "optimal"

    def check(self, constellation):
        if constellation.size != 2:
            raise ArityError(
                f"optimal two-phase strategy needs exactly 2 hypotheses, got {constellation.size}"
            )

    def lo_phase(self, t, state):
        if state is None:
            raise ValueError("optimal two-phase strategy needs the constellation from the filter state")
        self.check(state.constellation)
        phi_0, phi_1 = state.constellation.phases
        return _broadcast(midpoint_quadrature(phi_0, phi_1), state)


def lo_phase(strategy: Strategy, t: float, state: Optional[FilterState]):
    """LO phase chosen by a strategy at time t"""
    return strategy.lo_phase(t, state)


def _broadcast(value: float, state: Optional[FilterState]):
    if state is None or state.batch_shape == ():
        return value
    return np.full(state.batch_shape, value)


def build_strategy(kind: str, **params) -> Strategy:
    """Strategy from its config kind and parameters"""
    kind = kind.lower()
    if kind in ("homodyne", "static", "static_homodyne"):
        return StaticHomodyne(phase=float(params.get("phase", math.pi / 2)))
    if kind == "heterodyne":
        return Heterodyne(
            rate=float(params.get("rate", 100 * math.pi)),
            initial_phase=float(params.get("initial_phase", 0.0)),
        )
    if kind in ("adaptive", "adaptive_top_two"):
        return AdaptiveTopTwo()
    if kind in ("optimal", "optimal_two_phase"):
        return OptimalTwoPhase()
    raise DomainError(f"unknown strategy kind {kind!r}")
