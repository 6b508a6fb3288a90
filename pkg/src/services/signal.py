"""
Signal Service - homodyne photocurrent of a decaying coherent pulse

I(t)dt = 2 alpha e^{-t/2} cos(Phi(t) - phi) dt + dW(t), integrated with
Euler-Maruyama on a uniform grid and co-evolved with the LO phase chosen by a
strategy from the filter state of the previous step.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.services.bayes_filter import (
    FilterState,
    new_filter_state,
    posterior,
    select_trajectory,
    update_loglik,
)
from src.services.constellation import Constellation, Label
from src.services.errors import DomainError
from src.services.strategies import Strategy

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_HORIZON = 1.0

SeedLike = Union[int, Sequence[int], np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid in units where the field envelope decays as e^{-t/2}"""

    dt: float = DEFAULT_DT
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        steps = round(self.horizon / self.dt)
        if steps < 1:
            raise DomainError(f"horizon {self.horizon} shorter than one step of {self.dt}")
        if abs(steps * self.dt - self.horizon) > 1e-6 * self.horizon:
            raise DomainError(f"horizon {self.horizon} is not a whole number of steps of {self.dt}")

    @property
    def steps(self) -> int:
        return round(self.horizon / self.dt)

    @property
    def times(self) -> np.ndarray:
        """Left endpoints t_k = k dt of every step"""
        return np.arange(self.steps) * self.dt

    @property
    def curve_times(self) -> np.ndarray:
        """t_0 .. t_steps, the times at which posterior curves are sampled"""
        return np.arange(self.steps + 1) * self.dt

    def index_at(self, t: float) -> int:
        """Curve index of the grid time nearest to t"""
        if t < 0 or t > self.horizon * (1 + 1e-9):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        return int(round(t / self.dt))

    def halved(self) -> "TimeGrid":
        return TimeGrid(dt=self.dt / 2, horizon=self.horizon)


@dataclass
class TrajectoryRecord:
    """One measurement run"""

    grid: TimeGrid
    increments: np.ndarray
    lo_phases: np.ndarray
    true_phase: float
    seed: Any
    true_index: int = 0
    posterior_history: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        posterior_correct = (
            self.posterior_history[1:] if self.posterior_history is not None
            else np.full(self.grid.steps, np.nan)
        )
        return pd.DataFrame({
            "step": np.arange(self.grid.steps),
            "t": self.grid.times,
            "lo_phase": self.lo_phases,
            "increment": self.increments,
            "posterior_correct": posterior_correct,
        })

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Dump the record; posterior_correct is the value after the step's increment"""
        path = Path(path)
        self.to_frame().to_csv(path, index=False, lineterminator="\n")
        return path


@dataclass
class BatchResult:
    """Lock-step run of independent trajectories sharing a true phase and strategy"""

    grid: TimeGrid
    true_index: int
    increments: np.ndarray
    lo_phases: np.ndarray
    posterior_correct: Optional[np.ndarray]
    final_state: Optional[FilterState]
    seeds: List[Any] = field(default_factory=list)


def halve_dt(grid: TimeGrid) -> TimeGrid:
    """Same horizon at half the step, for step-halving convergence checks"""
    return grid.halved()


def trajectory_rng(seed: SeedLike, *key: int) -> np.random.Generator:
    """Counter-based (Philox) stream for one trajectory, keyed on (seed, *key)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        sequence = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    else:
        entropy = [int(s) for s in np.atleast_1d(seed)] + [int(k) for k in key]
        sequence = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(sequence))


def sample_wiener_increment(rng: np.random.Generator, dt: float, size=None):
    """Gaussian increment(s) with mean 0 and variance dt"""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    return rng.normal(0.0, math.sqrt(dt), size=size)


def drift_increment(alpha: float, true_phase: float, lo_phase, t: float, dt: float):
    """2 alpha e^{-t/2} cos(lo_phase - true_phase) dt"""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    return 2.0 * alpha * math.exp(-t / 2) * np.cos(np.asarray(lo_phase) - true_phase) * dt


def simulate_batch(
    constellation: Constellation,
    true_index: int,
    strategy: Strategy,
    grid: TimeGrid,
    noise: np.ndarray,
    filter_enabled: bool = True,
    priors: Optional[Sequence[float]] = None,
    track_stats: bool = False,
) -> BatchResult:
    """Closed-loop run of len(noise) trajectories.

    Per step k: the strategy picks Phi(t_k) from the filter after step k-1, the
    increment is drift plus noise[:, k], then the filter absorbs the increment.
    """
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    batch, steps = noise.shape
    if steps != grid.steps:
        raise DomainError(f"noise has {steps} steps, grid has {grid.steps}")
    if strategy.needs_filter and not filter_enabled:
        raise ValueError(f"strategy {strategy.name()} needs the filter enabled")
    strategy.check(constellation)

    alpha = constellation.amplitude
    true_phase = constellation.phases[true_index]
    state = new_filter_state(constellation, priors, batch_shape=(batch,), track_stats=track_stats)

    increments = np.empty((batch, steps))
    lo_phases = np.empty((batch, steps))
    posterior_correct = None
    if filter_enabled:
        posterior_correct = np.empty((batch, steps + 1))
        posterior_correct[:, 0] = posterior(state)[:, true_index]

    for k, t in enumerate(grid.times):
        phi_lo = np.broadcast_to(strategy.lo_phase(t, state), (batch,))
        dI = drift_increment(alpha, true_phase, phi_lo, t, grid.dt) + noise[:, k]
        lo_phases[:, k] = phi_lo
        increments[:, k] = dI
        if filter_enabled:
            state = update_loglik(state, phi_lo, dI, t, grid.dt)
            posterior_correct[:, k + 1] = posterior(state)[:, true_index]

    return BatchResult(
        grid=grid,
        true_index=true_index,
        increments=increments,
        lo_phases=lo_phases,
        posterior_correct=posterior_correct,
        final_state=state if filter_enabled else None,
    )


def draw_noise(grid: TimeGrid, seed: SeedLike, keys: Sequence[Tuple[int, ...]], noise_free: bool = False) -> np.ndarray:
    """Wiener increments for each trajectory key, shape (len(keys), steps)"""
    if noise_free:
        return np.zeros((len(keys), grid.steps))
    return np.stack([
        sample_wiener_increment(trajectory_rng(seed, *key), grid.dt, size=grid.steps)
        for key in keys
    ])


def simulate_trajectory(
    constellation: Constellation,
    true_label: Union[Label, int, str],
    strategy: Strategy,
    grid: TimeGrid,
    seed: SeedLike,
    filter_enabled: bool = True,
    priors: Optional[Sequence[float]] = None,
    noise_free: bool = False,
    noise: Optional[np.ndarray] = None,
    track_stats: bool = False,
) -> Tuple[TrajectoryRecord, Optional[FilterState]]:
    """One closed-loop measurement run and its final filter state."""
    true_index = constellation.index_of(true_label)
    if noise is None:
        noise = draw_noise(grid, seed, [()], noise_free=noise_free)
    result = simulate_batch(
        constellation, true_index, strategy, grid, np.atleast_2d(noise),
        filter_enabled=filter_enabled, priors=priors, track_stats=track_stats,
    )
    record = TrajectoryRecord(
        grid=grid,
        increments=result.increments[0],
        lo_phases=result.lo_phases[0],
        true_phase=constellation.phases[true_index],
        seed=seed,
        true_index=true_index,
        posterior_history=None if result.posterior_correct is None else result.posterior_correct[0],
    )
    final_state = None if result.final_state is None else select_trajectory(result.final_state, 0)
    return record, final_state
