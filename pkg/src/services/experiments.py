"""
Experiments Service - Monte Carlo ensembles of closed-loop discrimination runs

Cells are (strategy, alpha, correct label). Each cell runs n_runs trajectories
in fixed-size chunks; chunks may execute on a thread pool but are reduced in
chunk order, so results do not depend on the number of workers. Trajectory
noise is keyed on (master seed, label index, trajectory index), so strategies
and amplitudes are compared on common random numbers.
"""

import concurrent.futures
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.services.bayes_filter import log_likelihood_ratio, map_decision
from src.services.constellation import Constellation, build_constellation, format_label
from src.services.errors import ArityError, ConfigError, DomainError
from src.services.signal import TimeGrid, TrajectoryRecord, draw_noise, simulate_batch
from src.services.strategies import Heterodyne, Strategy

logger = logging.getLogger(__name__)

NOT_REACHED = math.inf

CURVE_COLUMNS = ["strategy", "alpha", "label", "t", "mean", "std", "stderr"]
SUMMARY_COLUMNS = [
    "strategy", "alpha", "time", "mean", "std", "stderr", "time_to_threshold",
    "label_std", "map_success", "map_success_stderr",
]
SWEEP_COLUMNS = ["rate", "strategy", "alpha", "time", "mean", "std", "stderr", "label_std"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run an ensemble"""

    pulls: Tuple[float, ...]
    strategies: Tuple[Tuple[str, Strategy], ...]
    alphas: Tuple[float, ...] = (5.0,)
    n_runs: int = 500
    grid: TimeGrid = field(default_factory=TimeGrid)
    seed: int = 0
    correct_mode: str = "fixed"
    correct_label: Optional[str] = None
    threshold: float = 0.5
    times: Tuple[float, ...] = (0.2, 1.0)
    priors: Optional[Tuple[float, ...]] = None
    batch_size: int = 500
    dump_trajectories: int = 0

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError(f"n_runs must be >= 1, got {self.n_runs}")
        if not self.alphas or any(a < 0 for a in self.alphas):
            raise ConfigError("alpha values must be a non-empty list of values >= 0")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.correct_mode not in ("fixed", "average"):
            raise ConfigError(f"correct-state mode must be 'fixed' or 'average', got {self.correct_mode!r}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        names = [name for name, _ in self.strategies]
        if len(set(names)) != len(names):
            raise ConfigError(f"strategy names must be unique, got {names}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for t in self.times:
            self.grid.index_at(t)
        constellation = self.constellation()
        for _, strategy in self.strategies:
            strategy.check(constellation)
        if self.correct_label is not None:
            constellation.index_of(self.correct_label)

    def constellation(self, alpha: Optional[float] = None) -> Constellation:
        return build_constellation(self.pulls, self.alphas[0] if alpha is None else alpha)

    def label_indices(self) -> List[int]:
        c = self.constellation()
        if self.correct_mode == "average":
            return list(range(c.size))
        label = self.correct_label if self.correct_label is not None else c.default_correct_label()
        return [c.index_of(label)]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass
class CellResult:
    """Statistics of the correct-hypothesis posterior for one cell"""

    strategy: str
    alpha: float
    label: str
    label_index: int
    n_runs: int
    mean: np.ndarray
    std: np.ndarray
    success_rate: float
    success_stderr: float
    ties: int = 0
    time_to_threshold: float = NOT_REACHED
    trajectories: List[TrajectoryRecord] = field(default_factory=list)

    @property
    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(self.n_runs)

    @property
    def variance(self) -> np.ndarray:
        return self.std ** 2


@dataclass
class EnsembleResult:
    config: ExperimentConfig
    times: np.ndarray
    cells: Dict[Tuple[str, float, str], CellResult] = field(default_factory=dict)

    def cell(self, strategy: str, alpha: float, label: Optional[str] = None) -> CellResult:
        if label is None:
            matches = [c for (s, a, _), c in self.cells.items() if s == strategy and a == alpha]
            if len(matches) != 1:
                raise KeyError(f"{len(matches)} cells for ({strategy}, {alpha}); pass a label")
            return matches[0]
        return self.cells[(strategy, alpha, label)]

    def groups(self) -> Dict[Tuple[str, float], List[CellResult]]:
        """Cells grouped by (strategy, alpha), in run order"""
        grouped: Dict[Tuple[str, float], List[CellResult]] = {}
        for (strategy, alpha, _), cell in self.cells.items():
            grouped.setdefault((strategy, alpha), []).append(cell)
        return grouped

    def curves_frame(self) -> pd.DataFrame:
        frames = []
        for (strategy, alpha, label), cell in self.cells.items():
            frames.append(pd.DataFrame({
                "strategy": strategy,
                "alpha": alpha,
                "label": label,
                "t": self.times,
                "mean": cell.mean,
                "std": cell.std,
                "stderr": cell.stderr,
            }))
        return pd.concat(frames, ignore_index=True)[CURVE_COLUMNS]


class _Moments:
    """Chan's pairwise combination of chunk means and squared deviations"""

    def __init__(self, width: int):
        self.n = 0
        self.mean = np.zeros(width)
        self.m2 = np.zeros(width)

    def add(self, samples: np.ndarray) -> None:
        n_b = samples.shape[0]
        mean_b = samples.mean(axis=0)
        m2_b = ((samples - mean_b) ** 2).sum(axis=0)
        total = self.n + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / total)
        self.m2 = self.m2 + m2_b + delta ** 2 * (self.n * n_b / total)
        self.n = total

    def std(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1))


@dataclass(frozen=True)
class _Task:
    cell_key: Tuple[str, float, str]
    strategy: Strategy
    alpha: float
    label_index: int
    first_run: int
    n: int


@dataclass
class _ChunkOutcome:
    posterior_correct: np.ndarray
    correct: int
    ties: int
    records: List[TrajectoryRecord]


def _run_chunk(config: ExperimentConfig, task: _Task) -> _ChunkOutcome:
    constellation = config.constellation(task.alpha)
    runs = range(task.first_run, task.first_run + task.n)
    keys = [(task.label_index, i) for i in runs]
    noise = draw_noise(config.grid, config.seed, keys)
    batch = simulate_batch(
        constellation, task.label_index, task.strategy, config.grid, noise, priors=config.priors,
    )
    decision = map_decision(batch.final_state)
    records = []
    for b, i in enumerate(runs):
        if i >= config.dump_trajectories:
            break
        records.append(TrajectoryRecord(
            grid=config.grid,
            increments=batch.increments[b],
            lo_phases=batch.lo_phases[b],
            true_phase=constellation.phases[task.label_index],
            seed=(config.seed, task.label_index, i),
            true_index=task.label_index,
            posterior_history=batch.posterior_correct[b],
        ))
    return _ChunkOutcome(
        posterior_correct=batch.posterior_correct,
        correct=int(np.count_nonzero(decision.index == task.label_index)),
        ties=int(np.count_nonzero(decision.tie)),
        records=records,
    )


def first_crossing(curve: Sequence[float], times: Sequence[float], threshold: float) -> float:
    """First time the curve reaches the threshold, NOT_REACHED otherwise"""
    hits = np.flatnonzero(np.asarray(curve) >= threshold)
    return float(times[hits[0]]) if hits.size else NOT_REACHED


def run_ensemble(
    config: ExperimentConfig,
    threads: int = 1,
    on_cell_complete: Optional[Callable[[CellResult], None]] = None,
) -> EnsembleResult:
    """Mean/std/stderr of the correct-hypothesis posterior for every cell."""
    constellation = config.constellation()
    tasks: List[_Task] = []
    for name, strategy in config.strategies:
        for alpha in config.alphas:
            for label_index in config.label_indices():
                key = (name, float(alpha), format_label(constellation.labels[label_index]))
                for first in range(0, config.n_runs, config.batch_size):
                    n = min(config.batch_size, config.n_runs - first)
                    tasks.append(_Task(key, strategy, float(alpha), label_index, first, n))

    n_cells = len({task.cell_key for task in tasks})
    logger.info(
        f"Running {n_cells} cells x {config.n_runs} runs on {config.grid.steps} steps "
        f"({len(tasks)} chunks, {threads} threads)"
    )

    result = EnsembleResult(config=config, times=config.grid.curve_times)
    width = config.grid.steps + 1

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        outcomes = executor.map(lambda task: _run_chunk(config, task), tasks)

        moments, correct, ties, records = None, 0, 0, []
        for task, outcome in zip(tasks, outcomes):
            if task.first_run == 0:
                moments, correct, ties, records = _Moments(width), 0, 0, []
            moments.add(outcome.posterior_correct)
            correct += outcome.correct
            ties += outcome.ties
            records.extend(outcome.records)
            logger.debug(f"Chunk {task.cell_key} runs {task.first_run}..{task.first_run + task.n - 1} done")

            if task.first_run + task.n == config.n_runs:
                strategy, alpha, label = task.cell_key
                rate = correct / config.n_runs
                cell = CellResult(
                    strategy=strategy,
                    alpha=alpha,
                    label=label,
                    label_index=task.label_index,
                    n_runs=config.n_runs,
                    mean=moments.mean,
                    std=moments.std(),
                    success_rate=rate,
                    success_stderr=math.sqrt(rate * (1 - rate) / config.n_runs),
                    ties=ties,
                    time_to_threshold=first_crossing(moments.mean, result.times, config.threshold),
                    trajectories=records,
                )
                result.cells[task.cell_key] = cell
                logger.info(
                    f"Cell {strategy} alpha={alpha:g} label={label}: "
                    f"final mean {cell.mean[-1]:.4f}, MAP success {rate:.4f} "
                    f"({len(result.cells)}/{n_cells})"
                )
                if on_cell_complete:
                    on_cell_complete(cell)
    return result


def _averaged_curves(cells: List[CellResult]):
    """Label-averaged mean, pooled run-level std, across-label std, stderr of the grand mean"""
    means = np.stack([c.mean for c in cells])
    variances = np.stack([c.variance for c in cells])
    n_total = sum(c.n_runs for c in cells)
    mean = means.mean(axis=0)
    pooled_std = np.sqrt(variances.mean(axis=0))
    label_std = means.std(axis=0, ddof=1) if len(cells) > 1 else np.zeros_like(mean)
    stderr = pooled_std / math.sqrt(n_total)
    return mean, pooled_std, label_std, stderr


def average_over_correct_states(
    source: Union[EnsembleResult, ExperimentConfig],
    times: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Average the per-label mean curves at the requested times.

    Reports the pooled run-level std, the std across per-label means, the
    stderr of the grand mean and the final MAP success rate.
    """
    if isinstance(source, ExperimentConfig):
        if source.correct_mode != "average":
            raise ConfigError("averaging over correct states needs correct-state mode 'average'")
        source = run_ensemble(source, threads=threads)
    result = source
    config = result.config
    times = config.times if times is None else times

    rows = []
    for (strategy, alpha), cells in result.groups().items():
        mean, pooled_std, label_std, stderr = _averaged_curves(cells)
        # final-time MAP success, averaged over the correct states
        map_success = sum(c.success_rate for c in cells) / len(cells)
        map_success_stderr = math.sqrt(sum(c.success_stderr ** 2 for c in cells)) / len(cells)
        for t in times:
            k = config.grid.index_at(t)
            rows.append({
                "strategy": strategy,
                "alpha": alpha,
                "time": float(t),
                "mean": float(mean[k]),
                "std": float(pooled_std[k]),
                "label_std": float(label_std[k]),
                "stderr": float(stderr[k]),
                "n_labels": len(cells),
                "map_success": map_success,
                "map_success_stderr": map_success_stderr,
            })
    return pd.DataFrame(rows)


def time_to_threshold(result: EnsembleResult, threshold: Optional[float] = None) -> pd.DataFrame:
    """First grid time the label-averaged mean curve reaches the threshold, per (strategy, alpha).

    Whether the times are nonincreasing in alpha is reported, not assumed.
    """
    threshold = result.config.threshold if threshold is None else threshold
    if not 0 < threshold < 1:
        raise DomainError(f"threshold must lie in (0, 1), got {threshold}")

    rows = []
    for (strategy, alpha), cells in result.groups().items():
        mean = _averaged_curves(cells)[0]
        rows.append({
            "strategy": strategy,
            "alpha": alpha,
            "time_to_threshold": first_crossing(mean, result.times, threshold),
        })
    frame = pd.DataFrame(rows)
    monotone = {}
    for strategy, group in frame.groupby("strategy", sort=False):
        ordered = group.sort_values("alpha", kind="stable")["time_to_threshold"].to_numpy()
        monotone[strategy] = _nonincreasing(ordered)
        if not monotone[strategy]:
            logger.warning(f"Time to {threshold} for {strategy} is not monotone in alpha")
    frame["nonincreasing"] = frame["strategy"].map(monotone).astype(bool)
    return frame


def _nonincreasing(values: np.ndarray, slack: float = 0.0) -> bool:
    finite = np.where(np.isinf(values), np.finfo(float).max, values)
    return bool(np.all(np.diff(finite) <= slack))


def summary_frame(result: EnsembleResult) -> pd.DataFrame:
    """Summary rows (strategy, alpha, time) with the time to threshold of the averaged curve"""
    summary = average_over_correct_states(result)
    ttt = time_to_threshold(result)
    merged = summary.merge(ttt[["strategy", "alpha", "time_to_threshold"]], on=["strategy", "alpha"], how="left")
    return merged[SUMMARY_COLUMNS]


@dataclass(frozen=True)
class SuccessEstimate:
    p_c: float
    stderr: float
    p_plus: float
    p_minus: float
    n_runs: int


def success_probability_n2(
    constellation: Constellation,
    strategy: Strategy,
    alpha: float,
    grid: TimeGrid,
    n_runs: int,
    seed: int = 0,
    batch_size: int = 500,
) -> SuccessEstimate:
    """1/2 [Pr(ln L > 0 | +) + Pr(ln L < 0 | -)] at the horizon; ties score 1/2."""
    if constellation.size != 2:
        raise ArityError(f"success probability needs exactly 2 hypotheses, got {constellation.size}")
    if n_runs < 1:
        raise DomainError(f"n_runs must be >= 1, got {n_runs}")
    constellation = constellation.with_amplitude(alpha)

    rates, variances = [], []
    for label_index, sign in ((0, 1.0), (1, -1.0)):
        scores = []
        for first in range(0, n_runs, batch_size):
            keys = [(label_index, i) for i in range(first, min(n_runs, first + batch_size))]
            noise = draw_noise(grid, seed, keys)
            batch = simulate_batch(constellation, label_index, strategy, grid, noise)
            llr = sign * log_likelihood_ratio(batch.final_state)
            scores.append(np.where(llr > 0, 1.0, np.where(llr == 0, 0.5, 0.0)))
        scores = np.concatenate(scores)
        rates.append(float(scores.mean()))
        variances.append(float(scores.var(ddof=1)) if n_runs > 1 else 0.0)

    p_c = 0.5 * (rates[0] + rates[1])
    stderr = 0.5 * math.sqrt((variances[0] + variances[1]) / n_runs)
    logger.info(f"p_c({strategy.name()}, alpha={alpha:g}) = {p_c:.4f} +/- {stderr:.4f}")
    return SuccessEstimate(p_c=p_c, stderr=stderr, p_plus=rates[0], p_minus=rates[1], n_runs=n_runs)


def strategy_sweep(
    config: ExperimentConfig,
    rates: Iterable[float],
    threads: int = 1,
    initial_phase: float = 0.0,
) -> pd.DataFrame:
    """Label-averaged posterior at config.times for heterodyne detection at each rate."""
    rates = [float(r) for r in rates]
    if not rates or any(r <= 0 for r in rates):
        raise DomainError("heterodyne rates must be a non-empty list of positive values")

    frames = []
    for rate in rates:
        strategy = Heterodyne(rate=rate, initial_phase=initial_phase)
        swept = config.with_overrides(strategies=((strategy.name(), strategy),))
        summary = average_over_correct_states(run_ensemble(swept, threads=threads))
        summary.insert(0, "rate", rate)
        frames.append(summary)
    return pd.concat(frames, ignore_index=True)[SWEEP_COLUMNS]


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """CSV with header, '.' decimals, UTF-8 and '\\n' line endings"""
    path = Path(path)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path
