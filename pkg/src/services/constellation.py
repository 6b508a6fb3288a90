"""
Constellation Service - candidate phases from per-qubit dispersive pulls
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.services.errors import DomainError, UnknownLabelError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_TOLERANCE = 1e-9
MAX_QUBITS = 16
MAX_LISTED = 100
MAX_SHOWN_LABELS = 8

Label = Tuple[int, ...]


def wrap_angle(angle):
    """Reduce angles to the canonical range (-pi, pi]. Works on scalars and arrays.

    Angles already in range are returned unchanged.
    """
    angle = np.asarray(angle, dtype=float)
    in_range = (angle > -math.pi) & (angle <= math.pi)
    wrapped = np.where(in_range, angle, math.pi - np.mod(math.pi - angle, TWO_PI))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def angle_distance(a, b):
    """Shortest circular distance between two angles, in [0, pi]"""
    return np.abs(wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def dispersive_pull(g: float, kappa: float, delta: float) -> float:
    """Phase pull arctan(g^2 / (kappa * delta)) of a detuned qubit on the probe."""
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if delta == 0:
        raise DomainError("delta must be non-zero to compute a dispersive pull")
    return math.atan(g * g / (kappa * delta))


@dataclass(frozen=True)
class QubitPull:
    """One qubit's pull: either (g, kappa, delta) or a directly supplied angle"""

    g: Optional[float] = None
    kappa: Optional[float] = None
    delta: Optional[float] = None
    phi: Optional[float] = None

    def __post_init__(self):
        direct = self.phi is not None
        derived = None not in (self.g, self.kappa, self.delta)
        if direct == derived:
            raise DomainError("QubitPull needs either phi or all of (g, kappa, delta)")
        if direct and not -math.pi / 2 < self.phi < math.pi / 2:
            raise DomainError(f"pull angle {self.phi} outside (-pi/2, pi/2)")

    def angle(self) -> float:
        if self.phi is not None:
            return float(self.phi)
        return dispersive_pull(self.g, self.kappa, self.delta)


@dataclass(frozen=True)
class Constellation:
    """Candidate phases, one per joint qubit sign pattern, plus the probe amplitude."""

    phases: Tuple[float, ...]
    amplitude: float
    labels: Tuple[Label, ...]
    pulls: Tuple[float, ...] = field(default=())

    @property
    def size(self) -> int:
        return len(self.phases)

    @property
    def n_qubits(self) -> int:
        return len(self.labels[0]) if self.labels else 0

    @property
    def phase_array(self) -> np.ndarray:
        return np.asarray(self.phases, dtype=float)

    @property
    def complex_amplitudes(self) -> np.ndarray:
        """alpha_j = alpha * exp(i phi_j)"""
        return self.amplitude * np.exp(1j * self.phase_array)

    def index_of(self, label: Union[Label, int, str]) -> int:
        """Hypothesis index of a label given as sign tuple, index or '+-' string"""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            if 0 <= int(label) < self.size:
                return int(label)
            raise UnknownLabelError(f"hypothesis index {label} out of range 0..{self.size - 1}")
        if isinstance(label, str):
            label = parse_label(label)
        label = tuple(int(s) for s in label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"label {format_label(label)} is not in the constellation")

    def phase_of(self, label: Union[Label, int, str]) -> float:
        return self.phases[self.index_of(label)]

    def with_amplitude(self, amplitude: float) -> "Constellation":
        if amplitude < 0:
            raise DomainError(f"amplitude must be >= 0, got {amplitude}")
        return Constellation(self.phases, float(amplitude), self.labels, self.pulls)

    def default_correct_label(self) -> Label:
        """Label of the smallest-magnitude positive phase (falls back to the smallest magnitude)"""
        phases = self.phase_array
        positive = np.flatnonzero(phases > 0)
        candidates = positive if positive.size else np.arange(self.size)
        # argmin returns the first minimum
        best = candidates[np.argmin(np.abs(phases[candidates]))]
        return self.labels[int(best)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pulls": list(self.pulls),
            "amplitude": self.amplitude,
            "phases": list(self.phases),
            "labels": [format_label(label) for label in self.labels],
        }


def format_label(label: Sequence[int]) -> str:
    return "".join("+" if s > 0 else "-" for s in label)


def parse_label(text: str) -> Label:
    if not text or any(ch not in "+-" for ch in text):
        raise UnknownLabelError(f"label {text!r} must be a string of '+' and '-'")
    return tuple(1 if ch == "+" else -1 for ch in text)


def build_constellation(pulls: Sequence[float], amplitude: float) -> Constellation:
    """All 2^n signed sums of the pulls, labels ordered lexicographically with + first."""
    pulls = [float(p) for p in pulls]
    if not 1 <= len(pulls) <= MAX_QUBITS:
        raise DomainError(f"need between 1 and {MAX_QUBITS} pulls, got {len(pulls)}")
    if amplitude < 0:
        raise DomainError(f"amplitude must be >= 0, got {amplitude}")

    labels = tuple(itertools.product((1, -1), repeat=len(pulls)))
    signs = np.asarray(labels, dtype=float)
    phases = wrap_angle(signs @ np.asarray(pulls))
    return Constellation(
        phases=tuple(float(p) for p in np.atleast_1d(phases)),
        amplitude=float(amplitude),
        labels=labels,
        pulls=tuple(pulls),
    )


@dataclass
class UniquenessReport:
    """Outcome of validate_unique"""

    ok: bool
    tolerance: float
    # groups of labels whose phases coincide, one entry per group
    clusters: List[Tuple[Label, ...]] = field(default_factory=list)
    # label pairs inside the clusters, listed up to MAX_LISTED
    collisions: List[Tuple[Label, Label, float]] = field(default_factory=list)
    n_colliding_pairs: int = 0
    # pulls equal (mod 2pi) to a plain sum of other pulls; informational only
    pull_sum_relations: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)

    def describe(self) -> List[str]:
        lines = []
        if self.ok:
            lines.append(f"ok: all phases distinct (tolerance {self.tolerance:g} rad)")
        else:
            lines.append(
                f"violation: {len(self.clusters)} groups of coinciding phases, "
                f"{self.n_colliding_pairs} colliding label pairs"
            )
        for members in self.clusters[:MAX_LISTED]:
            shown = ", ".join(format_label(label) for label in members[:MAX_SHOWN_LABELS])
            more = f" and {len(members) - MAX_SHOWN_LABELS} more" if len(members) > MAX_SHOWN_LABELS else ""
            lines.append(f"violation: {len(members)} labels share one phase: {shown}{more}")
        if len(self.clusters) > MAX_LISTED:
            lines.append(f"violation: {len(self.clusters) - MAX_LISTED} further groups not listed")
        for pull_index, others in self.pull_sum_relations:
            lines.append(
                f"note: pull {pull_index} equals the sum of pulls {list(others)} (mod 2pi)"
            )
        return lines


def validate_unique(c: Constellation, tol: float = DEFAULT_TOLERANCE) -> UniquenessReport:
    """Check that the signed-sum phases are pairwise distinct modulo 2pi."""
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")

    phases = c.phase_array
    order = np.argsort(phases, kind="stable")
    sorted_phases = phases[order]
    # gap k joins sorted neighbours k and k+1 (the last one wraps around)
    gaps = np.diff(np.append(sorted_phases, sorted_phases[0] + TWO_PI))
    close = gaps <= tol if c.size > 1 else np.zeros(1, dtype=bool)

    parent = list(range(c.size))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k in np.flatnonzero(close):
        a, b = int(order[k]), int(order[(k + 1) % c.size])
        parent[find(a)] = find(b)

    groups: Dict[int, List[int]] = {}
    for i in range(c.size):
        groups.setdefault(find(i), []).append(i)
    members_list = sorted((m for m in groups.values() if len(m) > 1), key=lambda m: m[0])

    pairs = itertools.chain.from_iterable(itertools.combinations(m, 2) for m in members_list)
    collisions = [
        (c.labels[a], c.labels[b], float(angle_distance(phases[a], phases[b])))
        for a, b in itertools.islice(pairs, MAX_LISTED)
    ]
    n_pairs = sum(len(m) * (len(m) - 1) // 2 for m in members_list)

    report = UniquenessReport(
        ok=not members_list,
        tolerance=tol,
        clusters=[tuple(c.labels[i] for i in m) for m in members_list],
        collisions=collisions,
        n_colliding_pairs=n_pairs,
        pull_sum_relations=pull_sum_relations(c.pulls, tol),
    )
    if not report.ok:
        logger.warning(f"Constellation has {len(members_list)} groups of coinciding phases ({n_pairs} label pairs)")
    return report


def pull_sum_relations(
    pulls: Sequence[float],
    tol: float = DEFAULT_TOLERANCE,
    limit: int = MAX_LISTED,
) -> List[Tuple[int, Tuple[int, ...]]]:
    """Pulls equal to a plain sum of some of the other pulls, modulo 2pi.

    Subset sums of the other pulls are built as one array per pull; entry m holds
    the sum over the pulls selected by the bits of m. At most `limit` relations
    are returned, smaller subsets first.
    """
    pulls = np.asarray(pulls, dtype=float)
    relations: List[Tuple[int, Tuple[int, ...]]] = []
    for i in range(pulls.size):
        others = np.delete(np.arange(pulls.size), i)
        sums = np.zeros(1)
        for j in others:
            sums = np.concatenate([sums, sums + pulls[j]])
        masks = np.arange(1, sums.size)
        hits = masks[angle_distance(sums[1:], pulls[i]) <= tol]
        if hits.size == 0:
            continue
        sizes = ((hits[:, None] >> np.arange(others.size)) & 1).sum(axis=1)
        hits = hits[np.lexsort((hits, sizes))][: limit - len(relations)]
        for mask in hits:
            subset = tuple(int(others[b]) for b in range(others.size) if (int(mask) >> b) & 1)
            relations.append((i, subset))
        if len(relations) >= limit:
            break
    return relations
