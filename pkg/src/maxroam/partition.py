"""Binary task partitions over the channels of a layer, and their roaming update plan.

A layer with ``S`` maskable channels shared by ``T`` tasks carries an ``(S, T)``
boolean matrix ``mask``; ``mask[i, t]`` is true when channel ``i`` is used by
task ``t``.  ``visited[i, t]`` records whether task ``t`` has ever used ``i``.
Each update step moves one channel out of a task's active set and brings in one
channel the task has never visited, so a task's active-set size never changes
and its visited set grows by exactly one per step until it covers the layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from maxroam.selection import SelectionError

INIT_MODES = ("bernoulli", "exact")

# Tolerance for products like 0.4 * 10 that land a hair above an integer.
_EPS = 1e-9


class PartitionError(ValueError):
    """Raised for configurations that cannot be partitioned."""


class InvariantViolation(AssertionError):
    """A partition invariant failed; the message names it."""


def ceil_tol(x: float) -> int:
    return int(math.ceil(x - _EPS))


def exact_count(S: int, p: float) -> int:
    """Per-task channel count used by exact-count initialization (round half up)."""
    return int(math.floor(p * S + 0.5))


@dataclass(frozen=True)
class UpdateOutcome:
    i_minus: int | None = None
    i_plus: int | None = None

    @property
    def complete(self) -> bool:
        return self.i_plus is None


COMPLETE = UpdateOutcome()


@dataclass
class LayerPartition:
    S: int
    T: int
    mask: np.ndarray
    visited: np.ndarray
    task_steps: np.ndarray
    index: int = 0

    @property
    def steps_done(self) -> int:
        """Update steps applied to this layer (the busiest task's count)."""
        return int(self.task_steps.max()) if self.T else 0

    def active(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.mask[:, t])

    def unvisited(self, t: int) -> np.ndarray:
        return np.flatnonzero(~self.visited[:, t])

    def active_sizes(self) -> np.ndarray:
        return self.mask.sum(axis=0)

    def initial_visited_sizes(self) -> np.ndarray:
        """``|B_t(0)|``, recovered from the visited sets and swap counters."""
        return self.visited.sum(axis=0) - self.task_steps

    def plan_lengths(self) -> np.ndarray:
        """Swaps each task needs to visit every channel, ``S - |B_t(0)|``."""
        return self.S - self.initial_visited_sizes()

    def task_complete(self, t: int) -> bool:
        return bool(self.visited[:, t].all())

    @property
    def complete(self) -> bool:
        return bool(self.visited.all())

    def coverage_violations(self) -> int:
        """Channels currently used by no task."""
        return int((~self.mask.any(axis=1)).sum())

    def copy(self) -> LayerPartition:
        return LayerPartition(
            self.S, self.T, self.mask.copy(), self.visited.copy(),
            self.task_steps.copy(), self.index,
        )

    def check_invariants(self, initial_sizes: np.ndarray | None = None) -> None:
        """Raise :class:`InvariantViolation` naming the first broken invariant.

        ``initial_sizes`` are the active-set sizes at initialization; when given,
        constancy of the partition sizes is checked against them.
        """
        if (self.mask & ~self.visited).any():
            raise InvariantViolation(f"layer {self.index}: active set not contained in visited set")
        if initial_sizes is None:
            return
        if not np.array_equal(self.active_sizes(), initial_sizes):
            raise InvariantViolation(
                f"layer {self.index}: partition size changed "
                f"({initial_sizes.tolist()} -> {self.active_sizes().tolist()})"
            )
        # B_t(0) = A_t(0) and each swap adds exactly one unvisited channel.
        if not np.array_equal(self.visited.sum(axis=0), initial_sizes + self.task_steps):
            raise InvariantViolation(
                f"layer {self.index}: visited-set growth does not match update counters"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer": self.index,
            "S": self.S,
            "T": self.T,
            "mask": [self.active(t).tolist() for t in range(self.T)],
            "visited": [np.flatnonzero(self.visited[:, t]).tolist() for t in range(self.T)],
            "steps_done": self.steps_done,
            "task_steps": self.task_steps.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LayerPartition:
        S, T = int(d["S"]), int(d["T"])
        mask = np.zeros((S, T), dtype=bool)
        visited = np.zeros((S, T), dtype=bool)
        for t in range(T):
            mask[d["mask"][t], t] = True
            visited[d["visited"][t], t] = True
        # Older snapshots only carry the layer counter.
        steps = d.get("task_steps", [d["steps_done"]] * T)
        return cls(S, T, mask, visited, np.asarray(steps, dtype=np.int64), int(d.get("layer", 0)))


def init_partition(
    S: int,
    T: int,
    p: float,
    rng: np.random.Generator,
    mode: str = "bernoulli",
    index: int = 0,
) -> LayerPartition:
    """Draw an initial partition with sharing ratio ``p``.

    ``bernoulli`` draws every bit i.i.d. with probability ``p`` and gives any
    channel left without a task to one task drawn uniformly.  ``exact`` gives
    every task exactly ``round(p * S)`` channels sampled without replacement and
    does not repair coverage, which keeps partition sizes exactly ``p * S``.
    """
    if S < 1 or T < 1:
        raise PartitionError(f"degenerate layer: S={S}, T={T}")
    if not 0.0 <= p <= 1.0:
        raise PartitionError(f"sharing ratio must lie in [0, 1], got {p}")
    if mode == "bernoulli":
        if p == 0.0 and T > S:
            raise PartitionError(
                f"disjoint partitioning of {S} channels cannot give each of {T} tasks a channel"
            )
        mask = rng.random((S, T)) < p
        orphans = np.flatnonzero(~mask.any(axis=1))
        if orphans.size:
            mask[orphans, rng.integers(T, size=orphans.size)] = True
    elif mode == "exact":
        k = exact_count(S, p)
        if k == 0:
            raise PartitionError(f"p={p} gives an empty partition for S={S}")
        mask = np.zeros((S, T), dtype=bool)
        for t in range(T):
            mask[rng.choice(S, size=k, replace=False), t] = True
    else:
        raise PartitionError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    empty = np.flatnonzero(~mask.any(axis=0))
    if empty.size:
        raise PartitionError(
            f"layer {index}: tasks {empty.tolist()} drew no channels (S={S}, p={p}); "
            "use a wider layer or a larger sharing ratio"
        )
    return LayerPartition(S, T, mask, mask.copy(), np.zeros(T, dtype=np.int64), index)


def apply_update_step(partition: LayerPartition, task: int, selector, weights=None) -> UpdateOutcome:
    """Swap one active channel of ``task`` for one it has never visited.

    Returns :data:`COMPLETE` and leaves the partition untouched once the task has
    visited every channel.  Selector failures propagate.
    """
    if not 0 <= task < partition.T:
        raise IndexError(f"task {task} out of range for T={partition.T}")
    candidates = partition.unvisited(task)
    if candidates.size == 0:
        return COMPLETE
    active = partition.active(task)
    if active.size == 0:
        raise SelectionError(
            f"layer {partition.index}: task {task} has an empty partition, nothing to swap out"
        )
    i_minus, i_plus = selector.select(active, candidates, weights)
    partition.mask[i_minus, task] = False
    partition.mask[i_plus, task] = True
    partition.visited[i_plus, task] = True
    partition.task_steps[task] += 1
    return UpdateOutcome(int(i_minus), int(i_plus))


def update_ratio(partition: LayerPartition, p: float) -> float:
    """Completion rate ``c / ((1 - p) S)`` of the layer's plan, capped at 1."""
    if p >= 1.0:
        return 1.0
    return min(1.0, partition.steps_done / ((1.0 - p) * partition.S))


def task_update_ratio(partition: LayerPartition, t: int) -> float:
    """Completion rate of one task's own plan, ``steps / (S - |B_t(0)|)``."""
    n = int(partition.plan_lengths()[t])
    return 1.0 if n == 0 else min(1.0, partition.task_steps[t] / n)


def visit_probability(p: float, r: float) -> float:
    """Probability that a channel has been used by a task: ``p + (1 - p) r``."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ValueError(f"p and r must lie in [0, 1], got p={p}, r={r}")
    return p + (1.0 - p) * r


def overlap_matrix(partition: LayerPartition) -> np.ndarray:
    """``T x T`` counts of channels shared by each pair of tasks."""
    m = partition.mask.astype(np.int64)
    return m.T @ m


def mean_overlap_fraction(partition: LayerPartition) -> float:
    """Mean pairwise overlap over distinct task pairs, as a fraction of ``S``."""
    ov = overlap_matrix(partition)
    T = partition.T
    if T < 2:
        return float(ov[0, 0]) / partition.S
    off = ov[~np.eye(T, dtype=bool)]
    return float(off.mean()) / partition.S


@dataclass
class PartitionSet:
    layers: list[LayerPartition]
    p: float
    initial_sizes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise PartitionError("a partition set needs at least one layer")
        Ts = {layer.T for layer in self.layers}
        if len(Ts) != 1:
            raise PartitionError(f"layers disagree on the number of tasks: {sorted(Ts)}")
        if not self.initial_sizes:
            self.initial_sizes = [layer.active_sizes() for layer in self.layers]

    @classmethod
    def init(cls, widths: Sequence[int], T: int, p: float, rng, mode: str = "bernoulli") -> PartitionSet:
        layers = [init_partition(S, T, p, rng, mode=mode, index=d) for d, S in enumerate(widths)]
        return cls(layers, p)

    @property
    def T(self) -> int:
        return self.layers[0].T

    @property
    def S_max(self) -> int:
        return max(layer.S for layer in self.layers)

    @property
    def widths(self) -> list[int]:
        return [layer.S for layer in self.layers]

    @property
    def complete(self) -> bool:
        return all(layer.complete for layer in self.layers)

    def step(self, selector, target_r: float = 1.0, weights: Sequence[np.ndarray] | None = None) -> list[list[UpdateOutcome]]:
        """Apply one update step to every layer: one swap per task not yet at ``target_r``.

        A task stops once it has made ``ceil(target_r * (S - |B_t(0)|))`` swaps;
        complete tasks and layers are skipped.  Returns per-layer, per-task outcomes.
        """
        out = []
        for d, layer in enumerate(self.layers):
            budgets = np.array([ceil_tol(target_r * n) for n in layer.plan_lengths()])
            w = None if weights is None else weights[d]
            row = []
            for t in range(layer.T):
                if layer.task_steps[t] >= budgets[t]:
                    row.append(COMPLETE)
                    continue
                row.append(apply_update_step(layer, t, selector, w))
            out.append(row)
        return out

    def check_invariants(self) -> None:
        for layer, sizes in zip(self.layers, self.initial_sizes):
            layer.check_invariants(sizes)

    def coverage_violations(self) -> int:
        return sum(layer.coverage_violations() for layer in self.layers)

    def mean_overlap(self) -> float:
        return float(np.mean([mean_overlap_fraction(layer) for layer in self.layers]))

    def update_ratios(self) -> list[float]:
        return [update_ratio(layer, self.p) for layer in self.layers]

    def masks_for(self, t: int) -> list[np.ndarray]:
        return [layer.mask[:, t] for layer in self.layers]

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "layers": [layer.to_dict() for layer in self.layers],
            "initial_sizes": [s.tolist() for s in self.initial_sizes],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PartitionSet:
        layers = [LayerPartition.from_dict(x) for x in d["layers"]]
        sizes = [np.asarray(s, dtype=np.int64) for s in d.get("initial_sizes", [])]
        return cls(layers, float(d["p"]), sizes)


def plan_duration(partition_set: PartitionSet, p: float, delta: float) -> float:
    """Epochs until every layer's plan completes: ``delta * ceil((1 - p) S_max)``."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if p >= 1.0:
        return 0.0
    return delta * max(ceil_tol((1.0 - p) * S) for S in partition_set.widths)


@dataclass
class RoamingSchedule:
    """Clock that fires an update each time ``floor(elapsed_epochs / delta)`` increments.

    ``delta`` is converted once to a whole number of optimizer iterations.
    """

    delta: float
    target_r: float = 1.0
    iterations_per_epoch: int = 1
    steps_applied: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not 0.0 <= self.target_r <= 1.0:
            raise ValueError(f"target_r must lie in [0, 1], got {self.target_r}")
        if self.iterations_per_epoch < 1:
            raise ValueError("iterations_per_epoch must be >= 1")

    @property
    def interval(self) -> int:
        return max(1, int(math.floor(self.delta * self.iterations_per_epoch + _EPS)))

    def due(self, iteration: int) -> bool:
        """Whether an update fires before optimizer iteration ``iteration`` (0-based)."""
        return iteration > 0 and iteration % self.interval == 0

    def epoch_of(self, iteration: int) -> float:
        return iteration / self.iterations_per_epoch
