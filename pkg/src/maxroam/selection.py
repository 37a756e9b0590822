"""Strategies picking the swap pair ``(i_minus, i_plus)`` for one task's update.

``i_minus`` leaves the task's active set; ``i_plus`` enters it from the channels
the task has never visited.  Channel weight vectors for the cosine rule are the
rows of a layer's weight matrix (the channel's incoming weights, bias excluded).
"""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

SELECTION_KINDS = ("uniform", "cosine")


class SelectionError(ValueError):
    pass


def cosine_similarity(u, v) -> float:
    u = np.ravel(np.asarray(u, dtype=np.float64))
    v = np.ravel(np.asarray(v, dtype=np.float64))
    if u.shape != v.shape:
        raise SelectionError(f"length mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def cosine_matrix(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise cosine similarities of the rows of ``weights``.

    Rows with zero norm get similarity 0 against everything.  Also returns the
    boolean mask of zero-norm rows.
    """
    W = np.asarray(weights, dtype=np.float64).reshape(len(weights), -1)
    norms = np.linalg.norm(W, axis=1)
    zero = norms == 0.0
    unit = np.divide(W, norms[:, None], out=np.zeros_like(W), where=~zero[:, None])
    sim = unit @ unit.T
    # BLAS does not guarantee sim[i, j] == sim[j, i] bitwise; exact symmetry keeps ties exact.
    return (sim + sim.T) / 2.0, zero


def uniform_select(active, candidates, rng: np.random.Generator) -> tuple[int, int] | None:
    """Draw ``i_minus`` uniformly from ``active`` and ``i_plus`` from ``candidates``.

    Returns None when ``candidates`` is empty (the task's plan is complete).
    """
    active = np.asarray(active)
    candidates = np.asarray(candidates)
    if candidates.size == 0:
        return None
    if active.size == 0:
        raise SelectionError("empty active set: the sharing ratio leaves this task no channels")
    i_minus = active[rng.integers(active.size)]
    i_plus = candidates[rng.integers(candidates.size)]
    return int(i_minus), int(i_plus)


def cosine_select(active, candidates, weights) -> tuple[int, int] | None:
    """Deterministic pair from summed cosine similarity, ties to the lowest index.

    ``i_minus`` minimizes the summed similarity to the rest of the active set and
    ``i_plus`` maximizes the summed similarity to the whole active set.
    """
    active = np.sort(np.asarray(active))
    candidates = np.sort(np.asarray(candidates))
    if candidates.size == 0:
        return None
    if active.size == 0:
        raise SelectionError("empty active set: the sharing ratio leaves this task no channels")
    if weights is None:
        raise SelectionError("cosine selection needs the layer's weight matrix")
    weights = np.asarray(weights)
    if weights.shape[0] <= max(active.max(), candidates.max()):
        raise SelectionError(
            f"weight matrix has {weights.shape[0]} rows, fewer than the channel indices used"
        )
    sim, zero = cosine_matrix(weights)
    if zero[active].any() or zero[candidates].any():
        log.warning("zero-norm channel weights %s treated as orthogonal",
                    np.flatnonzero(zero).tolist())
    within = sim[np.ix_(active, active)]
    np.fill_diagonal(within, 0.0)
    minus_scores = within.sum(axis=1)
    plus_scores = sim[np.ix_(candidates, active)].sum(axis=1)
    # argmin/argmax return the first hit; index arrays are sorted ascending.
    return int(active[np.argmin(minus_scores)]), int(candidates[np.argmax(plus_scores)])


class UniformSelector:
    kind = "uniform"

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def select(self, active, candidates, weights=None):
        pair = uniform_select(active, candidates, self.rng)
        if pair is None:
            raise SelectionError("no unvisited candidates")
        return pair


class CosineSelector:
    kind = "cosine"

    def select(self, active, candidates, weights=None):
        pair = cosine_select(active, candidates, weights)
        if pair is None:
            raise SelectionError("no unvisited candidates")
        return pair


def make_selector(kind: str, rng: np.random.Generator | None = None):
    if kind == "uniform":
        if rng is None:
            raise SelectionError("uniform selection needs a random generator")
        return UniformSelector(rng)
    if kind == "cosine":
        return CosineSelector()
    raise SelectionError(f"unknown selection kind {kind!r}; expected one of {SELECTION_KINDS}")
