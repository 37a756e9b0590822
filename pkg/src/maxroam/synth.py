"""Seeded synthetic multi-task data with controlled relatedness between tasks.

Every task reads the same latent features ``tanh(W x)`` through its own direction
``v_t``; the directions are built so that every pair has cosine ``relatedness``.
Negative relatedness makes the tasks pull shared features in opposing directions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

TASK_KINDS = ("binary", "regression")


class InfeasibleSpecError(ValueError):
    pass


class TaskFamilySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_tasks: int = Field(4, ge=1)
    input_dim: int = Field(16, ge=1)
    latent_dim: int = Field(8, ge=1)
    relatedness: float = Field(0.0, ge=-1.0, le=1.0)
    noise_std: float = Field(0.1, ge=0.0)
    n_train: int = Field(512, ge=1)
    n_val: int = Field(512, ge=1)
    kind: str = "binary"
    seed: int = 0


@dataclass(frozen=True)
class TaskBatch:
    """Shared inputs ``(n, input_dim)`` with one target column per task ``(n, T)``."""

    inputs: np.ndarray
    targets: np.ndarray
    kind: str

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.targets.shape[1]

    def target(self, t: int) -> np.ndarray:
        return self.targets[:, t]

    def take(self, idx) -> TaskBatch:
        return TaskBatch(self.inputs[idx], self.targets[idx], self.kind)


@dataclass(frozen=True)
class Dataset:
    spec: TaskFamilySpec
    train: TaskBatch
    val: TaskBatch
    directions: np.ndarray


def task_directions(n_tasks: int, latent_dim: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors in ``latent_dim`` dimensions with every pairwise cosine equal to ``rho``.

    Factorizes the ``T x T`` Gram matrix ``(1 - rho) I + rho 11^T`` and rotates the
    factor by a random orthogonal matrix.
    """
    T = n_tasks
    gram = (1.0 - rho) * np.eye(T) + rho * np.ones((T, T))
    vals, vecs = np.linalg.eigh(gram)
    if vals.min() < -1e-10:
        raise InfeasibleSpecError(
            f"relatedness {rho} is not achievable for {T} tasks: "
            f"pairwise cosine must be at least {-1.0 / (T - 1):.4f}"
        )
    vals = np.clip(vals, 0.0, None)
    keep = vals > 1e-10
    rank = int(keep.sum())
    if rank > latent_dim:
        raise InfeasibleSpecError(
            f"{T} tasks with relatedness {rho} need {rank} latent dimensions, only {latent_dim} available"
        )
    factor = vecs[:, keep] * np.sqrt(vals[keep])
    padded = np.zeros((T, latent_dim))
    padded[:, :rank] = factor
    q, r = np.linalg.qr(rng.standard_normal((latent_dim, latent_dim)))
    q *= np.sign(np.diag(r))
    dirs = padded @ q.T
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def generate(spec: TaskFamilySpec) -> Dataset:
    if spec.kind not in TASK_KINDS:
        raise InfeasibleSpecError(f"unknown task kind {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    dirs = task_directions(spec.n_tasks, spec.latent_dim, spec.relatedness, rng)
    W = rng.standard_normal((spec.latent_dim, spec.input_dim)) / np.sqrt(spec.input_dim)
    n = spec.n_train + spec.n_val
    x = rng.standard_normal((n, spec.input_dim))
    latent = np.tanh(x @ W.T)
    y = latent @ dirs.T + spec.noise_std * rng.standard_normal((n, spec.n_tasks))
    if spec.kind == "binary":
        y = (y > np.median(y, axis=0)).astype(np.float64)
    order = rng.permutation(n)
    tr, va = order[: spec.n_train], order[spec.n_train:]
    return Dataset(
        spec,
        TaskBatch(x[tr], y[tr], spec.kind),
        TaskBatch(x[va], y[va], spec.kind),
        dirs,
    )


def f_score(logits: np.ndarray, y: np.ndarray) -> float:
    """F1 of the positive class, predicting positive where the logit is above zero."""
    pred = logits > 0.0
    truth = y > 0.5
    tp = float(np.sum(pred & truth))
    fp = float(np.sum(pred & ~truth))
    fn = float(np.sum(~pred & truth))
    if tp == 0.0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def export_csv(dataset: Dataset, path) -> Path:
    """Write ``path`` (CSV) and ``path`` with a ``.json`` suffix holding the spec."""
    path = Path(path)
    d = dataset.spec.input_dim
    T = dataset.spec.n_tasks
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split"] + [f"x{j}" for j in range(d)] + [f"y{t}" for t in range(T)])
        for split, batch in (("train", dataset.train), ("val", dataset.val)):
            for xi, yi in zip(batch.inputs, batch.targets):
                w.writerow([split] + [repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "spec": dataset.spec.model_dump(),
        "directions": dataset.directions.tolist(),
    }, indent=2))
    return sidecar


def import_csv(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    spec = TaskFamilySpec(**meta["spec"])
    d, T = spec.input_dim, spec.n_tasks
    rows = {"train": [], "val": []}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 1 + d + T:
            raise ValueError(f"{path}: expected {1 + d + T} columns, found {len(header)}")
        for row in reader:
            rows[row[0]].append([float(v) for v in row[1:]])
    batches = {}
    for split, data in rows.items():
        a = np.asarray(data, dtype=np.float64).reshape(-1, d + T)
        batches[split] = TaskBatch(a[:, :d], a[:, d:], spec.kind)
    return Dataset(spec, batches["train"], batches["val"], np.asarray(meta["directions"]))
