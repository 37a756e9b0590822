"""Training runs, baselines and parameter sweeps.

Each seed spawns four independent random streams (network init, partitions,
minibatch order, swap selection) so an ablation changes one factor at a time.
One metrics row is logged per epoch; wall-clock times go to the summary only so
that ``metrics.csv`` is byte-reproducible.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from maxroam.harness.config import ExperimentConfig
from maxroam.network import Adam, AdamConfig, MaskedNetwork, task_loss, train_step
from maxroam.partition import InvariantViolation, PartitionSet, RoamingSchedule
from maxroam.selection import make_selector
from maxroam.synth import Dataset, f_score, generate

log = logging.getLogger(__name__)

METRICS_SCHEMA = "# maxroam-metrics v1"
SWEEP_SCHEMA = "# maxroam-sweep v1"
SWEEP_KEYS = ("p", "delta", "target_r", "selection", "mode", "init_mode")


@dataclass
class MetricsRecord:
    seed: int
    epoch: int
    step: int
    train_loss: list[float]
    val_loss: list[float]
    val_f: list[float] | None
    mean_overlap: float | None
    coverage_violations: int | None
    update_ratio: list[float] | None
    wall_clock: float = 0.0

    @property
    def score(self) -> float:
        """Higher is better: mean F-score for binary tasks, negated mean MSE otherwise."""
        if self.val_f is not None:
            return float(np.mean(self.val_f))
        return -float(np.mean(self.val_loss))


@dataclass
class SeedResult:
    seed: int
    records: list[MetricsRecord]
    wall_clock: float

    @property
    def best(self) -> MetricsRecord:
        return max(self.records, key=lambda r: r.score)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: list[SeedResult] = field(default_factory=list)

    @property
    def metrics_csv(self) -> str:
        return metrics_to_csv([r for s in self.seeds for r in s.records], self.config)

    @property
    def summary(self) -> dict:
        return summarize(self)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"metrics": out / "metrics.csv", "summary": out / "summary.json"}
        paths["metrics"].write_text(self.metrics_csv)
        paths["summary"].write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return paths


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_header(T: int, depth: int, binary: bool) -> list[str]:
    cols = ["seed", "epoch", "step"]
    cols += [f"train_loss_{t}" for t in range(T)]
    cols += [f"val_loss_{t}" for t in range(T)]
    if binary:
        cols += [f"val_f_{t}" for t in range(T)]
    cols += ["mean_overlap", "coverage_violations"]
    cols += [f"r_layer_{d}" for d in range(depth)]
    return cols


def metrics_to_csv(records: list[MetricsRecord], config: ExperimentConfig) -> str:
    T, depth = config.n_tasks, len(config.widths)
    binary = config.dataset.kind == "binary"
    buf = io.StringIO()
    buf.write(METRICS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(metrics_header(T, depth, binary))
    for r in records:
        row = [r.seed, r.epoch, r.step] + list(r.train_loss) + list(r.val_loss)
        if binary:
            row += list(r.val_f)
        row += [r.mean_overlap, r.coverage_violations]
        row += list(r.update_ratio) if r.update_ratio is not None else [None] * depth
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_metrics_csv(path_or_text) -> list[dict[str, str]]:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("init", "partition", "data", "selection")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


class _Model:
    """Uniform wrapper over the shared masked network and the per-task STL networks."""

    def __init__(self, config: ExperimentConfig, input_dim: int, rng):
        c = config
        self.config = c
        adam = AdamConfig(lr=c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.eps)
        if c.mode == "stl":
            self.nets = [MaskedNetwork(input_dim, c.widths, 1, rng, c.activation) for _ in range(c.n_tasks)]
        else:
            self.nets = [MaskedNetwork(input_dim, c.widths, c.n_tasks, rng, c.activation)]
        self.opts = [Adam(n.params, adam) for n in self.nets]

    def step(self, x, y, partitions, kind):
        if len(self.nets) == 1:
            return train_step(self.nets[0], x, y, self.opts[0], partitions, kind)
        losses = []
        for t, (net, opt) in enumerate(zip(self.nets, self.opts)):
            losses += train_step(net, x, y[:, t:t + 1], opt, None, kind)
        return losses

    def predict(self, x, t, partitions):
        if len(self.nets) == 1:
            net = self.nets[0]
            masks = None if partitions is None else partitions.masks_for(t)
            return net.forward(x, t, masks)[0]
        return self.nets[t].forward(x, 0)[0]

    def layer_weights(self):
        return [self.nets[0].layer_weights(d) for d in range(self.nets[0].depth)]


def run_seed(config: ExperimentConfig, seed: int, dataset: Dataset | None = None) -> SeedResult:
    c = config
    data = dataset if dataset is not None else generate(c.dataset)
    kind = c.dataset.kind
    T = c.n_tasks
    rng = _streams(seed)
    started = time.perf_counter()

    model = _Model(c, c.dataset.input_dim, rng["init"])
    partitions = None
    stats = None
    if c.mode != "stl":
        stats = PartitionSet.init(c.widths, T, c.effective_p, rng["partition"], mode=c.init_mode)
        # The full-share baseline trains the unmasked network; its all-ones
        # partition only feeds the logged statistics.
        partitions = None if c.mode == "full_share" else stats
    selector = make_selector(c.selection, rng["selection"])

    n = len(data.train)
    ipe = math.ceil(n / c.batch_size)
    schedule = RoamingSchedule(c.delta, c.target_r, ipe)

    records = []
    it = 0
    for epoch in range(1, c.epochs + 1):
        perm = rng["data"].permutation(n)
        for b in range(ipe):
            if c.roaming and schedule.due(it):
                weights = model.layer_weights() if c.selection == "cosine" else None
                outcomes = stats.step(selector, c.target_r, weights)
                if any(not o.complete for row in outcomes for o in row):
                    schedule.steps_applied += 1
                if c.checks == "debug":
                    _check(stats, epoch, it)
            idx = perm[b * c.batch_size:(b + 1) * c.batch_size]
            model.step(data.train.inputs[idx], data.train.targets[idx], partitions, kind)
            it += 1
        if stats is not None:
            _check(stats, epoch, it)
        records.append(_evaluate(model, data, partitions, stats, kind, seed, epoch, schedule.steps_applied,
                                 time.perf_counter() - started))
    return SeedResult(seed, records, time.perf_counter() - started)


def _check(stats: PartitionSet, epoch: int, it: int) -> None:
    try:
        stats.check_invariants()
    except InvariantViolation as exc:
        raise InvariantViolation(f"epoch {epoch}, iteration {it}: {exc}") from exc


def _evaluate(model, data, partitions, stats, kind, seed, epoch, step, wall) -> MetricsRecord:
    T = data.train.n_tasks
    train_loss, val_loss, val_f = [], [], []
    for t in range(T):
        pred = model.predict(data.train.inputs, t, partitions)
        train_loss.append(task_loss(pred, data.train.target(t), kind)[0])
        pred = model.predict(data.val.inputs, t, partitions)
        val_loss.append(task_loss(pred, data.val.target(t), kind)[0])
        if kind == "binary":
            val_f.append(f_score(pred, data.val.target(t)))
    return MetricsRecord(
        seed=seed,
        epoch=epoch,
        step=step,
        train_loss=train_loss,
        val_loss=val_loss,
        val_f=val_f if kind == "binary" else None,
        mean_overlap=None if stats is None else stats.mean_overlap(),
        coverage_violations=None if stats is None else stats.coverage_violations(),
        update_ratio=None if stats is None else stats.update_ratios(),
        wall_clock=wall,
    )


def run_experiment(config: ExperimentConfig, out_dir=None, seeds=None) -> ExperimentResult:
    """Train every seed of ``config``; write ``metrics.csv`` and ``summary.json`` if ``out_dir``."""
    if seeds is not None:
        config = config.model_copy(update={"seeds": list(seeds)})
    data = generate(config.dataset)
    result = ExperimentResult(config)
    for seed in config.seeds:
        result.seeds.append(run_seed(config, seed, data))
    if out_dir is not None:
        result.write(out_dir)
    return result


def _mean_std(xs) -> tuple[float, float]:
    a = np.asarray(xs, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def summarize(result: ExperimentResult) -> dict:
    c = result.config
    binary = c.dataset.kind == "binary"
    metric = "val_f" if binary else "val_loss"
    per_seed = []
    for s in result.seeds:
        b = s.best
        per_task = b.val_f if binary else b.val_loss
        per_seed.append({
            "seed": s.seed,
            "best_epoch": b.epoch,
            "score": b.score,
            "per_task": list(per_task),
            "final_update_ratio": s.records[-1].update_ratio,
            "final_mean_overlap": s.records[-1].mean_overlap,
        })
    scores = [r["score"] for r in per_seed]
    tasks = np.array([r["per_task"] for r in per_seed])
    mean, std = _mean_std(scores)
    return {
        "config": c.model_dump(),
        "metric": metric,
        "selection_rule": "epoch with best mean validation score",
        "per_seed": per_seed,
        "score_mean": mean,
        "score_std": std,
        "per_task_mean": tasks.mean(axis=0).tolist(),
        "per_task_std": (tasks.std(axis=0, ddof=1) if len(per_seed) > 1 else np.zeros(tasks.shape[1])).tolist(),
        "wall_clock": {str(s.seed): s.wall_clock for s in result.seeds},
    }


def _cells(grid: dict[str, list]) -> list[dict]:
    if not grid:
        raise ValueError("sweep grid is empty")
    for k, vals in grid.items():
        if k not in SWEEP_KEYS:
            raise ValueError(f"cannot sweep {k!r}; sweepable keys are {SWEEP_KEYS}")
        if not vals:
            raise ValueError(f"sweep axis {k!r} has no values")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _cell_tag(cell: dict) -> str:
    return "_".join(f"{k}-{v}" for k, v in cell.items())


def _run_cell(args):
    config, cell, out_dir = args
    try:
        cfg = config.model_copy(update=cell)
        cfg = ExperimentConfig(**cfg.model_dump())
        result = run_experiment(cfg, None if out_dir is None else Path(out_dir) / "cells" / _cell_tag(cell))
        return cell, [(s.seed, s.best, None) for s in result.seeds]
    except Exception as exc:  # a failed cell is recorded, the sweep goes on
        log.exception("sweep cell %s failed", cell)
        return cell, [(seed, None, f"{type(exc).__name__}: {exc}") for seed in config.seeds]


@dataclass
class SweepResult:
    keys: list[str]
    rows: list[dict]

    @property
    def failed(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)

    @property
    def csv(self) -> str:
        buf = io.StringIO()
        buf.write(SWEEP_SCHEMA + "\n")
        cols = self.keys + ["seed", "status", "best_epoch", "score"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()

    def aggregate(self) -> list[dict]:
        groups: dict[tuple, list[float]] = {}
        for r in self.rows:
            key = tuple(r[k] for k in self.keys)
            groups.setdefault(key, [])
            if r["status"] == "ok":
                groups[key].append(r["score"])
        out = []
        for key, scores in groups.items():
            row = dict(zip(self.keys, key))
            row["n"] = len(scores)
            if scores:
                row["score_mean"], row["score_std"] = _mean_std(scores)
            out.append(row)
        return out

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"sweep": out / "sweep.csv", "aggregate": out / "sweep_summary.json"}
        paths["sweep"].write_text(self.csv)
        paths["aggregate"].write_text(json.dumps(self.aggregate(), indent=2) + "\n")
        return paths


def sweep(config: ExperimentConfig, grid: dict[str, list], out_dir=None, workers: int = 1) -> SweepResult:
    """Run every grid cell for every seed; cell failures become rows with an error status."""
    cells = _cells(grid)
    jobs = [(config, cell, out_dir) for cell in cells]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(j) for j in jobs]
    rows = []
    for cell, seeds in outcomes:
        for seed, best, err in seeds:
            row = dict(cell)
            row.update(seed=seed, status="ok" if err is None else err,
                       best_epoch=None if best is None else best.epoch,
                       score=None if best is None else best.score)
            rows.append(row)
    result = SweepResult(list(grid), rows)
    if out_dir is not None:
        result.write(out_dir)
    return result


def read_sweep_csv(path_or_text) -> list[dict[str, str]]:
    return read_metrics_csv(path_or_text)
