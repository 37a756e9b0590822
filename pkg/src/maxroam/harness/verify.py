"""Exact and Monte Carlo checks of the update plan's guarantees.

Every check yields one report entry: property, parameters, measured value,
tolerance and verdict.  Failures are entries, never exceptions.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from maxroam.partition import (
    PartitionSet,
    RoamingSchedule,
    apply_update_step,
    ceil_tol,
    exact_count,
    init_partition,
    plan_duration,
    update_ratio,
    visit_probability,
)
from maxroam.selection import UniformSelector


@dataclass
class Check:
    property: str
    params: dict
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass
class Report:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [dict(asdict(c), verdict=c.verdict) for c in self.checks],
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    def lines(self) -> list[str]:
        return [
            f"{c.verdict}  {c.property}  {c.params}  measured={c.measured:.6g}  tol={c.tolerance:g}"
            for c in self.checks
        ]


def plan_exactness(n_configs: int = 100, seed: int = 0, max_S: int = 50, max_T: int = 5,
                   p_grid=(0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)) -> Check:
    """Random exact-count layers: each task completes in exactly ``S - |B_t(0)|`` swaps
    and keeps its partition size after every swap."""
    rng = np.random.default_rng(seed)
    worst = 0
    failures = []
    for k in range(n_configs):
        p = float(rng.choice(p_grid))
        S = int(rng.integers(max(3, int(np.ceil(0.5 / p))), max_S + 1))
        T = int(rng.integers(1, max_T + 1))
        layer = init_partition(S, T, p, rng, mode="exact")
        sizes = layer.active_sizes().copy()
        expected = S - layer.visited.sum(axis=0)
        selector = UniformSelector(rng)
        for t in range(T):
            steps = 0
            prev_visited = layer.visited[:, t].copy()
            while not apply_update_step(layer, t, selector).complete:
                steps += 1
                if layer.mask[:, t].sum() != sizes[t]:
                    failures.append(f"config {k}: size of task {t} changed at step {steps}")
                if (prev_visited & ~layer.visited[:, t]).any():
                    failures.append(f"config {k}: visited set of task {t} shrank")
                prev_visited = layer.visited[:, t].copy()
                if steps > S:
                    break
            worst = max(worst, abs(steps - int(expected[t])))
            if steps != expected[t]:
                failures.append(f"config {k}: task {t} took {steps} swaps, expected {expected[t]}")
        try:
            layer.check_invariants(sizes)
        except AssertionError as exc:
            failures.append(f"config {k}: {exc}")
    return Check(
        "plan length equals S - |B_t(0)| and partition size is constant",
        {"configs": n_configs, "seed": seed},
        float(worst), 0.0, not failures, "; ".join(failures[:5]),
    )


def simulate_uniform(S: int, T: int, p: float, runs: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Mean mask and mean visited fraction over ``runs`` exact-count layers, per step.

    Returns ``mask_mean`` of shape ``(n + 1, S, T)`` and ``visited_frac`` of shape
    ``(n + 1, T)``, where ``n = S - round(p S)`` is the plan length.
    """
    k = exact_count(S, p)
    n = S - k
    rng = np.random.default_rng(seed)
    selector = UniformSelector(rng)
    mask_sum = np.zeros((n + 1, S, T))
    visited_sum = np.zeros((n + 1, T))
    for _ in range(runs):
        layer = init_partition(S, T, p, rng, mode="exact")
        mask_sum[0] += layer.mask
        visited_sum[0] += layer.visited.sum(axis=0)
        for c in range(1, n + 1):
            for t in range(T):
                apply_update_step(layer, t, selector)
            mask_sum[c] += layer.mask
            visited_sum[c] += layer.visited.sum(axis=0)
    return {"mask_mean": mask_sum / runs, "visited_frac": visited_sum / (runs * S), "plan_length": n}


def constant_sharing(S: int, T: int, p: float, runs: int, seed: int = 0, tol: float = 0.02,
                     sim: dict | None = None) -> Check:
    sim = sim or simulate_uniform(S, T, p, runs, seed)
    dev = float(np.max(np.abs(sim["mask_mean"] - p))) if p < 1.0 else 0.0
    return Check(
        "mean of m_it(c) stays at p for every channel, task and step",
        {"S": S, "T": T, "p": p, "runs": runs, "seed": seed},
        dev, tol, dev < tol,
    )


def visit_trajectory(S: int, T: int, p: float, runs: int, seed: int = 0, tol: float = 0.02,
                     sim: dict | None = None) -> Check:
    sim = sim or simulate_uniform(S, T, p, runs, seed)
    n = sim["plan_length"]
    dev = 0.0
    for c in range(n + 1):
        r = 1.0 if p >= 1.0 else min(1.0, c / ((1.0 - p) * S))
        dev = max(dev, float(np.max(np.abs(sim["visited_frac"][c] - visit_probability(p, r)))))
    return Check(
        "visited fraction tracks p + (1 - p) r(c)",
        {"S": S, "T": T, "p": p, "runs": runs, "seed": seed},
        dev, tol, dev < tol,
    )


def scheduled_duration(widths, T: int, p: float, delta: float, iterations_per_epoch: int = 100,
                       seed: int = 0) -> Check:
    """Drive the schedule until every layer completes and compare with the closed form."""
    rng = np.random.default_rng(seed)
    parts = PartitionSet.init(widths, T, p, rng, mode="exact")
    schedule = RoamingSchedule(delta, 1.0, iterations_per_epoch)
    selector = UniformSelector(rng)
    step_delta = schedule.interval / iterations_per_epoch
    longest = max(int(layer.plan_lengths().max()) for layer in parts.layers)
    it = 0
    limit = (max(widths) + 2) * schedule.interval
    while not parts.complete and it <= limit:
        it += 1
        if schedule.due(it):
            parts.step(selector)
            schedule.steps_applied += 1
    measured = schedule.epoch_of(it)
    bound = plan_duration(parts, p, step_delta)
    err = abs(measured - step_delta * longest)
    return Check(
        "plan finishes after delta times the longest plan, within delta * ceil((1 - p) S_max)",
        {"widths": list(widths), "p": p, "delta": delta, "bound": bound},
        err, 1e-9, parts.complete and err <= 1e-9 and measured <= bound + 1e-9,
    )


def ten_channel_replay(seed: int = 0) -> Check:
    """Ten channels, two tasks, p = 0.6: both tasks have visited everything after four steps."""
    rng = np.random.default_rng(seed)
    layer = init_partition(10, 2, 0.6, rng, mode="exact")
    parts = PartitionSet([layer], 0.6)
    selector = UniformSelector(rng)
    steps = 0
    while not layer.complete and steps < 10:
        parts.step(selector)
        steps += 1
    r = update_ratio(layer, 0.6)
    ok = layer.complete and steps == 4 and r == 1.0
    return Check("ten-channel two-task plan completes in four steps",
                 {"S": 10, "T": 2, "p": 0.6, "seed": seed}, float(steps), 0.0, ok)


def verify(S: int = 20, T: int = 3, p_list=(0.3, 0.5, 0.7), runs: int = 10_000, seed: int = 0,
           tol: float = 0.02) -> Report:
    if runs < 1000:
        raise ValueError("statistical checks need at least 1000 runs")
    report = Report()
    report.checks.append(plan_exactness(seed=seed))
    report.checks.append(ten_channel_replay(seed))
    for i, p in enumerate(p_list):
        started = time.perf_counter()
        if exact_count(S, p) == 0:
            report.checks.append(Check("exact-count initialization is possible", {"S": S, "p": p},
                                       0.0, 0.0, False, "round(p S) is zero"))
            continue
        sim = simulate_uniform(S, T, p, runs, seed + i)
        for check in (constant_sharing(S, T, p, runs, seed + i, tol, sim),
                      visit_trajectory(S, T, p, runs, seed + i, tol, sim)):
            check.detail = f"{time.perf_counter() - started:.1f}s"
            report.checks.append(check)
        report.checks.append(scheduled_duration([S, max(1, S // 2)], T, p, 0.1, seed=seed + i))
    return report


def plan_steps(S_max: int, p: float) -> int:
    return 0 if p >= 1.0 else ceil_tol((1.0 - p) * S_max)
