import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxroam.partition import (
    COMPLETE,
    InvariantViolation,
    LayerPartition,
    PartitionError,
    PartitionSet,
    RoamingSchedule,
    apply_update_step,
    init_partition,
    overlap_matrix,
    plan_duration,
    task_update_ratio,
    update_ratio,
    visit_probability,
)
from maxroam.selection import SelectionError, UniformSelector


def rng(seed=0):
    return np.random.default_rng(seed)


def run_plan(layer, selector, t):
    steps = 0
    while not apply_update_step(layer, t, selector).complete:
        steps += 1
    return steps


# -- initialization ---------------------------------------------------------


def test_full_sharing_sets_every_bit():
    layer = init_partition(10, 2, 1.0, rng())
    assert layer.mask.all()
    assert layer.active_sizes().tolist() == [10, 10]


def test_disjoint_gives_each_channel_one_task():
    for seed in range(20):
        layer = init_partition(10, 2, 0.0, rng(seed))
        assert (layer.mask.sum(axis=1) == 1).all()


def test_disjoint_rejects_more_tasks_than_channels():
    with pytest.raises(PartitionError):
        init_partition(3, 4, 0.0, rng())


@pytest.mark.parametrize("S,T", [(0, 2), (5, 0)])
def test_degenerate_layer_rejected(S, T):
    with pytest.raises(PartitionError):
        init_partition(S, T, 0.5, rng())


def test_unknown_mode_rejected():
    with pytest.raises(PartitionError):
        init_partition(5, 2, 0.5, rng(), mode="banana")


def test_coverage_holds_at_init():
    g = rng(1)
    for _ in range(200):
        layer = init_partition(10, 2, 0.6, g)
        assert layer.mask.any(axis=1).all()
        assert np.array_equal(layer.mask, layer.visited)
        assert layer.steps_done == 0


def test_bernoulli_partition_size_matches_sampling_oracle():
    # Oracle: sample the Bernoulli bits directly and apply the orphan rule by hand.
    S, T, p, n = 10, 2, 0.6, 20_000
    g = rng(7)
    oracle = []
    for _ in range(n):
        bits = g.random((S, T)) < p
        for i in range(S):
            if not bits[i].any():
                bits[i, g.integers(T)] = True
        oracle.append(bits.sum(axis=0))
    oracle_mean = np.mean(oracle)
    # Closed form with the orphan rule: S * (p + (1 - p)^T / T) = 6.8.
    assert oracle_mean == pytest.approx(S * (p + (1 - p) ** T / T), abs=0.05)

    g = rng(8)
    sizes = [init_partition(S, T, p, g).active_sizes() for _ in range(n)]
    assert np.mean(sizes) == pytest.approx(oracle_mean, abs=0.05)
    # Before the orphan rule the expected size is p * S = 6.
    raw = [(rng(s).random((S, T)) < p).sum(axis=0) for s in range(2000)]
    assert np.mean(raw) == pytest.approx(p * S, abs=0.1)


def test_task_without_channels_rejected():
    # Three tasks over four channels at p = 0.05 almost surely leave one task empty.
    with pytest.raises(PartitionError, match="drew no channels"):
        for seed in range(50):
            init_partition(4, 3, 0.05, rng(seed))


def test_exact_mode_assigns_round_p_s():
    layer = init_partition(20, 3, 0.3, rng(), mode="exact")
    assert layer.active_sizes().tolist() == [6, 6, 6]
    with pytest.raises(PartitionError):
        init_partition(4, 2, 0.1, rng(), mode="exact")


# -- update step ------------------------------------------------------------


def test_ten_channel_replay():
    layer = init_partition(10, 2, 0.6, rng(3), mode="exact")
    parts = PartitionSet([layer], 0.6)
    sel = UniformSelector(rng(4))
    for _ in range(4):
        parts.step(sel)
    assert layer.visited.all()
    assert layer.steps_done == 4
    assert update_ratio(layer, 0.6) == 1.0


def test_exhausted_plan_returns_complete_and_changes_nothing():
    layer = init_partition(6, 2, 1.0, rng())
    before = layer.mask.copy()
    out = apply_update_step(layer, 0, UniformSelector(rng()))
    assert out is COMPLETE and out.complete
    assert np.array_equal(layer.mask, before)
    assert layer.steps_done == 0


def test_single_swap_moves_exactly_two_bits():
    layer = init_partition(12, 3, 0.5, rng(5))
    before = layer.copy()
    sizes = layer.active_sizes().copy()
    out = apply_update_step(layer, 1, UniformSelector(rng(6)))
    assert not out.complete
    assert before.mask[out.i_minus, 1] and not layer.mask[out.i_minus, 1]
    assert not before.visited[out.i_plus, 1] and layer.mask[out.i_plus, 1] and layer.visited[out.i_plus, 1]
    diff = before.mask != layer.mask
    assert diff.sum() == 2 and diff[:, 1].sum() == 2
    assert np.array_equal(layer.active_sizes(), sizes)
    assert layer.task_steps.tolist() == [0, 1, 0]


def test_task_out_of_range():
    layer = init_partition(5, 2, 0.5, rng())
    with pytest.raises(IndexError):
        apply_update_step(layer, 2, UniformSelector(rng()))


def test_selector_failure_is_hard_error():
    from maxroam.selection import CosineSelector

    layer = init_partition(8, 2, 0.5, rng())
    with pytest.raises(SelectionError):
        apply_update_step(layer, 0, CosineSelector(), weights=None)


def test_empty_partition_cannot_swap():
    mask = np.zeros((4, 2), dtype=bool)
    mask[:, 0] = True
    layer = LayerPartition(4, 2, mask, mask.copy(), np.zeros(2, dtype=np.int64))
    with pytest.raises(SelectionError):
        apply_update_step(layer, 1, UniformSelector(rng()))


def test_invariant_checks_name_the_failure():
    layer = init_partition(10, 2, 0.5, rng(), mode="exact")
    sizes = layer.active_sizes().copy()
    layer.mask[np.flatnonzero(~layer.mask[:, 0])[0], 0] = True
    with pytest.raises(InvariantViolation, match="not contained"):
        layer.check_invariants(sizes)
    layer.visited[:] = True
    with pytest.raises(InvariantViolation, match="size changed"):
        layer.check_invariants(sizes)


# -- ratios, probabilities, overlap, duration --------------------------------


def test_update_ratio_examples():
    layer = init_partition(10, 2, 0.6, rng(), mode="exact")
    assert update_ratio(layer, 0.6) == 0.0
    sel = UniformSelector(rng(1))
    parts = PartitionSet([layer], 0.6)
    parts.step(sel)
    parts.step(sel)
    assert update_ratio(layer, 0.6) == pytest.approx(0.5)
    # Cross-check: half of the four unvisited channels per task remain.
    assert (~layer.visited).sum(axis=0).tolist() == [2, 2]
    parts.step(sel)
    parts.step(sel)
    assert update_ratio(layer, 0.6) == pytest.approx(1.0)
    assert update_ratio(init_partition(10, 2, 1.0, rng()), 1.0) == 1.0


def test_task_update_ratio_tracks_each_plan():
    layer = init_partition(10, 2, 0.5, rng(), mode="exact")
    apply_update_step(layer, 0, UniformSelector(rng()))
    assert task_update_ratio(layer, 0) == pytest.approx(0.2)
    assert task_update_ratio(layer, 1) == 0.0


def test_visit_probability_closed_form():
    assert visit_probability(0.6, 0.0) == pytest.approx(0.6)
    assert visit_probability(0.6, 1.0) == pytest.approx(1.0)
    assert visit_probability(0.6, 0.5) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        visit_probability(1.2, 0.5)


def test_visit_probability_against_monte_carlo():
    S, p, runs = 10, 0.6, 10_000
    g = rng(11)
    sel = UniformSelector(g)
    frac = 0.0
    for _ in range(runs):
        layer = init_partition(S, 1, p, g, mode="exact")
        apply_update_step(layer, 0, sel)
        apply_update_step(layer, 0, sel)
        frac += layer.visited.sum() / S
    assert frac / runs == pytest.approx(visit_probability(p, 0.5), abs=0.01)


def test_overlap_extremes():
    full = init_partition(7, 3, 1.0, rng())
    assert (overlap_matrix(full) == 7).all()
    disjoint = init_partition(30, 3, 0.0, rng())
    ov = overlap_matrix(disjoint)
    assert (ov[~np.eye(3, dtype=bool)] == 0).all()
    assert np.array_equal(np.diag(ov), disjoint.active_sizes())


def test_overlap_mean_against_monte_carlo():
    S, p, runs = 1000, 0.5, 10_000
    g = rng(21)
    # Oracle: channels drawn by both tasks; orphans only ever join one task.
    a = g.random((runs, S)) < p
    b = g.random((runs, S)) < p
    oracle = (a & b).sum(axis=1).mean()
    assert oracle == pytest.approx(p * p * S, rel=0.01)
    g = rng(22)
    got = np.mean([overlap_matrix(init_partition(S, 2, p, g))[0, 1] for _ in range(2000)])
    assert got == pytest.approx(oracle, rel=0.05)


def test_overlap_symmetric_with_sizes_on_diagonal():
    layer = init_partition(30, 4, 0.4, rng(2))
    ov = overlap_matrix(layer)
    assert np.array_equal(ov, ov.T)
    assert np.array_equal(np.diag(ov), layer.active_sizes())


def test_plan_duration_examples():
    parts = PartitionSet.init([10, 6], 2, 0.6, rng(), mode="exact")
    assert plan_duration(parts, 0.6, 1.0) == pytest.approx(4.0)
    full = PartitionSet.init([10], 2, 1.0, rng())
    assert plan_duration(full, 1.0, 0.5) == 0.0
    big = PartitionSet.init([100, 40], 2, 0.5, rng(), mode="exact")
    assert plan_duration(big, 0.5, 0.1) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        plan_duration(big, 0.5, 0.0)


def test_plan_duration_matches_scheduler():
    parts = PartitionSet.init([100, 40], 2, 0.5, rng(9), mode="exact")
    schedule = RoamingSchedule(0.1, 1.0, iterations_per_epoch=50)
    sel = UniformSelector(rng(10))
    it = 0
    while not parts.complete:
        it += 1
        if schedule.due(it):
            parts.step(sel)
    assert schedule.epoch_of(it) == pytest.approx(plan_duration(parts, 0.5, 0.1))


def test_layers_complete_independently():
    parts = PartitionSet.init([4, 12], 2, 0.5, rng(), mode="exact")
    sel = UniformSelector(rng(1))
    for _ in range(2):
        parts.step(sel)
    assert parts.layers[0].complete and not parts.layers[1].complete
    out = parts.step(sel)
    assert all(o.complete for o in out[0])
    assert not any(o.complete for o in out[1])


def test_target_ratio_stops_updates():
    parts = PartitionSet.init([20], 2, 0.5, rng(), mode="exact")
    sel = UniformSelector(rng(1))
    for _ in range(20):
        parts.step(sel, target_r=0.5)
    assert parts.layers[0].task_steps.tolist() == [5, 5]
    for _ in range(20):
        parts.step(sel, target_r=0.0)
    assert parts.layers[0].task_steps.tolist() == [5, 5]


def test_partition_set_rejects_mixed_task_counts():
    with pytest.raises(PartitionError):
        PartitionSet([init_partition(4, 2, 0.5, rng()), init_partition(4, 3, 0.5, rng())], 0.5)


# -- schedule ---------------------------------------------------------------


def test_schedule_fires_on_interval_boundaries():
    s = RoamingSchedule(0.2, 1.0, iterations_per_epoch=50)
    assert s.interval == 10
    fired = [it for it in range(51) if s.due(it)]
    assert fired == [10, 20, 30, 40, 50]


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.25, 0.5, 1.0])
def test_fractional_delta_grid(delta):
    s = RoamingSchedule(delta, 1.0, iterations_per_epoch=100)
    assert s.interval == round(delta * 100)


def test_schedule_floor_and_validation():
    assert RoamingSchedule(0.29, 1.0, 100).interval == 29
    assert RoamingSchedule(0.01, 1.0, 10).interval == 1
    with pytest.raises(ValueError):
        RoamingSchedule(0.0)
    with pytest.raises(ValueError):
        RoamingSchedule(0.1, 1.5)


# -- serialization ----------------------------------------------------------


def test_snapshot_round_trip_through_json():
    parts = PartitionSet.init([8, 5], 3, 0.4, rng(4))
    sel = UniformSelector(rng(5))
    parts.step(sel)
    doc = json.loads(json.dumps(parts.to_dict()))
    assert set(doc["layers"][0]) >= {"layer", "S", "T", "mask", "visited", "steps_done"}
    back = PartitionSet.from_dict(doc)
    for a, b in zip(parts.layers, back.layers):
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.visited, b.visited)
        assert np.array_equal(a.task_steps, b.task_steps)
    back.check_invariants()


def test_golden_snapshot():
    layer = init_partition(10, 2, 0.6, np.random.default_rng(2024), mode="exact")
    apply_update_step(layer, 0, UniformSelector(np.random.default_rng(1)))
    snap = layer.to_dict()
    assert snap == {
        "layer": 0,
        "S": 10,
        "T": 2,
        "mask": snap["mask"],
        "visited": snap["visited"],
        "steps_done": 1,
        "task_steps": [1, 0],
    }
    assert [len(m) for m in snap["mask"]] == [6, 6]
    assert [len(v) for v in snap["visited"]] == [7, 6]
    # Same seeds, same snapshot.
    again = init_partition(10, 2, 0.6, np.random.default_rng(2024), mode="exact")
    apply_update_step(again, 0, UniformSelector(np.random.default_rng(1)))
    assert again.to_dict() == snap


# -- properties -------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    S=st.integers(3, 40),
    T=st.integers(1, 5),
    p=st.sampled_from([0.2, 0.3, 0.5, 0.7, 0.8]),
    seed=st.integers(0, 2**31),
    mode=st.sampled_from(["bernoulli", "exact"]),
)
def test_plan_properties(S, T, p, seed, mode):
    try:
        layer = init_partition(S, T, p, rng(seed), mode=mode)
    except PartitionError:
        return
    sizes = layer.active_sizes().copy()
    b0 = layer.visited.sum(axis=0).copy()
    sel = UniformSelector(rng(seed + 1))
    for t in range(T):
        if sizes[t] == 0:
            continue
        prev = layer.visited[:, t].copy()
        steps = 0
        while True:
            out = apply_update_step(layer, t, sel)
            if out.complete:
                break
            steps += 1
            assert (prev <= layer.visited[:, t]).all()
            assert layer.visited[:, t].sum() == b0[t] + min(steps, S - b0[t])
            prev = layer.visited[:, t].copy()
        assert steps == S - b0[t]
    assert np.array_equal(layer.active_sizes(), sizes)
    assert not (layer.mask & ~layer.visited).any()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.sampled_from([0.3, 0.5, 0.9]))
def test_identical_seed_identical_trajectory(seed, p):
    def trajectory():
        g = rng(seed)
        parts = PartitionSet.init([24, 16], 3, p, g)
        sel = UniformSelector(g)
        snaps = []
        while not parts.complete:
            parts.step(sel)
            snaps.append(json.dumps(parts.to_dict()))
        return snaps

    assert trajectory() == trajectory()


def test_plan_ends_within_bound_for_exact_init():
    g = rng(30)
    for _ in range(50):
        S = int(g.integers(15, 50))
        p = float(g.choice([0.2, 0.4, 0.6, 0.8]))
        parts = PartitionSet.init([S, S // 3], 3, p, g, mode="exact")
        sel = UniformSelector(g)
        steps = 0
        while not parts.complete:
            parts.step(sel)
            steps += 1
        assert steps <= math.ceil((1 - p) * S - 1e-9)
