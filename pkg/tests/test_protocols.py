from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncsim.engine import EventQueue, Topology
from syncsim.errors import BarrierTimeout, NoCluster, NoUpdates
from syncsim.model import ComponentRedundant, Liveness, TaskKind, TaskSpec, TimeRedundant, TimeSlotted, UpdateScheme, WorkerState
from syncsim.protocols import (
    Broker,
    Failed,
    FailReason,
    Passed,
    Retry,
    SyncCompleted,
    SyncPointState,
    barrier_sync,
    broker_node_id,
    cluster_quorum_check,
    complete_component_sync,
    compute_quorum_check_time,
    local_schedule,
    push_status_update,
    ratio_quorum_check,
    slot_quorum,
    sync_call,
    time_slotted_sync,
)

SYNC = TaskSpec("s", TaskKind.C2W_SYNC, 5.0)


def tree(n: int) -> Topology:
    topo = Topology("cloud")
    topo.attach("f0", "cloud")
    for i in range(n):
        topo.attach(i, "f0")
    return topo


def test_sync_call_one_message_per_connected_worker():
    workers = [WorkerState(i) for i in range(10)]
    state, posted = sync_call(EventQueue(), tree(10), "f0", workers, SYNC, 0.2)
    assert len(posted) == 10 and state.sync_task == "s"
    for w in workers[:3]:
        w.liveness = Liveness.FAILED
    _, posted = sync_call(EventQueue(), tree(10), "f0", workers, SYNC, 0.2)
    assert len(posted) == 7
    _, posted = sync_call(EventQueue(), tree(0), "f0", [], SYNC, 0.2)
    assert posted == []
    with pytest.raises(ValueError):
        sync_call(EventQueue(), tree(1), "f0", workers, TaskSpec("x", TaskKind.C2W_ASYNC, 1.0), 0.2)


def test_all_worker_updates_one_per_worker():
    n = 4000
    topo, q = tree(n), EventQueue()
    posted = [e for i in range(n) for e in push_status_update(q, topo, WorkerState(i), UpdateScheme.ALL_WORKER, 1.0, "f0", 0.2)]
    assert len(posted) == n
    assert {e.payload["dst"] for e in posted} == {"f0"}


def test_publish_subscribe_one_group_message_per_cluster():
    n, c = 4000, 40
    topo, q = tree(n), EventQueue()
    members = {f"c{k}": [i for i in range(n) if i % c == k] for k in range(c)}
    brokers = {cid: Broker(cid, m) for cid, m in members.items()}
    for cid in brokers:
        topo.attach(broker_node_id("f0", cid), "f0")
    posted = []
    for i in range(n):
        w = WorkerState(i, cluster_id=f"c{i % c}")
        posted += push_status_update(q, topo, w, UpdateScheme.PUBLISH_SUBSCRIBE, float(i), "f0", 0.2, brokers)
    assert len(posted) == c
    group = {e.payload["body"]["cluster"]: e.payload["body"]["predicted"] for e in posted}
    assert group["c0"] == float(max(members["c0"]))


def test_publish_without_cluster():
    with pytest.raises(NoCluster):
        push_status_update(EventQueue(), tree(1), WorkerState(0), UpdateScheme.PUBLISH_SUBSCRIBE, 1.0, "f0", 0.2, {})


def test_broker_withdrawal():
    b = Broker("c0", [1, 2, 3])
    assert b.publish(1, 5.0) is None
    assert b.withdraw(2) is None
    assert b.publish(3, 4.0) == 5.0
    assert b.emitted and b.publish(3, 9.0) is None
    silent = Broker("c1", [1])
    assert silent.withdraw(1) is None and silent.silent


def test_quorum_check_time():
    assert compute_quorum_check_time([10, 12, 15], 1.0, 0.2) == pytest.approx(16.2)
    assert compute_quorum_check_time([5.0], 0.0, 0.0) == 5.0
    assert compute_quorum_check_time([5.0], 0.0, 0.0, not_before=7.0) == 7.0
    with pytest.raises(NoUpdates):
        compute_quorum_check_time([], 1.0, 0.2)


def test_local_schedule_vectors():
    assert local_schedule(10, 20, [5]) == ([0], 15)
    assert local_schedule(10, 20, [11]) == ([], 10)
    assert local_schedule(10, 20, [8, 2]) == ([0, 1], 20)
    # a task that does not fit is skipped and the scan goes on
    assert local_schedule(0, 10, [4, 7, 6]) == ([0, 2], 10)


@settings(max_examples=300)
@given(
    st.integers(0, 400).map(lambda k: k / 4),
    st.integers(0, 400).map(lambda k: k / 4),
    st.lists(st.integers(1, 80).map(lambda k: k / 4), max_size=8),
)
def test_local_schedule_law(t_avail, delta, lengths):
    taken, end = local_schedule(t_avail, delta, lengths)
    t = t_avail
    for i, length in enumerate(lengths):
        assert (i in taken) == (t + length <= delta)
        if i in taken:
            t += length
    assert end == t
    if taken:
        assert end <= delta


def test_ratio_quorum():
    pol = TimeRedundant(0.7, 20.0, 3)
    st_ = SyncPointState("s", delta=100.0)
    assert ratio_quorum_check(st_, 7, 10, pol, 0.2) == Passed(100.2)
    assert ratio_quorum_check(st_, 6, 10, pol, 0.2) == Retry(120.0)
    assert st_.retries_used == 1
    st_.retries_used = 3
    assert ratio_quorum_check(st_, 6, 10, pol, 0.2) == Failed(FailReason.RETRIES_EXHAUSTED)
    assert ratio_quorum_check(SyncPointState("s", delta=0.0), 0, 0, TimeRedundant(max_retries=0), 0.2) == Failed(
        FailReason.RETRIES_EXHAUSTED
    )


def test_cluster_quorum():
    st_ = SyncPointState("s", delta=10.0)
    assert cluster_quorum_check(st_, {"a": 3, "b": 4, "c": 5}, 3, 0.2) == Passed(10.2)
    assert cluster_quorum_check(st_, {"a": 3, "b": 2, "c": 5}, 3, 0.2) == Failed(FailReason.CLUSTER_UNDERFULL)
    assert cluster_quorum_check(st_, {"a": 1, "b": 1}, ComponentRedundant(min_cluster_size=1), 0.2) == Passed(10.2)
    assert cluster_quorum_check(st_, {}, 1, 0.2) == Failed(FailReason.CLUSTER_UNDERFULL)


def test_component_completion():
    assert complete_component_sync({"a": 1, "b": 3}) == SyncCompleted()
    assert complete_component_sync({"a": 0, "b": 3}) == Failed(FailReason.INCOMPLETE_RESULTS)


def test_barrier():
    assert barrier_sync({1: 10.0, 2: 14.0, 3: 30.0}, 0.2) == Passed(pytest.approx(30.2))
    assert barrier_sync({1: 7.0}, 0.5) == Passed(7.5)
    with pytest.raises(BarrierTimeout) as e:
        barrier_sync({1: 10.0, 2: None}, 0.2, timeout_at=300.0)
    assert e.value.at == 300.0 and e.value.missing == [2]


def test_time_slotted():
    pol = TimeSlotted(1.5, 0.7)
    slot, res = time_slotted_sync(100.0, 20.0, pol)
    assert slot == 130.0 and res is None
    slot, res = time_slotted_sync(50.0, 0.0, pol, segment_start=10.0, arrivals={i: 60.0 for i in range(5)})
    assert slot == 60.0 and res == Passed(60.0)
    assert slot_quorum(6, 10, pol, 1.0) == Failed(FailReason.RETRIES_EXHAUSTED)
    assert slot_quorum(0, 0, pol, 1.0) == Failed(FailReason.RETRIES_EXHAUSTED)


def test_slot_arrival_probability_is_one_sided():
    mu, sigma = 100.0, 20.0
    slot, _ = time_slotted_sync(mu, sigma, TimeSlotted(1.5))
    draws = np.random.default_rng(99).normal(mu, sigma, 10_000)
    p = float(np.mean(draws <= slot))
    expected = 0.5 * (1 + math.erf(1.5 / math.sqrt(2)))
    assert abs(expected - 0.9332) < 1e-4
    assert abs(p - expected) <= 0.01
