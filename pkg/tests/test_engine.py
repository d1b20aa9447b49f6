from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncsim.engine import (
    EventKind,
    EventQueue,
    SimConfig,
    SimEvent,
    Topology,
    apply_failure_process,
    perturb,
    post_event,
    predicted_finish,
    run_until_idle,
    send_message,
)
from syncsim.errors import LivelockGuard, TimeTravel, TopologyViolation, ValidationError
from syncsim.model import Liveness, TaskGraph, TaskKind, TaskSpec, WorkerState
from syncsim.world import World, WorldSpec


def drain(q: EventQueue) -> list[SimEvent]:
    out = []
    run_until_idle(q, out.append)
    return out


def test_equal_timestamps_dispatch_by_sequence():
    q = EventQueue()
    post_event(q, SimEvent(1.0, EventKind.TASK_COMPLETE, {"n": 6}, sequence=6))
    post_event(q, SimEvent(1.0, EventKind.TASK_COMPLETE, {"n": 5}, sequence=5))
    assert [e.payload["n"] for e in drain(q)] == [5, 6]


def test_post_at_now_runs_next():
    q = EventQueue()
    q.post(0.0, EventKind.TASK_COMPLETE, {"n": 0})
    q.post(2.0, EventKind.TASK_COMPLETE, {"n": 2})
    first = q.pop()
    q.post(q.clock.now, EventKind.TASK_COMPLETE, {"n": 1})
    assert first.payload["n"] == 0
    assert [e.payload["n"] for e in drain(q)] == [1, 2]


def test_time_travel_rejected():
    q = EventQueue()
    q.post(5.0, EventKind.TASK_COMPLETE)
    q.pop()
    with pytest.raises(TimeTravel):
        q.post(4.0, EventKind.TASK_COMPLETE)


def test_auto_sequences_skip_explicit_ones():
    q = EventQueue()
    post_event(q, SimEvent(0.0, EventKind.TASK_COMPLETE, sequence=0))
    e = q.post(0.0, EventKind.TASK_COMPLETE)
    assert e.sequence == 1
    with pytest.raises(ValueError):
        post_event(q, SimEvent(0.0, EventKind.TASK_COMPLETE, sequence=1))


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1000, allow_nan=False), max_size=60))
def test_queue_dispatches_in_timestamp_then_post_order(times):
    q = EventQueue()
    for i, t in enumerate(times):
        q.post(t, EventKind.TASK_COMPLETE, {"i": i})
    got = [(e.timestamp, e.payload["i"]) for e in drain(q)]
    assert got == sorted((t, i) for i, t in enumerate(times))


def test_send_message_delay():
    q = EventQueue()
    q.post(10.0, EventKind.TASK_COMPLETE)
    q.pop()
    ev = send_message(q, None, "f0", 1, {}, 0.2)
    assert ev.timestamp == pytest.approx(10.2)
    assert send_message(q, None, "f0", 1, {}, 0.0).timestamp == 10.0


def test_worker_to_worker_is_a_topology_violation():
    with pytest.raises(TopologyViolation):
        send_message(EventQueue(), None, 1, 2, {}, 0.2)
    topo = Topology("cloud")
    topo.attach("f0", "cloud")
    topo.attach(1, "f0")
    send_message(EventQueue(), topo, 1, "f0", {}, 0.2)
    with pytest.raises(TopologyViolation):
        send_message(EventQueue(), topo, 1, "cloud", {}, 0.2)


def test_run_until_idle_empty_and_single():
    q = EventQueue()
    assert run_until_idle(q, lambda e: None) == 0
    assert q.clock.now == 0.0
    q.post(3.5, EventKind.TASK_COMPLETE)
    assert run_until_idle(q, lambda e: None) == 1
    assert q.clock.now == 3.5


def test_livelock_guard():
    q = EventQueue()

    def again(e):
        q.post(q.clock.now, EventKind.TASK_COMPLETE)

    q.post(0.0, EventKind.TASK_COMPLETE)
    with pytest.raises(LivelockGuard):
        run_until_idle(q, again, max_events=100)


def test_failure_process_extremes():
    rng = np.random.default_rng(0)
    w = WorkerState(0)
    for _ in range(100):
        apply_failure_process(w, rng, 0.0)
    assert w.connected
    apply_failure_process(w, rng, 1.0)
    assert w.liveness is Liveness.FAILED


def test_failure_frequency():
    rng = np.random.default_rng(2024)
    failed = 0
    for _ in range(10_000):
        w = WorkerState(0)
        apply_failure_process(w, rng, 0.1)
        failed += not w.connected
    assert abs(failed / 10_000 - 0.1) <= 0.01


def test_predicted_finish():
    rng = np.random.default_rng(1)
    assert predicted_finish(50.0, 1.0, rng) == 50.0
    draws = [predicted_finish(100.0, 0.8, rng) for _ in range(1000)]
    assert all(80.0 <= x <= 120.0 for x in draws)
    rng = np.random.default_rng(2)
    mean = np.mean([predicted_finish(100.0, 0.8, rng) for _ in range(100_000)])
    assert abs(mean - 100.0) < 0.5
    with pytest.raises(ValidationError):
        predicted_finish(1.0, 0.0, rng)


@settings(max_examples=200)
@given(st.floats(0, 1e6), st.floats(0.01, 1.0), st.floats(-1, 1))
def test_perturb_stays_within_accuracy_band(true, acc, v):
    p = perturb(true, acc, v)
    slack = (1 - acc) * true
    assert true - slack - 1e-6 * (1 + true) <= p <= true + slack + 1e-6 * (1 + true)


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(fail_probability=1.5)
    with pytest.raises(ValidationError):
        SimConfig(prediction_accuracy=0.0)
    with pytest.raises(ValidationError):
        SimConfig(controller_worker_delay=-1)


def _graph():
    tasks = [TaskSpec(f"t{i:02d}", TaskKind.C2W_SYNC if i % 3 == 2 else TaskKind.C2W_ASYNC, 10.0 + i, 2.0, {f"t{i - 1:02d}"} if i else set()) for i in range(30)]
    return TaskGraph("g", tasks)


def test_join_process_extremes():
    graph = TaskGraph("g", (TaskSpec("a", TaskKind.C2W_ASYNC, 5.0),))
    none = World(SimConfig(join_probability=0.0, fail_probability=0.0, worker_count=3), WorldSpec(), [graph], 5).run_all()
    assert none.joins == [] and len(none.workers) == 3
    res = World(SimConfig(join_probability=1.0, fail_probability=0.0, worker_count=3), WorldSpec(), [graph], 5).run_all()
    assert len(res.joins) == 5 and len(res.workers) == 8
    starts = [0.0] + list(itertools.accumulate(r.runtime_s for r in res.records))[:-1]
    assert res.joins == pytest.approx(starts)


def test_full_graph_run_twice_is_identical():
    a = World(SimConfig(rng_seed=11), WorldSpec(local_queue_depth=3), [_graph()], 4).run_all()
    b = World(SimConfig(rng_seed=11), WorldSpec(local_queue_depth=3), [_graph()], 4).run_all()
    assert a.records == b.records
    assert a.decisions == b.decisions
    assert a.events == b.events
