"""Discrete-event machinery: events, the queue, the clock, and the stochastic
processes that act on workers (failures, joins, prediction noise)."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from syncsim.errors import LivelockGuard, TimeTravel, TopologyViolation, ValidationError
from syncsim.model import DEFAULT_DURATION_FLOOR_S, Liveness, WorkerState


class EventKind(Enum):
    MESSAGE_ARRIVAL = "MessageArrival"
    TASK_COMPLETE = "TaskComplete"
    QUORUM_TIMER_FIRE = "QuorumTimerFire"
    SLOT_BOUNDARY = "SlotBoundary"
    MOBILITY_SAMPLE = "MobilitySample"
    FAILURE_CHECK = "FailureCheck"
    JOIN_CHECK = "JoinCheck"


@dataclass
class SimEvent:
    timestamp: float
    kind: EventKind
    payload: dict = field(default_factory=dict)
    sequence: int | None = None

    def sort_key(self) -> tuple[float, int]:
        return (self.timestamp, self.sequence)


@dataclass
class Clock:
    now: float = 0.0

    def advance(self, t: float) -> None:
        if t < self.now:
            raise TimeTravel(t, self.now)
        self.now = t


class EventQueue:
    """Min-heap of events ordered by (timestamp, sequence)."""

    def __init__(self, clock: Clock | None = None):
        self.clock = clock or Clock()
        self._heap: list[tuple[float, int, SimEvent]] = []
        self._next = 0
        # explicitly numbered events; auto numbering skips these
        self._explicit: set[int] = set()

    def __len__(self) -> int:
        return len(self._heap)

    def post(self, timestamp: float, kind: EventKind, payload: dict | None = None) -> SimEvent:
        return post_event(self, SimEvent(timestamp, kind, payload or {}))

    def pop(self) -> SimEvent:
        t, _, ev = heapq.heappop(self._heap)
        self.clock.advance(t)
        return ev

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None


def post_event(queue: EventQueue, event: SimEvent) -> SimEvent:
    """Enqueue ``event``; a missing sequence number is assigned from the queue counter."""
    if event.timestamp < queue.clock.now:
        raise TimeTravel(event.timestamp, queue.clock.now)
    if event.sequence is None:
        while queue._next in queue._explicit:
            queue._next += 1
        event.sequence = queue._next
        queue._next += 1
    else:
        if event.sequence in queue._explicit or event.sequence < queue._next:
            raise ValueError(f"sequence {event.sequence} may already be in use")
        queue._explicit.add(event.sequence)
    heapq.heappush(queue._heap, (event.timestamp, event.sequence, event))
    return event


@dataclass
class SimConfig:
    controller_worker_delay: float = 0.2
    status_update_cost: float = 1.0
    fail_probability: float = 0.1
    join_probability: float = 0.1
    rng_seed: int = 0
    worker_count: int = 20
    cluster_count: int = 4
    prediction_accuracy: float = 1.0
    # weight of the error component common to all workers at a sync point
    prediction_shared_fraction: float = 0.5
    duration_floor_s: float = DEFAULT_DURATION_FLOOR_S
    max_events: int = 50_000_000

    def __post_init__(self):
        for name in ("fail_probability", "join_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValidationError(name, "must lie in [0, 1]")
        for name in ("controller_worker_delay", "status_update_cost"):
            if getattr(self, name) < 0:
                raise ValidationError(name, "must be >= 0")
        if not 0 < self.prediction_accuracy <= 1:
            raise ValidationError("prediction_accuracy", "must lie in (0, 1]")
        if not 0 <= self.prediction_shared_fraction <= 1:
            raise ValidationError("prediction_shared_fraction", "must lie in [0, 1]")
        if self.worker_count < 1:
            raise ValidationError("worker_count", "must be >= 1")
        if self.cluster_count < 1:
            raise ValidationError("cluster_count", "must be >= 1")


# --- topology ----------------------------------------------------------------


class Topology:
    """Parent links of the controller tree; workers are int ids, controllers str ids."""

    def __init__(self, root: str):
        self.root = root
        self.parent: dict[Any, Any] = {}

    def attach(self, child, parent) -> None:
        if child == self.root:
            raise TopologyViolation("the root has no parent")
        if is_worker(parent):
            raise TopologyViolation(f"worker {parent!r} cannot have children")
        self.parent[child] = parent

    def detach(self, child) -> None:
        self.parent.pop(child, None)

    def is_edge(self, a, b) -> bool:
        return self.parent.get(a) == b or self.parent.get(b) == a


def is_worker(node) -> bool:
    return isinstance(node, int)


def send_message(queue: EventQueue, topology: Topology | None, src, dst, body: dict, delay: float) -> SimEvent:
    """Post a MessageArrival for ``dst`` one link delay from now.

    Workers never talk to each other. When a topology is given, the pair must
    also be a parent-child edge. Liveness is checked by the receiver at
    arrival, where messages to absent nodes are dropped.
    """
    if is_worker(src) and is_worker(dst):
        raise TopologyViolation(f"no link between workers {src!r} and {dst!r}")
    if topology is not None and not topology.is_edge(src, dst):
        raise TopologyViolation(f"{src!r} and {dst!r} are not parent and child")
    return queue.post(queue.clock.now + delay, EventKind.MESSAGE_ARRIVAL, {"src": src, "dst": dst, "body": body})


# --- stochastic processes ------------------------------------------------------


def fails(u: float, fail_probability: float) -> bool:
    return u < fail_probability


def apply_failure_process(worker: WorkerState, rng, fail_probability: float) -> WorkerState:
    """Bernoulli failure after a completed task; ``rng`` supplies one uniform."""
    u = rng if isinstance(rng, float) else float(rng.random())
    if worker.connected and fails(u, fail_probability):
        worker.liveness = Liveness.FAILED
    return worker


def apply_join_process(world, rng) -> Any:
    """Run-boundary join: with the world's join probability add one fresh worker.

    ``rng`` is a generator or a pre-drawn uniform. Returns the new worker or None.
    """
    u = rng if isinstance(rng, float) else float(rng.random())
    if u < world.config.join_probability:
        return world.add_worker()
    return None


def perturb(true_value: float, accuracy: float, v: float) -> float:
    """Scale ``true_value`` by ``1 + (1 - accuracy) * v`` for ``v`` in [-1, 1]."""
    if accuracy >= 1:
        return true_value
    return true_value * (1.0 + (1.0 - accuracy) * v)


def predicted_finish(true_finish: float, prediction_accuracy: float, rng) -> float:
    """Noisy estimate ``true * (1 + u)`` with ``u ~ U[-(1-a), 1-a]``."""
    if not 0 < prediction_accuracy <= 1:
        raise ValidationError("prediction_accuracy", "must lie in (0, 1]")
    if prediction_accuracy == 1:
        return true_finish
    v = 2.0 * float(rng.random()) - 1.0
    return perturb(true_finish, prediction_accuracy, v)


# --- loop ----------------------------------------------------------------------


def run_until_idle(queue: EventQueue, dispatch: Callable[[SimEvent], None], max_events: int = 50_000_000) -> int:
    """Dispatch events in order until the queue drains; returns the dispatch count."""
    n = 0
    while queue:
        if n >= max_events:
            raise LivelockGuard(max_events)
        dispatch(queue.pop())
        n += 1
    return n
