"""Synchronization protocol primitives.

These are the controller/worker decision rules behind every sync point:
status collection (all-worker or publish-subscribe), the predicted quorum
check time, the worker-side local scheduler, ratio and cluster quorums, and
the barrier and time-slotted baselines. They hold no clock of their own; the
simulator in :mod:`syncsim.world` calls them from its event handlers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

from syncsim.errors import BarrierTimeout, NoCluster, NoUpdates
from syncsim.model import (
    ComponentRedundant,
    TaskKind,
    TaskSpec,
    TimeRedundant,
    TimeSlotted,
    UpdateScheme,
    WorkerState,
)


class FailReason(Enum):
    RETRIES_EXHAUSTED = "RetriesExhausted"
    CLUSTER_UNDERFULL = "ClusterUnderfull"
    INCOMPLETE_RESULTS = "IncompleteResults"
    BARRIER_TIMEOUT = "BarrierTimeout"


@dataclass(frozen=True)
class Passed:
    start_time: float


@dataclass(frozen=True)
class Retry:
    next_attempt: float


@dataclass(frozen=True)
class Failed:
    reason: FailReason


@dataclass(frozen=True)
class SyncCompleted:
    """Result collection finished with every cluster represented."""


QuorumResult = Union[Passed, Retry, Failed]


@dataclass(frozen=True)
class Pending:
    pass


@dataclass(frozen=True)
class Scheduled:
    start_time: float


@dataclass(frozen=True)
class Aborted:
    reason: FailReason


@dataclass
class SyncPointState:
    sync_task: str
    committed: set = field(default_factory=set)
    delta: float | None = None
    retries_used: int = 0
    outcome: Pending | Scheduled | Aborted = Pending()

    def schedule(self, start_time: float, committed: Iterable) -> None:
        self.committed = set(committed)
        self.outcome = Scheduled(start_time)

    def abort(self, reason: FailReason) -> None:
        self.outcome = Aborted(reason)


# --- sync call and status updates -------------------------------------------


def sync_call(queue, topology, controller_id: str, workers: Iterable[WorkerState], sync_task: TaskSpec, delay: float):
    """Open a sync point: one sync-call message per connected child worker.

    Returns the fresh :class:`SyncPointState` and the posted events.
    """
    from syncsim.engine import send_message

    if sync_task.kind is not TaskKind.C2W_SYNC:
        raise ValueError(f"{sync_task.task_id} is not a controller-to-worker sync task")
    state = SyncPointState(sync_task.task_id)
    posted = [
        send_message(queue, topology, controller_id, w.worker_id, {"type": "sync_call", "task": sync_task.task_id}, delay)
        for w in sorted(workers, key=lambda w: w.worker_id)
        if w.connected
    ]
    return state, posted


class Broker:
    """Cluster-local broker collecting member availabilities for one sync point.

    Members publish their predicted availability; once every expected member
    has published (or dropped out), the broker emits a single group
    availability summary, which is all the controller ever sees from the
    cluster.
    """

    def __init__(self, cluster_id: str, members: Iterable):
        self.cluster_id = cluster_id
        self.pending = set(members)
        self.reports: dict = {}
        self.emitted = False

    def publish(self, worker_id, predicted: float) -> float | None:
        self.pending.discard(worker_id)
        self.reports[worker_id] = predicted
        return self._maybe_emit()

    def withdraw(self, worker_id) -> float | None:
        self.pending.discard(worker_id)
        return self._maybe_emit()

    def _maybe_emit(self) -> float | None:
        if self.pending or self.emitted or not self.reports:
            return None
        self.emitted = True
        return max(self.reports.values())

    @property
    def silent(self) -> bool:
        """True when every member dropped out before publishing."""
        return not self.pending and not self.reports


def push_status_update(
    queue,
    topology,
    worker: WorkerState,
    scheme: UpdateScheme,
    predicted: float,
    controller_id: str,
    delay: float,
    brokers: Mapping[str, Broker] | None = None,
    tag: Mapping | None = None,
):
    """Report ``worker``'s predicted availability; returns the posted events.

    Under the all-worker scheme the controller receives one message per
    worker. Under publish-subscribe the worker only publishes to its cluster
    broker, and the broker forwards one group message when the cluster is
    complete. ``tag`` entries are copied into every message body.
    """
    from syncsim.engine import send_message

    if scheme is UpdateScheme.ALL_WORKER:
        body = {"type": "status", "worker": worker.worker_id, "predicted": predicted, **(tag or {})}
        return [send_message(queue, topology, worker.worker_id, controller_id, body, delay)]
    if worker.cluster_id is None:
        raise NoCluster(worker.worker_id)
    broker = brokers[worker.cluster_id]
    group = broker.publish(worker.worker_id, predicted)
    if group is None:
        return []
    return [emit_group_message(queue, topology, broker, controller_id, group, delay, tag)]


def emit_group_message(
    queue, topology, broker: Broker, controller_id: str, group_avail: float, delay: float, tag: Mapping | None = None
):
    from syncsim.engine import send_message

    body = {
        "type": "group",
        "cluster": broker.cluster_id,
        "predicted": group_avail,
        "members": len(broker.reports),
        **(tag or {}),
    }
    return send_message(queue, topology, broker_node_id(controller_id, broker.cluster_id), controller_id, body, delay)


def broker_node_id(controller_id: str, cluster_id: str) -> str:
    return f"{controller_id}/broker/{cluster_id}"


def compute_quorum_check_time(
    predictions: Iterable[float],
    status_update_cost: float,
    delay: float,
    not_before: float = -math.inf,
) -> float:
    """Predicted quorum check time: latest predicted availability plus one
    update cost and one controller-worker delay.

    ``not_before`` lets the caller keep the check from landing before the
    controller has even finished processing the updates.
    """
    predictions = list(predictions)
    if not predictions:
        raise NoUpdates()
    return max(max(predictions) + status_update_cost + delay, not_before)


# --- local scheduler -------------------------------------------------------


def local_schedule(t_avail: float, delta: float, lengths: Sequence[float]) -> tuple[list[int], float]:
    """Fill the gap before ``delta`` with queued local tasks.

    Scans ``lengths`` in queue order; a task is taken iff it still fits
    (``t_avail + length <= delta``), otherwise it is skipped and the scan
    continues. Returns the indices taken and the resulting availability.
    """
    taken = []
    for i, t_l in enumerate(lengths):
        if t_avail + t_l <= delta:
            taken.append(i)
            t_avail += t_l
    return taken, t_avail


# --- quorum checks ---------------------------------------------------------


def ratio_quorum_check(
    state: SyncPointState,
    available: int,
    total: int,
    policy: TimeRedundant,
    delay: float,
) -> QuorumResult:
    """Ratio quorum at the state's quorum check time with time-based redundancy."""
    r = available / total if total else 0.0
    if r >= policy.sync_degree:
        return Passed(state.delta + delay)
    if state.retries_used < policy.max_retries:
        state.retries_used += 1
        return Retry(state.delta + policy.lambda_s)
    state.abort(FailReason.RETRIES_EXHAUSTED)
    return Failed(FailReason.RETRIES_EXHAUSTED)


def cluster_quorum_check(
    state: SyncPointState,
    available_by_cluster: Mapping[str, int],
    required: int | ComponentRedundant,
    delay: float,
) -> QuorumResult:
    """Cluster quorum: every participating cluster needs ``required`` available members.

    No retries exist in this variant. With no participating clusters there is
    nobody to represent, which counts as underfull.
    """
    if isinstance(required, ComponentRedundant):
        required = required.required_available
    if available_by_cluster and all(n >= required for n in available_by_cluster.values()):
        return Passed(state.delta + delay)
    state.abort(FailReason.CLUSTER_UNDERFULL)
    return Failed(FailReason.CLUSTER_UNDERFULL)


def complete_component_sync(results_by_cluster: Mapping[str, int]) -> SyncCompleted | Failed:
    """A component-redundant sync succeeds iff every cluster returned a result."""
    if all(n >= 1 for n in results_by_cluster.values()):
        return SyncCompleted()
    return Failed(FailReason.INCOMPLETE_RESULTS)


def barrier_sync(arrivals: Mapping, delay: float, timeout_at: float = math.inf) -> Passed:
    """Barrier baseline: proceed one delay after the last worker is seen.

    ``arrivals`` maps each participant to the time the controller observed it
    at the sync point, or None if it never showed up.
    """
    missing = sorted(w for w, t in arrivals.items() if t is None or t > timeout_at)
    if missing:
        raise BarrierTimeout(timeout_at, missing)
    if not arrivals:
        raise BarrierTimeout(timeout_at, [])
    return Passed(max(arrivals.values()) + delay)


def slot_time(segment_start: float, mu: float, sigma: float, policy: TimeSlotted) -> float:
    return segment_start + mu + policy.slot_multiplier * sigma


def time_slotted_sync(
    mu: float,
    sigma: float,
    policy: TimeSlotted,
    segment_start: float = 0.0,
    arrivals: Mapping | None = None,
) -> tuple[float, QuorumResult | None]:
    """Fixed sync slot at ``segment_start + mu + k*sigma`` and its quorum.

    Workers whose arrival is at or before the slot take part; the slot never
    moves, so a missed ratio is a failure with no retry.
    """
    slot = slot_time(segment_start, mu, sigma, policy)
    if arrivals is None:
        return slot, None
    on_time = sum(1 for t in arrivals.values() if t <= slot)
    return slot, slot_quorum(on_time, len(arrivals), policy, slot)


def slot_quorum(available: int, total: int, policy: TimeSlotted, slot: float) -> QuorumResult:
    if total and available / total >= policy.sync_degree:
        return Passed(slot)
    return Failed(FailReason.RETRIES_EXHAUSTED)
