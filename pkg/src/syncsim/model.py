"""Domain vocabulary: task graphs, node state, clusters and sync policies."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Union

from syncsim.errors import CycleDetected, DanglingPredecessor, UnknownKey, ValidationError

# Gaussian draws are clipped here so no task ever takes zero or negative time.
DEFAULT_DURATION_FLOOR_S = 1e-3


class TaskKind(Enum):
    C2W_SYNC = "c2w_s"
    C2W_ASYNC = "c2w_a"
    W2C_SYNC = "w2c_s"
    W2C_ASYNC = "w2c_a"
    LOCAL_WORKER = "w_l"
    LOCAL_CONTROLLER = "c_l"

    @property
    def is_sync(self) -> bool:
        return self is TaskKind.C2W_SYNC

    @property
    def runs_on_workers(self) -> bool:
        """True for kinds that occupy every connected worker's timeline."""
        return self is not TaskKind.LOCAL_CONTROLLER


class Liveness(Enum):
    CONNECTED = "connected"
    DISCONNECTED = "disconnected"
    FAILED = "failed"


class Level(Enum):
    CLOUD = "cloud"
    FOG = "fog"
    DEVICE = "device"


class UpdateScheme(Enum):
    ALL_WORKER = "all_worker"
    PUBLISH_SUBSCRIBE = "publish_subscribe"


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    kind: TaskKind
    base_duration: float
    duration_stddev: float = 0.0
    predecessors: frozenset = frozenset()

    def __post_init__(self):
        if not self.base_duration > 0:
            raise ValidationError(f"tasks[{self.task_id}].base_duration", "must be > 0")
        if not self.duration_stddev >= 0:
            raise ValidationError(f"tasks[{self.task_id}].duration_stddev", "must be >= 0")
        if not isinstance(self.predecessors, frozenset):
            object.__setattr__(self, "predecessors", frozenset(self.predecessors))


@dataclass(frozen=True)
class TaskGraph:
    graph_id: str
    tasks: tuple

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))

    @property
    def by_id(self) -> dict[str, TaskSpec]:
        return {t.task_id: t for t in self.tasks}

    @property
    def sync_count(self) -> int:
        return sum(1 for t in self.tasks if t.kind.is_sync)

    def index_of(self, task_id: str) -> int:
        for i, t in enumerate(self.tasks):
            if t.task_id == task_id:
                return i
        raise KeyError(task_id)


@dataclass
class WorkerState:
    worker_id: int
    t_avail: float = 0.0
    liveness: Liveness = Liveness.CONNECTED
    cluster_id: str | None = None
    local_queue: list = field(default_factory=list)
    position: tuple[float, float] | None = None
    fog_id: str = "f0"
    # (start, end, label) for every execution; only filled when tracing is on
    history: list | None = None

    @property
    def connected(self) -> bool:
        return self.liveness is Liveness.CONNECTED

    def occupy(self, release: float, duration: float, label: str = "") -> tuple[float, float]:
        """Run one item of work no earlier than ``release``; returns (start, end)."""
        start = max(self.t_avail, release)
        end = start + duration
        self.t_avail = end
        if self.history is not None:
            self.history.append((start, end, label))
        return start, end


@dataclass
class ControllerNode:
    controller_id: str
    level: Level
    children: list = field(default_factory=list)
    t_avail: float = 0.0
    parent: str | None = None

    def occupy(self, release: float, duration: float) -> float:
        self.t_avail = max(self.t_avail, release) + duration
        return self.t_avail


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    members: frozenset
    broker_controller: str


# --- policies --------------------------------------------------------------


@dataclass(frozen=True)
class TimeRedundant:
    sync_degree: float = 0.7
    lambda_s: float = 20.0
    max_retries: int = 3

    name = "time_redundant"

    def __post_init__(self):
        if not 0 < self.sync_degree <= 1:
            raise ValidationError("sync_degree", "must lie in (0, 1]")
        if not self.lambda_s > 0:
            raise ValidationError("lambda_s", "must be > 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries", "must be >= 0")


@dataclass(frozen=True)
class ComponentRedundant:
    min_cluster_size: int = 3
    # members that must be available in every formed cluster for the quorum to pass
    required_available: int = 1

    name = "component_redundant"

    def __post_init__(self):
        if self.min_cluster_size < 1:
            raise ValidationError("min_cluster_size", "must be >= 1")
        if self.required_available < 1:
            raise ValidationError("required_available", "must be >= 1")


@dataclass(frozen=True)
class Barrier:
    timeout_factor: float = 10.0

    name = "barrier"

    def __post_init__(self):
        if not self.timeout_factor > 0:
            raise ValidationError("barrier_timeout_factor", "must be > 0")


@dataclass(frozen=True)
class TimeSlotted:
    slot_multiplier: float = 1.5
    sync_degree: float = 0.7

    name = "time_slotted"

    def __post_init__(self):
        if not self.slot_multiplier >= 0:
            raise ValidationError("slot_multiplier", "must be >= 0")
        if not 0 < self.sync_degree <= 1:
            raise ValidationError("sync_degree", "must lie in (0, 1]")


SyncPolicy = Union[TimeRedundant, ComponentRedundant, Barrier, TimeSlotted]


# --- operations ------------------------------------------------------------


def validate_task_graph(graph: TaskGraph) -> list[str]:
    """Check references and acyclicity; return a topological order of task ids.

    Ties between simultaneously ready tasks are broken by ascending id, which is
    also the order the controller walks the graph in.
    """
    ids = {t.task_id for t in graph.tasks}
    for t in sorted(graph.tasks, key=lambda t: t.task_id):
        for p in sorted(t.predecessors):
            if p not in ids:
                raise DanglingPredecessor(t.task_id, p)

    preds = {t.task_id: set(t.predecessors) for t in graph.tasks}
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    for root in sorted(ids):
        if root in state:
            continue
        stack = [(root, iter(sorted(preds[root])))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                path.pop()
            elif state.get(nxt) == 1:
                cycle = path[path.index(nxt):]
                k = cycle.index(min(cycle))
                raise CycleDetected(cycle[k:] + cycle[:k])
            elif nxt not in state:
                state[nxt] = 1
                stack.append((nxt, iter(sorted(preds[nxt]))))
                path.append(nxt)

    order = []
    done: set[str] = set()
    while len(done) < len(ids):
        ready = ready_tasks(graph, done)
        order.append(ready[0].task_id)
        done.add(ready[0].task_id)
    return order


def ready_tasks(graph: TaskGraph, completed: Iterable[str]) -> list[TaskSpec]:
    completed = set(completed)
    out = [t for t in graph.tasks if t.task_id not in completed and t.predecessors <= completed]
    return sorted(out, key=lambda t: t.task_id)


def duration_from_normal(task: TaskSpec, z: float, floor: float = DEFAULT_DURATION_FLOOR_S) -> float:
    """Map a standard-normal variate onto the task's truncated duration law."""
    if task.duration_stddev == 0:
        return task.base_duration
    return max(floor, task.base_duration + task.duration_stddev * z)


def sample_duration(task: TaskSpec, worker: WorkerState | None, rng, floor: float = DEFAULT_DURATION_FLOOR_S) -> float:
    """Draw an execution time of ``task`` on ``worker`` from N(base, stddev^2), clipped at ``floor``.

    The worker argument is accepted for interface symmetry; all workers share
    the task's distribution.
    """
    if task.duration_stddev == 0:
        return task.base_duration
    return duration_from_normal(task, float(rng.standard_normal()), floor)


# --- JSON task graphs ------------------------------------------------------

_GRAPH_KEYS = {"graph_id", "tasks"}
_TASK_KEYS = {"id", "kind", "base_duration_s", "stddev_s", "preds"}


def task_graph_from_dict(doc: Mapping) -> TaskGraph:
    for k in doc:
        if k not in _GRAPH_KEYS:
            raise UnknownKey(k)
    if "graph_id" not in doc or "tasks" not in doc:
        raise ValidationError("graph", "graph_id and tasks are required")
    tasks = []
    for i, t in enumerate(doc["tasks"]):
        for k in t:
            if k not in _TASK_KEYS:
                raise UnknownKey(f"tasks[{i}].{k}")
        try:
            kind = TaskKind(t["kind"])
        except (KeyError, ValueError):
            raise ValidationError(f"tasks[{i}].kind", f"expected one of {[k.value for k in TaskKind]}")
        base = t.get("base_duration_s")
        if not isinstance(base, (int, float)) or isinstance(base, bool) or not math.isfinite(base):
            raise ValidationError(f"tasks[{i}].base_duration_s", "must be a finite number")
        tasks.append(
            TaskSpec(
                task_id=str(t["id"]),
                kind=kind,
                base_duration=float(base),
                duration_stddev=float(t.get("stddev_s", 0.0)),
                predecessors=frozenset(str(p) for p in t.get("preds", [])),
            )
        )
    graph = TaskGraph(str(doc["graph_id"]), tasks)
    validate_task_graph(graph)
    return graph


def task_graph_to_dict(graph: TaskGraph) -> dict:
    return {
        "graph_id": graph.graph_id,
        "tasks": [
            {
                "id": t.task_id,
                "kind": t.kind.value,
                "base_duration_s": t.base_duration,
                "stddev_s": t.duration_stddev,
                "preds": sorted(t.predecessors),
            }
            for t in graph.tasks
        ],
    }


def load_task_graphs(path: str | Path) -> list[TaskGraph]:
    """Load one graph document, or a JSON list of them."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    docs = doc if isinstance(doc, list) else [doc]
    return [task_graph_from_dict(d) for d in docs]
