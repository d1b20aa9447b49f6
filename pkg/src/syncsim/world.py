"""A simulated deployment: controller tree, workers, graph walk and sync points.

Each fog controller walks its copy of the task graph one task at a time.
Worker-side tasks are appended to every connected worker's timeline at
dispatch, so the controller runs ahead of its workers exactly as far as the
graph lets it. A controller-to-worker sync task stops the walk until the
sync point resolves, either with the sync task run on the committed workers
or with an abort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from syncsim.engine import (
    EventKind,
    EventQueue,
    SimConfig,
    SimEvent,
    Topology,
    apply_join_process,
    fails,
    perturb,
    run_until_idle,
    send_message,
)
from syncsim.errors import BarrierTimeout
from syncsim.metrics import MetricsCollector, MetricsRecord, record_sync_outcome
from syncsim.model import (
    Barrier,
    ComponentRedundant,
    ControllerNode,
    Level,
    Liveness,
    SyncPolicy,
    TaskGraph,
    TaskKind,
    TaskSpec,
    TimeRedundant,
    TimeSlotted,
    UpdateScheme,
    WorkerState,
    duration_from_normal,
)
from syncsim.protocols import (
    Broker,
    Failed,
    FailReason,
    Passed,
    Retry,
    Scheduled,
    SyncCompleted,
    SyncPointState,
    barrier_sync,
    broker_node_id,
    cluster_quorum_check,
    complete_component_sync,
    compute_quorum_check_time,
    emit_group_message,
    local_schedule,
    push_status_update,
    ratio_quorum_check,
    slot_quorum,
    slot_time,
)
from syncsim.streams import Purpose, Streams, stream
from syncsim.traces import PositionGrid, RandomWaypoint, assign_clusters, group_cells, log_uniform

CLOUD_ID = "cloud"


@dataclass
class WorldSpec:
    """Everything about a deployment beyond the scalar simulation knobs."""

    policy: SyncPolicy = field(default_factory=TimeRedundant)
    update_scheme: UpdateScheme = UpdateScheme.ALL_WORKER
    fog_count: int = 1
    local_queue_depth: int = 0
    local_min_s: float = 5.0
    local_max_s: float = 30.0
    mobility: str = "none"
    speed_mps: float = 10.0
    area_m: float = 1000.0
    mobility_interval_s: float = 30.0
    position_grid: PositionGrid | None = None
    record_history: bool = False

    @property
    def formation_threshold(self) -> int:
        if isinstance(self.policy, ComponentRedundant):
            return self.policy.min_cluster_size
        return 1


@dataclass
class Nominal:
    """Configured-mean timeline of the current segment, for slots and timeouts."""

    start: float
    end: float
    var: float = 0.0

    def add(self, release: float, mean: float, sd: float = 0.0) -> None:
        self.end = max(self.end, release) + mean
        self.var += sd * sd

    @property
    def mu(self) -> float:
        return self.end - self.start

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var)


@dataclass
class SyncRun:
    """Controller-side bookkeeping for one sync point (all attempts)."""

    task: TaskSpec
    index: int
    state: SyncPointState
    t0: float
    token: int = 0
    attempt: int = 0
    participants: list = field(default_factory=list)
    clusters: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    brokers: dict = field(default_factory=dict)
    outstanding: set = field(default_factory=set)
    reports: list = field(default_factory=list)
    pre_local: dict = field(default_factory=dict)
    arrivals: dict = field(default_factory=dict)
    pending_results: set = field(default_factory=set)
    results_by_cluster: dict = field(default_factory=dict)
    mu: float = 0.0
    sigma: float = 0.0
    timeout_at: float = math.inf


@dataclass
class FogState:
    fog_id: str
    index: int
    ctrl: ControllerNode
    graph: TaskGraph | None = None
    done: set = field(default_factory=set)
    finished: bool = True
    wake_pending: bool = False
    sync: SyncRun | None = None
    nominal: Nominal = field(default_factory=lambda: Nominal(0.0, 0.0))


@dataclass
class WorldResult:
    records: list[MetricsRecord]
    decisions: list[dict]
    sync_starts: list[dict]
    events: int
    end_time: float
    joins: list[float]
    workers: dict


class World:
    def __init__(
        self,
        config: SimConfig,
        spec: WorldSpec,
        graphs: list[TaskGraph],
        runs: int,
        replication: int = 0,
    ):
        if not graphs:
            raise ValueError("at least one task graph is required")
        self.config = config
        self.spec = spec
        self.graphs = graphs
        self.runs = runs
        self.replication = replication
        self.queue = EventQueue()
        self.streams = Streams(config.rng_seed)
        self.collector = MetricsCollector(replication)
        self.decisions: list[dict] = []
        self.sync_starts: list[dict] = []
        self.joins: list[float] = []
        self.run = -1
        self.finished = False
        self._run_end_posted = False
        self._token = 0
        self._epoch: dict[int, int] = {}
        self._walkers: dict[int, RandomWaypoint] = {}
        self._index_cache: dict[int, dict[str, int]] = {}

        self.topology = Topology(CLOUD_ID)
        self.cloud = ControllerNode(CLOUD_ID, Level.CLOUD)
        self.fogs: dict[str, FogState] = {}
        for i in range(spec.fog_count):
            fid = f"f{i}"
            ctrl = ControllerNode(fid, Level.FOG, parent=CLOUD_ID)
            self.cloud.children.append(fid)
            self.topology.attach(fid, CLOUD_ID)
            self.fogs[fid] = FogState(fid, i, ctrl)
        self.workers: dict[int, WorkerState] = {}
        self._next_worker = 0
        for _ in range(config.worker_count):
            self.add_worker(now=0.0, announce=False)

    # --- plumbing ------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.queue.clock.now

    @property
    def delay(self) -> float:
        return self.config.controller_worker_delay

    def _send(self, src, dst, body: dict) -> SimEvent:
        return send_message(self.queue, self.topology, src, dst, body, self.delay)

    def _post(self, t: float, kind: EventKind, **payload) -> SimEvent:
        return self.queue.post(t, kind, payload)

    def _task_index(self, graph: TaskGraph, task_id: str) -> int:
        idx = self._index_cache.get(id(graph))
        if idx is None:
            idx = {t.task_id: i for i, t in enumerate(graph.tasks)}
            self._index_cache[id(graph)] = idx
        return idx[task_id]

    def _duration(self, task: TaskSpec, wid: int, index: int) -> float:
        if task.duration_stddev == 0:
            return task.base_duration
        z = self.streams.normal(Purpose.DURATION, (self.run, wid), index)
        return duration_from_normal(task, z, self.config.duration_floor_s)

    def _fog_workers(self, fog: FogState, connected: bool = True) -> list[WorkerState]:
        return [
            w for _, w in sorted(self.workers.items()) if w.fog_id == fog.fog_id and (w.connected or not connected)
        ]

    # --- membership ----------------------------------------------------------

    def add_worker(self, now: float | None = None, announce: bool = True) -> WorkerState:
        """Attach a fresh connected worker, available from ``now``."""
        now = self.now if now is None else now
        wid = self._next_worker
        self._next_worker += 1
        fog_id = f"f{wid % self.spec.fog_count}"
        w = WorkerState(wid, t_avail=now, fog_id=fog_id, history=[] if self.spec.record_history else None)
        self.workers[wid] = w
        self._epoch[wid] = 0
        self.fogs[fog_id].ctrl.children.append(wid)
        self.topology.attach(wid, fog_id)
        if self.spec.mobility == "random_waypoint":
            walker = RandomWaypoint(stream(self.config.rng_seed, Purpose.MOBILITY, wid), self.spec.speed_mps, self.spec.area_m)
            self._walkers[wid] = walker
            w.position = (float(walker.pos[0]), float(walker.pos[1]))
        elif self.spec.mobility == "trace":
            w.position = self._trace_position(wid)
        if announce:
            self.joins.append(now)
        return w

    def _trace_position(self, wid: int) -> tuple[float, float]:
        grid = self.spec.position_grid
        node = wid % len(grid.nodes)
        k = grid.index_at(self.now)
        return float(grid.xy[node, k, 0]), float(grid.xy[node, k, 1])

    def _fail(self, w: WorkerState) -> None:
        w.liveness = Liveness.FAILED
        self._epoch[w.worker_id] += 1
        w.cluster_id = None
        # failure detector: the parent controller hears about it one delay later
        self._send(w.worker_id, w.fog_id, {"type": "down"})

    def _reconnect(self, w: WorkerState) -> None:
        w.liveness = Liveness.CONNECTED
        w.t_avail = max(w.t_avail, self.now)

    def _recluster(self, fog: FogState) -> None:
        members = self._fog_workers(fog)
        threshold = self.spec.formation_threshold
        c = self.config.cluster_count
        if self.spec.mobility == "none":
            cells = {w.worker_id: w.worker_id % c for w in members}
            assignment = group_cells(cells, threshold)
        else:
            if self.spec.mobility == "trace":
                xy = self.spec.position_grid.xy
                bbox = (float(xy[..., 0].min()), float(xy[..., 1].min()), float(xy[..., 0].max()), float(xy[..., 1].max()))
            else:
                bbox = (0.0, 0.0, self.spec.area_m, self.spec.area_m)
            assignment = assign_clusters({w.worker_id: w.position for w in members}, c, threshold, bbox)
        for w in self._fog_workers(fog, connected=False):
            cid = assignment.get(w.worker_id)
            w.cluster_id = f"{fog.fog_id}:{cid}" if cid is not None else None

    # --- driver --------------------------------------------------------------

    def start(self) -> None:
        self._post(0.0, EventKind.JOIN_CHECK)
        if self.spec.mobility != "none":
            self._post(self.spec.mobility_interval_s, EventKind.MOBILITY_SAMPLE)

    def run_all(self) -> WorldResult:
        self.start()
        n = run_until_idle(self.queue, self.dispatch, self.config.max_events)
        return WorldResult(
            records=self.collector.records,
            decisions=self.decisions,
            sync_starts=self.sync_starts,
            events=n,
            end_time=self.now,
            joins=self.joins,
            workers=self.workers,
        )

    def dispatch(self, ev: SimEvent) -> None:
        handler = {
            EventKind.MESSAGE_ARRIVAL: self._on_message,
            EventKind.TASK_COMPLETE: self._on_task_complete,
            EventKind.QUORUM_TIMER_FIRE: self._on_quorum_timer,
            EventKind.SLOT_BOUNDARY: self._on_slot,
            EventKind.MOBILITY_SAMPLE: self._on_mobility,
            EventKind.FAILURE_CHECK: self._on_barrier_timeout,
            EventKind.JOIN_CHECK: self._on_run_boundary,
        }[ev.kind]
        handler(ev.payload)

    # --- run boundaries ------------------------------------------------------

    def _on_run_boundary(self, _p: dict) -> None:
        if self.run >= 0:
            self.collector.end_run(self.now)
            self.streams.forget_run(self.run)
        self.run += 1
        self._run_end_posted = False
        if self.run >= self.runs:
            self.finished = True
            return
        apply_join_process(self, self.streams.uniform(Purpose.JOIN, (self.run,), 0))
        for w in self.workers.values():
            if not w.connected:
                self._reconnect(w)
        self._refill_local_queues()
        self.collector.begin_run(self.run, self.now)
        graph = self.graphs[self.run % len(self.graphs)]
        for fog in self.fogs.values():
            fog.graph = graph
            fog.done = set()
            fog.finished = False
            fog.nominal = Nominal(self.now, self.now)
            self._recluster(fog)
        for fog in self.fogs.values():
            self._walk(fog)

    def _refill_local_queues(self) -> None:
        depth = self.spec.local_queue_depth
        for w in self.workers.values():
            j = 0
            while len(w.local_queue) < depth:
                u = self.streams.uniform(Purpose.LOCAL, (self.run, w.worker_id), j)
                t_l = log_uniform(u, self.spec.local_min_s, self.spec.local_max_s)
                w.local_queue.append(TaskSpec(f"L{self.run}.{w.worker_id}.{j}", TaskKind.LOCAL_WORKER, t_l))
                j += 1

    def _maybe_end_run(self) -> None:
        if self._run_end_posted:
            return
        if any(not f.finished or f.sync is not None for f in self.fogs.values()):
            return
        end = max(
            [self.now]
            + [w.t_avail for w in self.workers.values() if w.connected]
            + [f.ctrl.t_avail for f in self.fogs.values()]
        )
        self._run_end_posted = True
        self._post(end, EventKind.JOIN_CHECK)

    def _on_mobility(self, _p: dict) -> None:
        if self.finished:
            return
        for wid, w in sorted(self.workers.items()):
            if self.spec.mobility == "random_waypoint":
                w.position = self._walkers[wid].step(self.spec.mobility_interval_s)
            else:
                w.position = self._trace_position(wid)
        for fog in self.fogs.values():
            self._recluster(fog)
        self._post(self.now + self.spec.mobility_interval_s, EventKind.MOBILITY_SAMPLE)

    # --- graph walk ----------------------------------------------------------

    def _walk(self, fog: FogState) -> None:
        while fog.sync is None and not fog.finished:
            if fog.ctrl.t_avail > self.now:
                if not fog.wake_pending:
                    fog.wake_pending = True
                    self._post(fog.ctrl.t_avail, EventKind.TASK_COMPLETE, what="wake", fog=fog.fog_id)
                return
            ready = [t for t in fog.graph.tasks if t.task_id not in fog.done and t.predecessors <= fog.done]
            if not ready:
                fog.finished = True
                self._maybe_end_run()
                return
            self._dispatch_task(fog, min(ready, key=lambda t: t.task_id))

    def _dispatch_task(self, fog: FogState, task: TaskSpec) -> None:
        now, d = self.now, self.delay
        idx = self._task_index(fog.graph, task.task_id)
        kind = task.kind
        if kind is TaskKind.C2W_SYNC:
            sync = SyncRun(task, idx, SyncPointState(task.task_id), now)
            fog.sync = sync
            self._call_attempt(fog)
            return
        fog.done.add(task.task_id)
        workers = self._fog_workers(fog)
        if kind is TaskKind.LOCAL_CONTROLLER:
            z = 0.0
            if task.duration_stddev:
                z = self.streams.normal(Purpose.CONTROLLER, (self.run, fog.index), idx)
            fog.ctrl.occupy(now, duration_from_normal(task, z, self.config.duration_floor_s))
        elif kind in (TaskKind.C2W_ASYNC, TaskKind.LOCAL_WORKER):
            release = now + d if kind is TaskKind.C2W_ASYNC else now
            for w in workers:
                _, end = w.occupy(release, self._duration(task, w.worker_id, idx), task.task_id)
                self._post(end, EventKind.TASK_COMPLETE, what="work", wid=w.worker_id, epoch=self._epoch[w.worker_id], index=idx)
            fog.nominal.add(release, task.base_duration, task.duration_stddev)
        elif kind is TaskKind.W2C_SYNC:
            # the controller serves calls in arrival order; callers block until the reply lands
            for w in sorted(workers, key=lambda w: (max(w.t_avail, now), w.worker_id)):
                issue = max(w.t_avail, now)
                served = fog.ctrl.occupy(issue + d, self._duration(task, w.worker_id, idx))
                _, end = w.occupy(issue, served + d - issue, task.task_id)
                self._post(end, EventKind.TASK_COMPLETE, what="work", wid=w.worker_id, epoch=self._epoch[w.worker_id], index=idx)
            fog.nominal.add(now, 2 * d + task.base_duration, task.duration_stddev)
        elif kind is TaskKind.W2C_ASYNC:
            # fire-and-forget: only the controller pays for the call
            for w in sorted(workers, key=lambda w: (max(w.t_avail, now), w.worker_id)):
                fog.ctrl.occupy(max(w.t_avail, now) + d, self._duration(task, w.worker_id, idx))

    def _on_task_complete(self, p: dict) -> None:
        what = p["what"]
        if what == "wake":
            fog = self.fogs[p["fog"]]
            fog.wake_pending = False
            self._walk(fog)
            return
        if what in ("work", "sync_done", "reach"):
            w = self.workers[p["wid"]]
            if not w.connected or p["epoch"] != self._epoch[w.worker_id]:
                return
            if what == "reach":
                self._send(w.worker_id, w.fog_id, {"type": "arrive", "token": p["token"]})
                return
            u = self.streams.uniform(Purpose.FAILURE, (self.run, w.worker_id), p["index"])
            if fails(u, self.config.fail_probability):
                self._fail(w)
            elif what == "sync_done":
                self._send(w.worker_id, w.fog_id, {"type": "result", "token": p["token"]})
            return
        fog = self.fogs[p["fog"]]
        sync = fog.sync
        if sync is None or sync.token != p["token"]:
            return
        if what == "updates_done":
            self._on_updates_done(fog, sync)
        elif what == "retry":
            sync.attempt += 1
            self._call_attempt(fog)
        elif what == "barrier_done":
            self._on_barrier_done(fog)

    # --- sync points ---------------------------------------------------------

    def _call_attempt(self, fog: FogState) -> None:
        """Open (or re-open, after a retry delay) the current sync point."""
        sync = fog.sync
        policy = self.spec.policy
        self._token += 1
        sync.token = self._token
        sync.predictions, sync.reports, sync.pre_local = {}, [], {}
        connected = self._fog_workers(fog)
        if isinstance(policy, ComponentRedundant):
            sync.participants = [w.worker_id for w in connected if w.cluster_id is not None]
        else:
            sync.participants = [w.worker_id for w in connected]
        sync.clusters = {wid: self.workers[wid].cluster_id for wid in sync.participants}
        if not sync.participants:
            reason = {
                ComponentRedundant: FailReason.CLUSTER_UNDERFULL,
                Barrier: FailReason.BARRIER_TIMEOUT,
            }.get(type(policy), FailReason.RETRIES_EXHAUSTED)
            sync.state.delta = self.now
            self._decide(fog, 0, 0, Failed(reason))
            self._resolve(fog, Failed(reason))
            return

        if isinstance(policy, TimeSlotted):
            sync.mu, sync.sigma = fog.nominal.mu, fog.nominal.sigma
            slot = max(self.now, slot_time(fog.nominal.start, sync.mu, sync.sigma, policy))
            sync.state.delta = slot
            self._post(slot, EventKind.SLOT_BOUNDARY, fog=fog.fog_id, token=sync.token, settled=False)
            return

        if isinstance(policy, Barrier):
            sync.arrivals = {}
            sync.timeout_at = self.now + policy.timeout_factor * max(fog.nominal.mu, sync.task.base_duration)
            self._post(sync.timeout_at, EventKind.FAILURE_CHECK, fog=fog.fog_id, token=sync.token)
        elif self.spec.update_scheme is UpdateScheme.PUBLISH_SUBSCRIBE:
            by_cluster: dict[str, list[int]] = {}
            for wid in sync.participants:
                by_cluster.setdefault(sync.clusters[wid], []).append(wid)
            sync.brokers = {}
            for cid, members in sorted(by_cluster.items(), key=lambda kv: str(kv[0])):
                sync.brokers[cid] = Broker(cid, members)
                node = broker_node_id(fog.fog_id, cid)
                if node not in self.topology.parent:
                    self.topology.attach(node, fog.fog_id)
            sync.outstanding = set(sync.brokers)
        else:
            sync.outstanding = set(sync.participants)
        body = {"type": "sync_call", "task": sync.task.task_id, "token": sync.token}
        for wid in sync.participants:
            self._send(fog.fog_id, wid, body)

    def _on_message(self, p: dict) -> None:
        dst, body = p["dst"], p["body"]
        if isinstance(dst, int):
            w = self.workers.get(dst)
            if w is None or not w.connected:
                return  # dropped at a dead endpoint
            self._worker_message(w, p["src"], body)
        else:
            self._controller_message(self.fogs[dst], p["src"], body)

    def _worker_message(self, w: WorkerState, src, body: dict) -> None:
        fog = self.fogs[w.fog_id]
        sync = fog.sync
        if sync is None or body.get("token") != sync.token:
            return
        kind = body["type"]
        if kind == "sync_call":
            if isinstance(self.spec.policy, Barrier):
                reach = max(w.t_avail, self.now)
                self._post(reach, EventKind.TASK_COMPLETE, what="reach", wid=w.worker_id, epoch=self._epoch[w.worker_id], token=sync.token)
                return
            avail = max(w.t_avail, self.now)
            predicted = avail
            if self.config.prediction_accuracy < 1:
                # the error scales with the work still ahead of the worker
                v = 2.0 * self._prediction_draw(w.worker_id, sync) - 1.0
                predicted = self.now + perturb(avail - self.now, self.config.prediction_accuracy, v)
            sync.predictions[w.worker_id] = predicted
            scheme = self.spec.update_scheme
            tag = {"token": sync.token}
            if scheme is UpdateScheme.PUBLISH_SUBSCRIBE:
                # publish under the cluster the sync call was addressed to
                view = WorkerState(w.worker_id, cluster_id=sync.clusters[w.worker_id])
                push_status_update(self.queue, self.topology, view, scheme, predicted, fog.fog_id, self.delay, sync.brokers, tag)
            else:
                push_status_update(self.queue, self.topology, w, scheme, predicted, fog.fog_id, self.delay, tag=tag)
        elif kind == "delta":
            self._local_schedule(w, sync, body["delta"])
        elif kind == "start":
            self._start_sync_task(w, sync)

    def _prediction_draw(self, wid: int, sync: SyncRun) -> float:
        """Prediction noise in [0, 1): a blend of a per-fog draw shared by every
        worker at this sync attempt and the worker's own draw."""
        # 16 attempt slots per sync task keep the index independent of graph length
        k = sync.index * 16 + min(sync.attempt, 15)
        rho = self.config.prediction_shared_fraction
        own = self.streams.uniform(Purpose.PREDICTION, (self.run, wid), k)
        if rho == 0:
            return own
        fog = self.fogs[self.workers[wid].fog_id]
        shared = self.streams.uniform(Purpose.PREDICTION_SHARED, (self.run, fog.index), k)
        return rho * shared + (1.0 - rho) * own

    def _controller_message(self, fog: FogState, src, body: dict) -> None:
        sync = fog.sync
        kind = body["type"]
        if kind == "down":
            if sync is not None:
                self._on_worker_down(fog, sync, src)
            return
        if sync is None or body.get("token") != sync.token:
            return
        if kind in ("status", "group"):
            key = src if kind == "status" else body["cluster"]
            if key not in sync.outstanding:
                return
            fog.ctrl.occupy(self.now, self.config.status_update_cost)
            self.collector.count_update_messages()
            sync.outstanding.discard(key)
            sync.reports.append(body["predicted"])
            self._maybe_updates_done(fog, sync)
        elif kind == "arrive":
            fog.ctrl.occupy(self.now, self.config.status_update_cost)
            self.collector.count_update_messages()
            sync.arrivals[src] = fog.ctrl.t_avail
            if len(sync.arrivals) == len(sync.participants):
                self._post(fog.ctrl.t_avail, EventKind.TASK_COMPLETE, what="barrier_done", fog=fog.fog_id, token=sync.token)
        elif kind == "result":
            if src in sync.pending_results:
                sync.pending_results.discard(src)
                cid = sync.clusters.get(src)
                sync.results_by_cluster[cid] = sync.results_by_cluster.get(cid, 0) + 1
                self._maybe_complete(fog, sync)

    def _on_worker_down(self, fog: FogState, sync: SyncRun, wid: int) -> None:
        if isinstance(sync.state.outcome, Scheduled):
            if wid in sync.pending_results:
                sync.pending_results.discard(wid)
                self._maybe_complete(fog, sync)
            return
        if isinstance(self.spec.policy, (Barrier, TimeSlotted)) or wid not in sync.clusters:
            return
        if self.spec.update_scheme is UpdateScheme.PUBLISH_SUBSCRIBE:
            broker = sync.brokers.get(sync.clusters[wid])
            if broker is None or broker.emitted:
                return
            group = broker.withdraw(wid)
            if group is not None:
                emit_group_message(self.queue, self.topology, broker, fog.fog_id, group, self.delay, {"token": sync.token})
            elif broker.silent:
                sync.outstanding.discard(broker.cluster_id)
                self._maybe_updates_done(fog, sync)
        elif wid in sync.outstanding:
            sync.outstanding.discard(wid)
            self._maybe_updates_done(fog, sync)

    def _maybe_updates_done(self, fog: FogState, sync: SyncRun) -> None:
        if sync.outstanding:
            return
        t = max(self.now, fog.ctrl.t_avail)
        self._post(t, EventKind.TASK_COMPLETE, what="updates_done", fog=fog.fog_id, token=sync.token)

    def _on_updates_done(self, fog: FogState, sync: SyncRun) -> None:
        if not sync.reports:
            # nobody reported: evaluate the quorum right away with no one available
            sync.state.delta = self.now
            self._evaluate_quorum(fog, sync)
            return
        delta = compute_quorum_check_time(sync.reports, self.config.status_update_cost, self.delay, self.now)
        sync.state.delta = delta
        body = {"type": "delta", "delta": delta, "token": sync.token}
        for wid in sync.participants:
            if self.workers[wid].connected:
                self._send(fog.fog_id, wid, body)
        self._post(delta, EventKind.QUORUM_TIMER_FIRE, fog=fog.fog_id, token=sync.token, settled=False)

    def _local_schedule(self, w: WorkerState, sync: SyncRun, delta: float) -> None:
        sync.pre_local[w.worker_id] = w.t_avail
        if not w.local_queue:
            return
        believed = max(sync.predictions.get(w.worker_id, w.t_avail), self.now)
        taken, _ = local_schedule(believed, delta, [t.base_duration for t in w.local_queue])
        for i in taken:
            t = w.local_queue[i]
            w.occupy(self.now, t.base_duration, t.task_id)
        keep = set(range(len(w.local_queue))) - set(taken)
        w.local_queue = [t for i, t in enumerate(w.local_queue) if i in keep]

    def _on_quorum_timer(self, p: dict) -> None:
        fog = self.fogs[p["fog"]]
        sync = fog.sync
        if sync is None or sync.token != p["token"]:
            return
        if not p["settled"]:
            # let completions stamped at this same instant land first
            self._post(self.now, EventKind.QUORUM_TIMER_FIRE, fog=fog.fog_id, token=sync.token, settled=True)
            return
        self._evaluate_quorum(fog, sync)

    def _available(self, sync: SyncRun) -> list[int]:
        return [
            wid for wid in sync.participants if self.workers[wid].connected and self.workers[wid].t_avail <= self.now
        ]

    def _evaluate_quorum(self, fog: FogState, sync: SyncRun) -> None:
        policy = self.spec.policy
        avail = self._available(sync)
        if isinstance(policy, ComponentRedundant):
            counts = {cid: 0 for cid in sorted(set(sync.clusters.values()), key=str)}
            for wid in avail:
                counts[sync.clusters[wid]] += 1
            res = cluster_quorum_check(sync.state, counts, policy.required_available, self.delay)
        else:
            res = ratio_quorum_check(sync.state, len(avail), len(sync.participants), policy, self.delay)
        self._decide(fog, len(avail), len(sync.participants), res)
        if isinstance(res, Passed):
            self._commit(fog, sync, avail, res.start_time, by_message=True)
        elif isinstance(res, Retry):
            self._post(res.next_attempt, EventKind.TASK_COMPLETE, what="retry", fog=fog.fog_id, token=sync.token)
        else:
            self._resolve(fog, res)

    def _on_slot(self, p: dict) -> None:
        fog = self.fogs[p["fog"]]
        sync = fog.sync
        if sync is None or sync.token != p["token"]:
            return
        if not p["settled"]:
            self._post(self.now, EventKind.SLOT_BOUNDARY, fog=fog.fog_id, token=sync.token, settled=True)
            return
        avail = self._available(sync)
        res = slot_quorum(len(avail), len(sync.participants), self.spec.policy, self.now)
        self._decide(fog, len(avail), len(sync.participants), res)
        if isinstance(res, Passed):
            self._commit(fog, sync, avail, self.now, by_message=False)
        else:
            self._resolve(fog, res)

    def _on_barrier_done(self, fog: FogState) -> None:
        sync = fog.sync
        sync.state.delta = max(sync.arrivals.values())
        try:
            res = barrier_sync(sync.arrivals, self.delay, sync.timeout_at)
        except BarrierTimeout:
            # everyone arrived in time, but the controller only got through
            # the last arrival after the deadline
            res = Failed(FailReason.BARRIER_TIMEOUT)
            sync.state.abort(res.reason)
            self._decide(fog, len(sync.arrivals), len(sync.participants), res)
            self._resolve(fog, res)
            return
        self._decide(fog, len(sync.arrivals), len(sync.participants), res)
        self._commit(fog, sync, sorted(sync.arrivals), res.start_time, by_message=True)

    def _on_barrier_timeout(self, p: dict) -> None:
        fog = self.fogs[p["fog"]]
        sync = fog.sync
        if sync is None or sync.token != p["token"] or isinstance(sync.state.outcome, Scheduled):
            return
        if len(sync.arrivals) == len(sync.participants):
            return  # completion is already queued for this instant
        sync.state.delta = self.now
        res = Failed(FailReason.BARRIER_TIMEOUT)
        sync.state.abort(res.reason)
        self._decide(fog, len(sync.arrivals), len(sync.participants), res)
        self._resolve(fog, res)

    def _commit(self, fog: FogState, sync: SyncRun, committed: list[int], start: float, by_message: bool) -> None:
        sync.state.schedule(start, committed)
        sync.pending_results = set(committed)
        sync.results_by_cluster = {cid: 0 for cid in set(sync.clusters[w] for w in committed)}
        if isinstance(self.spec.policy, ComponentRedundant):
            sync.results_by_cluster = {cid: 0 for cid in set(sync.clusters.values())}
        if by_message:
            for wid in committed:
                self._send(fog.fog_id, wid, {"type": "start", "token": sync.token})
        else:
            for wid in committed:
                self._start_sync_task(self.workers[wid], sync)

    def _start_sync_task(self, w: WorkerState, sync: SyncRun) -> None:
        scheduled = sync.state.outcome.start_time
        start, end = w.occupy(self.now, self._duration(sync.task, w.worker_id, sync.index), sync.task.task_id)
        self.sync_starts.append(
            {
                "replication": self.replication,
                "run": self.run,
                "fog": w.fog_id,
                "sync_task": sync.task.task_id,
                "worker": w.worker_id,
                "scheduled": scheduled,
                "start": start,
            }
        )
        self._post(end, EventKind.TASK_COMPLETE, what="sync_done", wid=w.worker_id, epoch=self._epoch[w.worker_id], index=sync.index, token=sync.token)

    def _maybe_complete(self, fog: FogState, sync: SyncRun) -> None:
        if sync.pending_results:
            return
        if isinstance(self.spec.policy, ComponentRedundant):
            outcome = complete_component_sync(sync.results_by_cluster)
        else:
            outcome = SyncCompleted()
        self._resolve(fog, outcome)

    def _decide(self, fog: FogState, available: int, total: int, res) -> None:
        sync = fog.sync
        if isinstance(res, Passed):
            result, start = "Passed", res.start_time
        elif isinstance(res, Retry):
            result, start = "Retry", None
        else:
            result, start = f"Failed:{res.reason.value}", None
        late = 0
        for wid, before in sync.pre_local.items():
            w = self.workers[wid]
            if w.connected and before <= self.now < w.t_avail:
                late += 1
        self.decisions.append(
            {
                "t": self.now,
                "replication": self.replication,
                "run": self.run,
                "fog": fog.fog_id,
                "sync_task": sync.task.task_id,
                "policy": self.spec.policy.name,
                "attempt": sync.attempt,
                "available": available,
                "total": total,
                "result": result,
                "start": start,
                "delta": sync.state.delta,
                "local_delayed": late,
            }
        )

    def _resolve(self, fog: FogState, outcome) -> None:
        sync = fog.sync
        record_sync_outcome(
            self.collector,
            (self.replication, self.run, fog.fog_id, sync.task.task_id),
            outcome,
            self.now,
            sync.state.retries_used,
        )
        fog.done.add(sync.task.task_id)
        fog.sync = None
        for w in self._fog_workers(fog, connected=False):
            if not w.connected:
                self._reconnect(w)
        self._recluster(fog)
        fog.nominal = Nominal(self.now, self.now)
        self._walk(fog)
