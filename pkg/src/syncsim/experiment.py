"""Replicated experiments and parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable

from syncsim.config import ExperimentConfig, with_param
from syncsim.metrics import AggregateReport, MetricsRecord, aggregate
from syncsim.model import TaskGraph, TaskKind, TaskSpec, load_task_graphs
from syncsim.streams import Purpose, stream
from syncsim.traces import log_uniform, parse_mobility_csv, resample
from syncsim.world import World, WorldSpec


def generate_graphs(cfg: ExperimentConfig) -> list[TaskGraph]:
    """Build the experiment's task graphs, or load them from ``task_graphs.file``.

    Generated graphs are chains: sync tasks sit at randomly chosen positions
    (about ``sync_fraction`` of the chain, at least one when the fraction is
    positive) and the remaining tasks are asynchronous controller calls or
    worker-local computations. Base durations are log-uniform over the
    configured range.
    """
    g = cfg.task_graphs
    if g.file:
        return load_task_graphs(g.file)
    graphs = []
    width = len(str(g.total_tasks - 1))
    for k in range(g.count):
        rng = stream(cfg.seed, Purpose.GRAPH, k)
        n = g.total_tasks
        n_sync = int(round(g.sync_fraction * n))
        if g.sync_fraction > 0:
            n_sync = max(1, n_sync)
        sync_at = set(rng.choice(n, size=min(n_sync, n), replace=False).tolist())
        bases = log_uniform(rng.random(n), g.min_duration_s, g.max_duration_s)
        async_coin = rng.random(n)
        tasks = []
        for i in range(n):
            if i in sync_at:
                kind = TaskKind.C2W_SYNC
            else:
                kind = TaskKind.C2W_ASYNC if async_coin[i] < 0.5 else TaskKind.LOCAL_WORKER
            base = float(bases[i])
            preds = {f"t{i - 1:0{width}d}"} if i else set()
            tasks.append(TaskSpec(f"t{i:0{width}d}", kind, base, g.duration_cv * base, frozenset(preds)))
        graphs.append(TaskGraph(f"g{k}", tuple(tasks)))
    return graphs


def world_spec(cfg: ExperimentConfig, record_history: bool = False) -> WorldSpec:
    grid = None
    if cfg.mobility.mode == "trace":
        grid = resample(parse_mobility_csv(cfg.mobility.trace_file), cfg.mobility.interval_s)
    return WorldSpec(
        policy=cfg.sync_policy(),
        update_scheme=cfg.scheme(),
        fog_count=cfg.fog_count,
        local_queue_depth=cfg.task_graphs.local_queue_depth,
        local_min_s=cfg.task_graphs.local_min_s,
        local_max_s=cfg.task_graphs.local_max_s,
        mobility=cfg.mobility.mode,
        speed_mps=cfg.mobility.speed_mps,
        area_m=cfg.mobility.area_m,
        mobility_interval_s=cfg.mobility.interval_s,
        position_grid=grid,
        record_history=record_history,
    )


@dataclass
class ReplicationResult:
    replication: int
    records: list[MetricsRecord]
    decisions: list[dict]
    sync_starts: list[dict]
    joins: list[float]
    end_time: float
    histories: dict | None = None


def run_replication(cfg: ExperimentConfig, r: int, graphs: list[TaskGraph] | None = None, record_history: bool = False) -> ReplicationResult:
    """Run replication ``r`` with seed ``cfg.seed + r``."""
    graphs = graphs if graphs is not None else generate_graphs(cfg)
    world = World(cfg.sim_config(cfg.seed + r), world_spec(cfg, record_history), graphs, cfg.runs_per_replication, r)
    res = world.run_all()
    hist = {wid: list(w.history) for wid, w in res.workers.items()} if record_history else None
    return ReplicationResult(r, res.records, res.decisions, res.sync_starts, res.joins, res.end_time, hist)


def _replication_job(args: tuple) -> ReplicationResult:
    cfg, r, graphs = args
    return run_replication(cfg, r, graphs)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: AggregateReport
    replications: list[ReplicationResult] = field(default_factory=list)

    @property
    def records(self) -> list[MetricsRecord]:
        return [rec for rep in self.replications for rec in rep.records]

    @property
    def decisions(self) -> list[dict]:
        return [d for rep in self.replications for d in rep.decisions]

    @property
    def sync_starts(self) -> list[dict]:
        return [s for rep in self.replications for s in rep.sync_starts]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, key_extra: dict | None = None) -> ExperimentResult:
    """All replications of ``cfg``, optionally spread over ``jobs`` processes.

    Results are merged in replication order, so output never depends on the
    job count.
    """
    graphs = generate_graphs(cfg)
    args = [(cfg, r, graphs) for r in range(cfg.replications)]
    if jobs > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.replications)) as pool:
            reps = list(pool.map(_replication_job, args, chunksize=max(1, math.ceil(len(args) / (4 * jobs)))))
    else:
        reps = [_replication_job(a) for a in args]
    key = cfg.report_key()
    key.update(key_extra or {})
    report = aggregate([rec for rep in reps for rec in rep.records], key)
    return ExperimentResult(cfg, report, reps)


def sweep(cfg: ExperimentConfig, param: str, values: Iterable[Any], jobs: int = 1) -> list[ExperimentResult]:
    """One experiment per value; every value reuses the same per-replication seeds."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    configs = [with_param(cfg, param, v) for v in values]
    return [run_experiment(c, jobs, {"sweep_param": param, "sweep_value": v}) for c, v in zip(configs, values)]
