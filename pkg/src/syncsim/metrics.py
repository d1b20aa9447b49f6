"""Per-run measurements, their aggregation, and CSV/JSONL export."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from syncsim.errors import DuplicateRecord, EmptyInput, IoError
from syncsim.protocols import FailReason, Failed

SR_WINDOW_S = 10.0

REPORT_COLUMNS = [
    "policy",
    "update_scheme",
    "workers",
    "clusters",
    "min_cluster_size",
    "sync_degree",
    "lambda_s",
    "retries",
    "accuracy",
    "seed",
    "runtime_per_sync_s",
    "pct_fail_quorum",
    "pct_fail_incomplete",
    "extra_attempts",
    "ctrl_msgs",
    "max_sr_per_10s",
]
# trailing columns identifying the swept parameter; empty outside sweeps
SWEEP_COLUMNS = ["sweep_param", "sweep_value"]


@dataclass
class MetricsRecord:
    run_index: int
    runtime_s: float = 0.0
    sync_points: int = 0
    extra_quorum_attempts: int = 0
    failed_sync_quorum: int = 0
    failed_sync_incomplete: int = 0
    controller_update_messages: int = 0
    sync_successes: int = 0
    replication: int = 0
    # virtual times at which successful sync tasks completed
    sync_times: list = field(default_factory=list)

    def __post_init__(self):
        counts = (
            self.sync_points,
            self.extra_quorum_attempts,
            self.failed_sync_quorum,
            self.failed_sync_incomplete,
            self.controller_update_messages,
            self.sync_successes,
        )
        if min(counts) < 0:
            raise ValueError("counts must be >= 0")


class MetricsCollector:
    """Accumulates one replication's records, one run at a time."""

    def __init__(self, replication: int = 0):
        self.replication = replication
        self.records: list[MetricsRecord] = []
        self.current: MetricsRecord | None = None
        self._seen: set = set()
        self._run_start = 0.0

    def begin_run(self, run_index: int, now: float) -> MetricsRecord:
        self.current = MetricsRecord(run_index, replication=self.replication)
        self._run_start = now
        return self.current

    def end_run(self, now: float) -> MetricsRecord:
        rec = self.current
        rec.runtime_s = now - self._run_start
        self.records.append(rec)
        self.current = None
        return rec

    def count_update_messages(self, n: int = 1) -> None:
        self.current.controller_update_messages += n


def record_sync_outcome(collector: MetricsCollector, task_key, outcome, timing: float, retries: int) -> MetricsCollector:
    """Count one resolved sync task.

    ``outcome`` is a :class:`Failed` or anything else for success; ``timing``
    is the resolution time and ``retries`` the extra quorum attempts made.
    """
    if task_key in collector._seen:
        raise DuplicateRecord(task_key)
    collector._seen.add(task_key)
    rec = collector.current
    if rec is None:
        rec = collector.begin_run(0, 0.0)
    rec.sync_points += 1
    rec.extra_quorum_attempts += retries
    if isinstance(outcome, Failed):
        if outcome.reason is FailReason.INCOMPLETE_RESULTS:
            rec.failed_sync_incomplete += 1
        else:
            rec.failed_sync_quorum += 1
    else:
        rec.sync_successes += 1
        rec.sync_times.append(timing)
    return collector


# --- aggregation -------------------------------------------------------------


def max_window_count(times: Iterable[float], width: float = SR_WINDOW_S) -> int:
    """Largest number of events in any window ``[k, k + width)`` with integer ``k``.

    An optimal window can always start at ``floor(t)`` of one of the events,
    so only those starts are examined.
    """
    ts = sorted(times)
    best = 0
    for k in sorted({math.floor(t) for t in ts}):
        best = max(best, bisect.bisect_left(ts, k + width) - bisect.bisect_left(ts, k))
    return best


@dataclass
class AggregateReport:
    key: dict
    runs: int
    sync_points: int
    runtime_per_sync_point: float
    runtime_per_sync_point_stddev: float
    pct_failed_quorum: float
    pct_failed_incomplete: float
    extra_attempts_per_sync: float
    ctrl_msgs_per_sync: float
    sync_rate_per_10s: float

    def row(self) -> dict:
        k = self.key
        return {
            "policy": k.get("policy", ""),
            "update_scheme": k.get("update_scheme", ""),
            "workers": k.get("workers", ""),
            "clusters": k.get("clusters", ""),
            "min_cluster_size": k.get("min_cluster_size", ""),
            "sync_degree": k.get("sync_degree", ""),
            "lambda_s": k.get("lambda_s", ""),
            "retries": k.get("retries", ""),
            "accuracy": k.get("accuracy", ""),
            "seed": k.get("seed", ""),
            "runtime_per_sync_s": self.runtime_per_sync_point,
            "pct_fail_quorum": self.pct_failed_quorum,
            "pct_fail_incomplete": self.pct_failed_incomplete,
            "extra_attempts": self.extra_attempts_per_sync,
            "ctrl_msgs": self.ctrl_msgs_per_sync,
            "max_sr_per_10s": self.sync_rate_per_10s,
            "sweep_param": k.get("sweep_param", ""),
            "sweep_value": k.get("sweep_value", ""),
        }


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def aggregate(records: Iterable[MetricsRecord], key: Mapping | None = None) -> AggregateReport:
    """Pool records into one report row.

    Runtime per sync point is total runtime over total sync points; its
    stddev is over per-run values. The SR figure is the mean over
    replications of each replication's busiest 10 s window.
    """
    records = list(records)
    if not records:
        raise EmptyInput()
    total_rt = sum(r.runtime_s for r in records)
    total_sp = sum(r.sync_points for r in records)
    per_run = [r.runtime_s / r.sync_points for r in records if r.sync_points]
    if len(per_run) > 1:
        m = sum(per_run) / len(per_run)
        sd = math.sqrt(sum((x - m) ** 2 for x in per_run) / (len(per_run) - 1))
    else:
        sd = 0.0
    by_rep: dict[int, list[float]] = {}
    for r in records:
        by_rep.setdefault(r.replication, []).extend(r.sync_times)
    sr = [max_window_count(ts) for _, ts in sorted(by_rep.items())]
    return AggregateReport(
        key=dict(key or {}),
        runs=len(records),
        sync_points=total_sp,
        runtime_per_sync_point=_ratio(total_rt, total_sp),
        runtime_per_sync_point_stddev=sd,
        pct_failed_quorum=100.0 * _ratio(sum(r.failed_sync_quorum for r in records), total_sp),
        pct_failed_incomplete=100.0 * _ratio(sum(r.failed_sync_incomplete for r in records), total_sp),
        extra_attempts_per_sync=_ratio(sum(r.extra_quorum_attempts for r in records), total_sp),
        ctrl_msgs_per_sync=_ratio(sum(r.controller_update_messages for r in records), total_sp),
        sync_rate_per_10s=sum(sr) / len(sr),
    )


# --- export ------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _canon(v):
    if isinstance(v, float):
        return float(f"{v:.6g}")
    return v


def export_text(reports: Iterable[AggregateReport], format: str = "csv") -> str:
    reports = list(reports)
    if format == "csv":
        cols = REPORT_COLUMNS + SWEEP_COLUMNS
        lines = [",".join(cols)]
        for rep in reports:
            row = rep.row()
            lines.append(",".join(fmt(row[c]) for c in cols))
        return "\n".join(lines) + "\n"
    if format == "jsonl":
        out = []
        for rep in reports:
            row = {k: _canon(v) for k, v in rep.row().items()}
            out.append(json.dumps(row, sort_keys=True, separators=(",", ":")))
        return "".join(line + "\n" for line in out)
    raise ValueError(f"unknown export format {format!r}")


def export(reports: Iterable[AggregateReport], path: str | Path, format: str = "csv") -> Path:
    text = export_text(reports, format)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise IoError(str(e)) from e
    return Path(path)
