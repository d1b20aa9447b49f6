"""Experiment configuration: JSON loading, defaults, validation and overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from syncsim.engine import SimConfig
from syncsim.errors import ParseError, UnknownKey, UnknownParameter, ValidationError
from syncsim.model import Barrier, ComponentRedundant, SyncPolicy, TimeRedundant, TimeSlotted, UpdateScheme

POLICIES = ("time_redundant", "component_redundant", "barrier", "time_slotted")
MOBILITY_MODES = ("none", "random_waypoint", "trace")


@dataclass(frozen=True)
class GraphConfig:
    count: int = 10
    total_tasks: int = 30
    sync_fraction: float = 0.3
    local_queue_depth: int = 5
    min_duration_s: float = 23.0
    max_duration_s: float = 269.0
    duration_cv: float = 0.2
    local_min_s: float = 5.0
    local_max_s: float = 30.0
    # optional JSON file of graphs; replaces the generator when set
    file: str | None = None

    def validate(self) -> None:
        if self.count < 1:
            raise ValidationError("task_graphs.count", "must be >= 1")
        if self.total_tasks < 1:
            raise ValidationError("task_graphs.total_tasks", "must be >= 1")
        if not 0 <= self.sync_fraction <= 1:
            raise ValidationError("task_graphs.sync_fraction", "must lie in [0, 1]")
        if self.local_queue_depth < 0:
            raise ValidationError("task_graphs.local_queue_depth", "must be >= 0")
        if not 0 < self.min_duration_s <= self.max_duration_s:
            raise ValidationError("task_graphs.min_duration_s", "need 0 < min_duration_s <= max_duration_s")
        if self.duration_cv < 0:
            raise ValidationError("task_graphs.duration_cv", "must be >= 0")
        if not 0 < self.local_min_s <= self.local_max_s:
            raise ValidationError("task_graphs.local_min_s", "need 0 < local_min_s <= local_max_s")


@dataclass(frozen=True)
class MobilityConfig:
    mode: str = "none"
    speed_mps: float = 10.0
    area_m: float = 1000.0
    interval_s: float = 30.0
    trace_file: str | None = None

    def validate(self) -> None:
        if self.mode not in MOBILITY_MODES:
            raise ValidationError("mobility.mode", f"expected one of {list(MOBILITY_MODES)}")
        if self.speed_mps < 0 or self.area_m <= 0 or self.interval_s <= 0:
            raise ValidationError("mobility", "speed must be >= 0, area and interval > 0")
        if self.mode == "trace" and not self.trace_file:
            raise ValidationError("mobility.trace_file", "required when mode is trace")


@dataclass(frozen=True)
class ExperimentConfig:
    policy: str = "time_redundant"
    update_scheme: str = "all_worker"
    worker_count: int = 20
    cluster_count: int = 4
    min_cluster_size: int = 3
    required_available: int = 1
    sync_degree: float = 0.7
    lambda_s: float = 20.0
    max_retries: int = 3
    prediction_accuracy: float = 1.0
    prediction_shared_fraction: float = 0.5
    fail_probability: float = 0.1
    join_probability: float = 0.1
    controller_worker_delay_s: float = 0.2
    status_update_cost_s: float = 1.0
    barrier_timeout_factor: float = 10.0
    slot_multiplier: float = 1.5
    duration_floor_s: float = 1e-3
    task_graphs: GraphConfig = field(default_factory=GraphConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    runs_per_replication: int = 200
    replications: int = 100
    seed: int = 0
    fog_count: int = 1
    max_events: int = 50_000_000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ValidationError("policy", f"expected one of {list(POLICIES)}")
        try:
            UpdateScheme(self.update_scheme)
        except ValueError:
            raise ValidationError("update_scheme", f"expected one of {[s.value for s in UpdateScheme]}") from None
        if self.runs_per_replication < 1:
            raise ValidationError("runs_per_replication", "must be >= 1")
        if self.replications < 1:
            raise ValidationError("replications", "must be >= 1")
        if self.fog_count < 1:
            raise ValidationError("controller_topology", "fog_count must be >= 1")
        if self.barrier_timeout_factor <= 0:
            raise ValidationError("barrier_timeout_factor", "must be > 0")
        self.task_graphs.validate()
        self.mobility.validate()
        self.sim_config(0)
        self.sync_policy()

    # --- derived objects ---------------------------------------------------

    def sync_policy(self) -> SyncPolicy:
        # every policy object is built so that invalid parameters surface even
        # when another policy is selected
        tr = TimeRedundant(self.sync_degree, self.lambda_s, self.max_retries)
        cr = ComponentRedundant(self.min_cluster_size, self.required_available)
        ba = Barrier(self.barrier_timeout_factor)
        ts = TimeSlotted(self.slot_multiplier, self.sync_degree)
        return {"time_redundant": tr, "component_redundant": cr, "barrier": ba, "time_slotted": ts}[self.policy]

    def scheme(self) -> UpdateScheme:
        return UpdateScheme(self.update_scheme)

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(
            controller_worker_delay=self.controller_worker_delay_s,
            status_update_cost=self.status_update_cost_s,
            fail_probability=self.fail_probability,
            join_probability=self.join_probability,
            rng_seed=seed,
            worker_count=self.worker_count,
            cluster_count=self.cluster_count,
            prediction_accuracy=self.prediction_accuracy,
            prediction_shared_fraction=self.prediction_shared_fraction,
            duration_floor_s=self.duration_floor_s,
            max_events=self.max_events,
        )

    def report_key(self) -> dict:
        return {
            "policy": self.policy,
            "update_scheme": self.update_scheme,
            "workers": self.worker_count,
            "clusters": self.cluster_count,
            "min_cluster_size": self.min_cluster_size,
            "sync_degree": self.sync_degree,
            "lambda_s": self.lambda_s,
            "retries": self.max_retries,
            "accuracy": self.prediction_accuracy,
            "seed": self.seed,
        }


# --- (de)serialization -------------------------------------------------------

# short names accepted by sweeps and the CLI
ALIASES = {
    "workers": "worker_count",
    "clusters": "cluster_count",
    "accuracy": "prediction_accuracy",
    "retries": "max_retries",
    "lambda": "lambda_s",
    "delay": "controller_worker_delay_s",
    "controller_worker_delay": "controller_worker_delay_s",
    "status_update_cost": "status_update_cost_s",
    "runs": "runs_per_replication",
}


def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(name, "must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValidationError(name, "must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(name, "must be a number")
        return float(value)
    if default is None or isinstance(default, str):
        if value is not None and not isinstance(value, str):
            raise ValidationError(name, "must be a string")
        return value
    return value


def _section(cls, doc: Any, prefix: str):
    if not isinstance(doc, Mapping):
        raise ValidationError(prefix, "must be an object")
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in doc.items():
        if k not in names:
            raise UnknownKey(f"{prefix}.{k}")
        kwargs[k] = _coerce(f"{prefix}.{k}", v, getattr(defaults, k))
    return cls(**kwargs)


def _topology(value: Any) -> int:
    if value == "single":
        return 1
    if isinstance(value, Mapping):
        for k in value:
            if k not in ("type", "fog_count"):
                raise UnknownKey(f"controller_topology.{k}")
        if value.get("type", "hierarchical") != "hierarchical":
            raise ValidationError("controller_topology.type", "expected 'hierarchical'")
        return _coerce("controller_topology.fog_count", value.get("fog_count", 2), 1)
    raise ValidationError("controller_topology", "expected 'single' or {\"type\": \"hierarchical\", \"fog_count\": n}")


def config_from_dict(doc: Mapping) -> ExperimentConfig:
    if not isinstance(doc, Mapping):
        raise ValidationError("config", "top level must be a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"fog_count"}
    defaults = {
        f.name: f.default if f.default is not dataclasses.MISSING else f.default_factory()
        for f in dataclasses.fields(ExperimentConfig)
    }
    kwargs: dict[str, Any] = {}
    for k, v in doc.items():
        if k == "controller_topology":
            kwargs["fog_count"] = _topology(v)
        elif k == "task_graphs":
            kwargs[k] = _section(GraphConfig, v, k)
        elif k == "mobility":
            kwargs[k] = _section(MobilityConfig, v, k)
        elif k in names:
            kwargs[k] = _coerce(k, v, defaults[k])
        else:
            raise UnknownKey(k)
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    fogs = doc.pop("fog_count")
    doc["controller_topology"] = "single" if fogs == 1 else {"type": "hierarchical", "fog_count": fogs}
    return doc


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a JSON config; an empty file means all defaults."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(0, f"cannot read {path}: {e}") from e
    if not text.strip():
        return ExperimentConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.lineno, e.msg) from None
    return config_from_dict(doc)


def with_param(cfg: ExperimentConfig, name: str, value: Any) -> ExperimentConfig:
    """Copy of ``cfg`` with one field replaced; dotted names reach into sections."""
    name = ALIASES.get(name, name)
    head, _, tail = name.partition(".")
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if head not in fields or (not tail and head in ("task_graphs", "mobility")):
        raise UnknownParameter(name)
    if tail:
        section = getattr(cfg, head)
        if not dataclasses.is_dataclass(section) or tail not in {f.name for f in dataclasses.fields(section)}:
            raise UnknownParameter(name)
        new = dataclasses.replace(section, **{tail: _coerce(name, value, getattr(section, tail))})
        return dataclasses.replace(cfg, **{head: new})
    return dataclasses.replace(cfg, **{head: _coerce(name, value, getattr(cfg, head))})


def parse_value(text: str) -> Any:
    """Parse one CLI sweep value: JSON if possible, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text
