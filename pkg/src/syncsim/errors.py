"""Exception hierarchy for the simulator, protocols, traces and harness."""

from __future__ import annotations


class SyncSimError(Exception):
    """Base class for every error raised by syncsim."""


# --- task graphs -----------------------------------------------------------


class GraphError(SyncSimError):
    pass


class CycleDetected(GraphError):
    def __init__(self, task_ids: list[str]):
        self.task_ids = list(task_ids)
        super().__init__(f"cycle detected through tasks {self.task_ids}")


class DanglingPredecessor(GraphError):
    def __init__(self, task_id: str, missing_id: str):
        self.task_id = task_id
        self.missing_id = missing_id
        super().__init__(f"task {task_id!r} depends on unknown task {missing_id!r}")


# --- engine ----------------------------------------------------------------


class SimulationError(SyncSimError):
    pass


class TimeTravel(SimulationError):
    def __init__(self, timestamp: float, now: float):
        self.timestamp = timestamp
        self.now = now
        super().__init__(f"event at t={timestamp!r} posted while clock is at t={now!r}")


class TopologyViolation(SimulationError):
    pass


class LivelockGuard(SimulationError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"event budget of {limit} dispatches exceeded")


# --- protocols -------------------------------------------------------------


class ProtocolError(SyncSimError):
    pass


class NoCluster(ProtocolError):
    def __init__(self, worker_id):
        self.worker_id = worker_id
        super().__init__(f"worker {worker_id!r} has no cluster to publish to")


class NoUpdates(ProtocolError):
    def __init__(self):
        super().__init__("quorum check time requested with zero status updates")


class BarrierTimeout(ProtocolError):
    def __init__(self, at: float, missing: list):
        self.at = at
        self.missing = list(missing)
        super().__init__(f"barrier timed out at t={at!r}; {len(self.missing)} worker(s) never arrived")


# --- metrics ---------------------------------------------------------------


class MetricsError(SyncSimError):
    pass


class DuplicateRecord(MetricsError):
    def __init__(self, task_key):
        self.task_key = task_key
        super().__init__(f"sync outcome for {task_key!r} already recorded")


class EmptyInput(MetricsError):
    def __init__(self):
        super().__init__("cannot aggregate an empty record set")


class IoError(SyncSimError):
    pass


# --- traces and configuration ----------------------------------------------


class ParseError(SyncSimError):
    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ConfigError(SyncSimError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class UnknownKey(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown configuration key {key!r}")


class UnknownParameter(ConfigError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"cannot sweep unknown parameter {name!r}")
