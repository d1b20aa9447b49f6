"""Mobility and task-duration traces: CSV parsing and emission, resampling onto
a regular grid, grid-partition clustering, and synthetic generators."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from syncsim.errors import IoError, ParseError

MOBILITY_HEADER = ["node_id", "timestamp", "x", "y"]
DURATION_HEADER = ["task_label", "duration_s"]


@dataclass(frozen=True)
class MobilitySample:
    node_id: str
    timestamp: float
    x: float
    y: float


@dataclass(frozen=True)
class DurationTrace:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(a), float(b)) for a, b in self.entries))
        for label, d in self.entries:
            if not d > 0:
                raise ValueError(f"duration of {label!r} must be > 0")

    @property
    def durations(self) -> list[float]:
        return [d for _, d in self.entries]


# --- CSV ---------------------------------------------------------------------


def _open_text(src) -> tuple[TextIO, bool]:
    if isinstance(src, (str, Path)):
        try:
            return open(src, encoding="utf-8", newline=""), True
        except OSError as e:
            raise IoError(str(e)) from e
    return src, False


def _rows(src, header: list[str]):
    f, owned = _open_text(src)
    try:
        reader = csv.reader(f)
        first = next(reader, None)
        if first != header:
            raise ParseError(1, f"expected header {','.join(header)}")
        for row in reader:
            yield reader.line_num, row
    finally:
        if owned:
            f.close()


def _number(value: str, line: int, name: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(line, f"{name} is not a number: {value!r}") from None
    if not math.isfinite(v):
        raise ParseError(line, f"{name} is not finite")
    return v


def parse_mobility_csv(src) -> list[MobilitySample]:
    out = []
    for line, row in _rows(src, MOBILITY_HEADER):
        if len(row) != 4:
            raise ParseError(line, f"expected 4 fields, got {len(row)}")
        if not row[0]:
            raise ParseError(line, "empty node_id")
        out.append(
            MobilitySample(row[0], _number(row[1], line, "timestamp"), _number(row[2], line, "x"), _number(row[3], line, "y"))
        )
    return out


def parse_duration_csv(src) -> DurationTrace:
    entries = []
    for line, row in _rows(src, DURATION_HEADER):
        if len(row) != 2:
            raise ParseError(line, f"expected 2 fields, got {len(row)}")
        d = _number(row[1], line, "duration_s")
        if not d > 0:
            raise ParseError(line, "duration_s must be > 0")
        entries.append((row[0], d))
    return DurationTrace(tuple(entries))


def _emit(rows: Iterable[list[str]], header: list[str], dst) -> str | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if dst is None:
        return text
    if isinstance(dst, (str, Path)):
        try:
            with open(dst, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            raise IoError(str(e)) from e
    else:
        dst.write(text)
    return None


def emit_mobility_csv(samples: Iterable[MobilitySample], dst=None) -> str | None:
    """Canonical form: LF endings, floats via ``repr``. Returns the text if ``dst`` is None."""
    rows = ([s.node_id, repr(float(s.timestamp)), repr(float(s.x)), repr(float(s.y))] for s in samples)
    return _emit(rows, MOBILITY_HEADER, dst)


def emit_duration_csv(trace: DurationTrace, dst=None) -> str | None:
    rows = ([label, repr(float(d))] for label, d in trace.entries)
    return _emit(rows, DURATION_HEADER, dst)


# --- resampling --------------------------------------------------------------


@dataclass(frozen=True)
class PositionGrid:
    """Positions of every node at every grid time; ``xy`` has shape (nodes, times, 2)."""

    times: np.ndarray
    nodes: tuple
    xy: np.ndarray

    def samples(self) -> list[MobilitySample]:
        out = []
        for i, node in enumerate(self.nodes):
            for k, t in enumerate(self.times):
                out.append(MobilitySample(node, float(t), float(self.xy[i, k, 0]), float(self.xy[i, k, 1])))
        return out

    def index_at(self, t: float) -> int:
        """Grid index in effect at offset ``t`` from the grid epoch."""
        if len(self.times) < 2:
            return 0
        step = float(self.times[1] - self.times[0])
        return int(min(max(t // step, 0), len(self.times) - 1))


def resample(samples: Iterable[MobilitySample], interval: float) -> PositionGrid:
    """Linearly interpolate each node onto ``epoch + k * interval``.

    The grid spans the whole trace (first to last timestamp over all nodes);
    a node is held at its first or last position outside its own span.
    """
    if not interval > 0:
        raise ValueError("interval must be > 0")
    by_node: dict[str, list[MobilitySample]] = {}
    for s in samples:
        by_node.setdefault(s.node_id, []).append(s)
    if not by_node:
        return PositionGrid(np.zeros(0), (), np.zeros((0, 0, 2)))
    t0 = min(s.timestamp for ss in by_node.values() for s in ss)
    t1 = max(s.timestamp for ss in by_node.values() for s in ss)
    n = int(math.floor((t1 - t0) / interval)) + 1
    times = t0 + interval * np.arange(n)
    nodes = tuple(sorted(by_node))
    xy = np.empty((len(nodes), n, 2))
    for i, node in enumerate(nodes):
        ss = sorted(by_node[node], key=lambda s: s.timestamp)
        ts = np.array([s.timestamp for s in ss])
        xy[i, :, 0] = np.interp(times, ts, [s.x for s in ss])
        xy[i, :, 1] = np.interp(times, ts, [s.y for s in ss])
    return PositionGrid(times, nodes, xy)


# --- clustering --------------------------------------------------------------


def grid_shape(cluster_count: int) -> tuple[int, int]:
    """Rows and columns of the partition: the most nearly square factorization."""
    rows = max(d for d in range(1, int(math.isqrt(cluster_count)) + 1) if cluster_count % d == 0)
    return rows, cluster_count // rows


def assign_clusters(
    positions: Mapping,
    cluster_count: int,
    min_cluster_size: int = 1,
    bbox: tuple[float, float, float, float] | None = None,
) -> dict:
    """Map each worker to the cell it sits in, or None if the cell is underfull.

    The bounding box (``xmin, ymin, xmax, ymax``) defaults to that of the
    positions and is cut into ``cluster_count`` equal cells. Cell ids are
    ``"c<k>"`` with ``k`` the row-major cell index.
    """
    if cluster_count < 1:
        raise ValueError("cluster_count must be >= 1")
    if not positions:
        return {}
    rows, cols = grid_shape(cluster_count)
    if bbox is None:
        xs = [p[0] for p in positions.values()]
        ys = [p[1] for p in positions.values()]
        bbox = (min(xs), min(ys), max(xs), max(ys))
    xmin, ymin, xmax, ymax = bbox
    w, h = xmax - xmin, ymax - ymin

    def cell(x: float, y: float) -> int:
        c = min(int((x - xmin) / w * cols), cols - 1) if w > 0 else 0
        r = min(int((y - ymin) / h * rows), rows - 1) if h > 0 else 0
        return max(r, 0) * cols + max(c, 0)

    cells = {wid: cell(*positions[wid]) for wid in positions}
    return group_cells(cells, min_cluster_size)


def group_cells(cells: Mapping, min_cluster_size: int) -> dict:
    """Turn a worker-to-cell map into cluster ids, dropping cells below ``min_cluster_size``."""
    counts: dict[int, int] = {}
    for c in cells.values():
        counts[c] = counts.get(c, 0) + 1
    return {wid: (f"c{c}" if counts[c] >= min_cluster_size else None) for wid, c in cells.items()}


# --- synthetic generators ----------------------------------------------------


def log_uniform(u: float | np.ndarray, min_s: float, max_s: float):
    if min_s == max_s:
        return np.full_like(u, min_s, dtype=float) if isinstance(u, np.ndarray) else float(min_s)
    lo, hi = math.log(min_s), math.log(max_s)
    v = np.exp(lo + (hi - lo) * np.asarray(u))
    v = np.clip(v, min_s, max_s)
    return v if isinstance(u, np.ndarray) else float(v)


def synth_duration_trace(count: int, min_s: float, max_s: float, seed: int) -> DurationTrace:
    if not 0 < min_s <= max_s:
        raise ValueError("need 0 < min_s <= max_s")
    u = np.random.default_rng(seed).random(count)
    d = log_uniform(u, min_s, max_s)
    return DurationTrace(tuple((f"task{i:05d}", float(x)) for i, x in enumerate(d)))


class RandomWaypoint:
    """One node walking between uniformly drawn waypoints at constant speed."""

    def __init__(self, rng: np.random.Generator, speed_mps: float, area_m: float):
        self.rng = rng
        self.speed = speed_mps
        self.area = area_m
        self.pos = self._point()
        self.target = self._point()

    def _point(self) -> np.ndarray:
        return self.rng.random(2) * self.area

    def step(self, dt: float) -> tuple[float, float]:
        left = self.speed * dt
        while left > 0:
            gap = self.target - self.pos
            dist = float(np.hypot(*gap))
            if dist > left:
                self.pos = self.pos + gap * (left / dist)
                break
            self.pos = self.target
            left -= dist
            self.target = self._point()
        return float(self.pos[0]), float(self.pos[1])


def synth_mobility(
    node_count: int,
    duration_s: float,
    speed_mps: float,
    seed: int,
    interval_s: float = 30.0,
    area_m: float = 1000.0,
) -> list[MobilitySample]:
    """Random-waypoint walks sampled every ``interval_s`` over ``[0, duration_s)``."""
    if node_count < 0 or duration_s <= 0 or speed_mps < 0 or interval_s <= 0:
        raise ValueError("parameters must be positive")
    steps = int(math.ceil(duration_s / interval_s))
    out = []
    for i in range(node_count):
        walker = RandomWaypoint(np.random.default_rng([seed, i]), speed_mps, area_m)
        x, y = float(walker.pos[0]), float(walker.pos[1])
        for k in range(steps):
            if k:
                x, y = walker.step(interval_s)
            out.append(MobilitySample(f"n{i:04d}", k * interval_s, x, y))
    return out
