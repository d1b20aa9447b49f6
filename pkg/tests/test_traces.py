from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncsim.errors import IoError, ParseError
from syncsim.traces import (
    DurationTrace,
    MobilitySample,
    assign_clusters,
    emit_duration_csv,
    emit_mobility_csv,
    grid_shape,
    parse_duration_csv,
    parse_mobility_csv,
    resample,
    synth_duration_trace,
    synth_mobility,
)

HEADER = "node_id,timestamp,x,y\n"


def test_header_only_is_empty():
    assert parse_mobility_csv(io.StringIO(HEADER)) == []


def test_rows_in_input_order():
    text = HEADER + "b,0,1,2\na,5,3,4\nb,10,5,6\n"
    got = parse_mobility_csv(io.StringIO(text))
    assert [(s.node_id, s.timestamp) for s in got] == [("b", 0.0), ("a", 5.0), ("b", 10.0)]


def test_non_numeric_field_reports_line():
    with pytest.raises(ParseError) as e:
        parse_mobility_csv(io.StringIO(HEADER + "a,0,1,2\na,1,oops,2\n"))
    assert e.value.line == 3


def test_missing_header_and_bad_width():
    with pytest.raises(ParseError) as e:
        parse_mobility_csv(io.StringIO("a,0,1,2\n"))
    assert e.value.line == 1
    with pytest.raises(ParseError):
        parse_mobility_csv(io.StringIO(HEADER + "a,0,1\n"))
    with pytest.raises(ParseError):
        parse_duration_csv(io.StringIO("task_label,duration_s\nx,-1\n"))


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        parse_mobility_csv(tmp_path / "nope.csv")


def test_mobility_round_trip(tmp_path):
    samples = [MobilitySample("a", 0.0, 0.1, 1e-7), MobilitySample("b", 30.0, 123.456, 2.0)]
    path = tmp_path / "m.csv"
    emit_mobility_csv(samples, path)
    assert parse_mobility_csv(path) == samples
    assert path.read_bytes() == emit_mobility_csv(parse_mobility_csv(path)).encode()


def test_duration_round_trip():
    tr = DurationTrace((("a", 1.5), ("b", 269.0)))
    assert parse_duration_csv(io.StringIO(emit_duration_csv(tr))) == tr


def test_resample_day_grid():
    samples = [MobilitySample("a", 0.0, 0.0, 0.0), MobilitySample("a", 86370.0, 1.0, 1.0)]
    assert len(resample(samples, 30.0).times) == 2880


def test_resample_single_sample_holds():
    grid = resample([MobilitySample("a", 0.0, 3.0, 4.0), MobilitySample("b", 90.0, 0.0, 0.0)], 30.0)
    assert grid.nodes == ("a", "b")
    assert np.all(grid.xy[0, :, 0] == 3.0) and np.all(grid.xy[0, :, 1] == 4.0)


def test_resample_linear_midpoint():
    grid = resample([MobilitySample("a", 0.0, 0.0, 0.0), MobilitySample("a", 60.0, 60.0, 0.0)], 30.0)
    assert grid.xy[0, :, 0].tolist() == [0.0, 30.0, 60.0]
    assert [s.x for s in grid.samples()] == [0.0, 30.0, 60.0]
    assert [grid.index_at(t) for t in (0, 29.9, 30, 1e9)] == [0, 0, 1, 2]


def test_grid_shape():
    assert grid_shape(4) == (2, 2)
    assert grid_shape(10) == (2, 5)
    assert grid_shape(7) == (1, 7)


def test_all_workers_at_one_point_share_a_cluster():
    got = assign_clusters({i: (5.0, 5.0) for i in range(8)}, 4)
    assert len(set(got.values())) == 1


def test_small_cells_are_unclustered():
    pos = {0: (0.0, 0.0), 1: (0.1, 0.1), 2: (9.0, 9.0), 3: (9.1, 9.1), 4: (9.2, 9.2)}
    got = assign_clusters(pos, 4, min_cluster_size=3, bbox=(0, 0, 10, 10))
    assert got[0] is None and got[1] is None
    assert got[2] == got[3] == got[4] is not None


@settings(max_examples=100)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_partition_is_total(cells, seed):
    pos = {i: tuple(p) for i, p in enumerate(np.random.default_rng(seed).random((100, 2)) * 1000)}
    got = assign_clusters(pos, cells, 1, bbox=(0, 0, 1000, 1000))
    assert set(got) == set(pos)
    assert all(c is not None for c in got.values())
    assert len(set(got.values())) <= cells


def test_synth_durations():
    assert synth_duration_trace(50, 100, 100, 0).durations == [100.0] * 50
    d = synth_duration_trace(5000, 23, 269, 1).durations
    assert min(d) >= 23 and max(d) <= 269
    assert synth_duration_trace(20, 23, 269, 5) == synth_duration_trace(20, 23, 269, 5)


def test_synth_mobility():
    still = synth_mobility(3, 600, 0.0, 0)
    by_node = {}
    for s in still:
        by_node.setdefault(s.node_id, set()).add((s.x, s.y))
    assert all(len(v) == 1 for v in by_node.values())
    day = synth_mobility(2, 86400, 10.0, 4)
    assert sum(1 for s in day if s.node_id == "n0000") == 2880
    assert len(resample(day, 30.0).times) == 2880
    assert synth_mobility(2, 300, 5.0, 9) == synth_mobility(2, 300, 5.0, 9)


def test_random_waypoint_speed_bound():
    samples = synth_mobility(1, 3000, 10.0, 3, interval_s=30.0)
    xy = np.array([(s.x, s.y) for s in samples])
    steps = np.hypot(*np.diff(xy, axis=0).T)
    assert steps.max() <= 300.0 + 1e-9
    assert (xy >= 0).all() and (xy <= 1000).all()
