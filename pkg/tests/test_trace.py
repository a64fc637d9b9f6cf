import numpy as np
import pytest

from incidental.core import ModelConfig
from incidental.l1_model import train_l1
from incidental.trace import COLUMNS, TrainingTrace, log_schedule, read_table, record_schedule, write_table


@pytest.fixture
def trace():
    cfg = ModelConfig(n=3, m=10, lam=0.05, eta=0.1, steps=40, record_every=7, seed=5)
    return train_l1(cfg)[1]


def test_records_sorted_by_step_then_row(trace):
    keys = list(zip(trace["step"], trace["row"]))
    assert keys == sorted(keys)
    assert len(trace) == 3 * len(trace.steps())


def test_csv_round_trip_is_exact(trace, tmp_path):
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = TrainingTrace.from_csv(path)
    assert back.equals(trace)
    for c in COLUMNS:
        assert back[c].dtype == trace[c].dtype
    assert back.meta["lam"] == "0.05"
    assert TrainingTrace.from_csv(trace.to_csv()).equals(trace)


def test_awkward_floats_survive(tmp_path):
    t = TrainingTrace()
    W = np.array([[1 / 3, -np.pi * 1e-300, 0.1 + 0.2]])
    t.record(0, 1e-17, W, np.nan, 0.0)
    back = TrainingTrace.from_csv(t.to_csv())
    assert back.equals(t)


def test_bad_header():
    with pytest.raises(ValueError):
        TrainingTrace.from_csv("a,b,c\n1,2,3\n")


def test_row_mean(trace):
    t, mean = trace.row_mean("l1")
    assert len(t) == len(trace.steps())
    sel = trace["step"] == trace.steps()[2]
    assert mean[2] == pytest.approx(trace["l1"][sel].mean())


def test_table_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    write_table(path, ["a", "b", "c"], [(1, 0.1, "x"), (2, 1 / 3, "y")], {"k": "v"})
    meta, header, rows = read_table(path)
    assert meta == {"k": "v"} and header == ["a", "b", "c"]
    assert float(rows[1][1]) == 1 / 3


class TestSchedules:
    def test_every(self):
        np.testing.assert_array_equal(record_schedule(10, 4), [0, 4, 8, 10])

    def test_explicit(self):
        np.testing.assert_array_equal(record_schedule(10, 1, [12, 3, 3, 0]), [0, 3])

    def test_log_spacing_covers_ends(self):
        s = log_schedule(10**6, 10)
        assert s[0] == 0 and s[-1] == 10**6
        assert np.all(np.diff(s) > 0)
        assert 50 <= len(s) <= 70
