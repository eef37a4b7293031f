import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latvar.trace import (
    EmptyInput,
    MalformedRecord,
    TaskRecord,
    cov,
    decode_trace,
    encode_record,
    encode_trace,
    percentile,
    read_trace,
    write_trace,
)

names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz._0123456789", min_size=1, max_size=20)


@st.composite
def records(draw):
    task_id = draw(names)
    begin = draw(st.integers(min_value=0, max_value=10**12))
    latency = draw(st.integers(min_value=0, max_value=10**9))
    n = draw(st.integers(min_value=0, max_value=6))
    values = {}
    for _ in range(n):
        values[draw(names)] = draw(st.integers(min_value=0, max_value=10**12))
    return TaskRecord(task_id, begin, begin + latency, values)


@given(st.lists(records(), max_size=30))
@settings(max_examples=60)
def test_round_trip(recs):
    lines = list(encode_trace(recs))
    errors = []
    decoded = list(decode_trace(lines, errors))
    assert errors == []
    assert decoded == recs
    # a second encode is byte-identical
    assert list(encode_trace(decoded)) == lines


def test_round_trip_1000_random_records(tmp_path):
    rng = random.Random(1234)
    recs = []
    for i in range(1000):
        begin = rng.randrange(10**9)
        values = {f"ev{j}": rng.randrange(10**6) for j in range(rng.randrange(5))}
        recs.append(TaskRecord(f"task.{i}", begin, begin + rng.randrange(10**6), values))
    path = tmp_path / "trace.tsv"
    write_trace(recs, path)
    first = path.read_bytes()
    decoded, errors = read_trace(path)
    assert not errors and decoded == recs
    write_trace(decoded, path)
    assert path.read_bytes() == first


def test_empty_values_encodes_latency_only():
    rec = TaskRecord("solo", 10, 20, {})
    line = encode_record(rec)
    assert line == "solo\t10\t20\t"
    assert list(decode_trace([line])) == [rec]


def test_unknown_event_names_preserved():
    rec = TaskRecord("t", 0, 5, {"weird.unknown_counter": 3})
    (out,) = decode_trace([encode_record(rec)])
    assert out.values == {"weird.unknown_counter": 3}


@pytest.mark.parametrize(
    "line,reason_part",
    [
        ("t\t10\t5\t", "negative latency"),
        ("t\t10\tx\t", "non-integer"),
        ("t\t10\t20", "4 tab-separated"),
        ("t\t10\t20\tk=1,bad", "bad key=value"),
        ("t\t10\t20\tk=-3", "negative value"),
        ("\t10\t20\t", "empty task id"),
    ],
)
def test_malformed_lines_reported_not_dropped_silently(line, reason_part):
    errors: list[MalformedRecord] = []
    out = list(decode_trace(["ok\t0\t1\tk=2", line, "ok2\t0\t1\t"], errors))
    assert [r.task_id for r in out] == ["ok", "ok2"]  # stream continues
    assert len(errors) == 1
    assert errors[0].line_no == 2
    assert reason_part in errors[0].reason


def test_truncated_final_line_has_line_number():
    errors: list[MalformedRecord] = []
    list(decode_trace(["a\t0\t1\t", "b\t0\t5"], errors))
    assert errors and errors[0].line_no == 2


def test_comments_and_blank_lines_skipped():
    out = list(decode_trace(["# header", "", "  ", "t\t1\t2\t"]))
    assert len(out) == 1


# -- percentile ------------------------------------------------------------


def test_percentile_nearest_rank_examples():
    assert percentile([100] * 9 + [500], 0.95) == 500  # ceil(0.95*10) = 10th
    assert percentile([7], 0.01) == 7
    assert percentile([7], 1.0) == 7
    assert percentile(list(range(1, 101)), 0.5) == 50


def test_percentile_matches_sort_index_oracle():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randrange(1, 50)
        vals = [rng.randrange(1000) for _ in range(n)]
        p = rng.choice([0.01, 0.1, 0.25, 0.3, 0.5, 0.9, 0.95, 0.99, 1.0])
        k = math.ceil(round(p * n, 9))
        assert percentile(vals, p) == sorted(vals)[k - 1]


def test_percentile_decimal_boundaries_exact():
    # 0.99 * 1000 must mean rank 990, not 991 (float 0.99*1000 = 990.0000...01)
    vals = list(range(1, 1001))
    assert percentile(vals, 0.99) == 990
    assert percentile(vals, 0.3) == 300


def test_percentile_empty_and_range_errors():
    with pytest.raises(EmptyInput):
        percentile([], 0.5)
    with pytest.raises(ValueError):
        percentile([1], 0.0)
    with pytest.raises(ValueError):
        percentile([1], 1.5)


@given(
    st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=100),
    st.floats(min_value=0.01, max_value=1.0),
    st.floats(min_value=0.01, max_value=1.0),
)
@settings(max_examples=100)
def test_percentile_monotone_and_permutation_invariant(vals, p1, p2):
    lo, hi = sorted([round(p1, 4), round(p2, 4)])
    assert percentile(vals, lo) <= percentile(vals, hi)
    shuffled = list(vals)
    random.Random(0).shuffle(shuffled)
    assert percentile(shuffled, lo) == percentile(vals, lo)


# -- CoV ------------------------------------------------------------------


def test_cov_scale_free():
    vals = [3, 5, 8, 13, 21]
    base = cov(vals)
    for c in (2, 10, 1000):
        assert cov([c * v for v in vals]) == pytest.approx(base, rel=1e-12)


def test_cov_constant_is_zero():
    assert cov([5, 5, 5]) == 0.0
    assert cov([0, 0]) == 0.0  # mean 0 convention


def test_cov_empty_raises():
    with pytest.raises(EmptyInput):
        cov([])
