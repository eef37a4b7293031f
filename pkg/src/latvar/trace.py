"""Per-task trace records and the line-oriented trace file format.

One task per line, sparse `key=value` pairs. The set of keys varies from
record to record (counter multiplexing), so missing keys are expected,
not an error:

    # latvar-trace v1
    loop2\t1000\t101000\trunning_len=100000,sched_wait_len=0,...

Timestamps and lengths are integer nanoseconds; counts are dimensionless
integers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)

TRACE_HEADER = "# latvar-trace v1"


class EmptyInput(ValueError):
    pass


@dataclass
class TaskRecord:
    task_id: str
    begin_ts: int
    end_ts: int
    values: dict[str, int] = field(default_factory=dict)

    @property
    def latency(self) -> int:
        return self.end_ts - self.begin_ts

    def validate(self) -> None:
        if self.latency < 0:
            raise ValueError(f"{self.task_id}: negative latency")
        for k, v in self.values.items():
            if v < 0:
                raise ValueError(f"{self.task_id}: negative value for {k}")


@dataclass(frozen=True)
class MalformedRecord:
    line_no: int
    reason: str
    line: str = ""


def encode_record(rec: TaskRecord) -> str:
    pairs = ",".join(f"{k}={v}" for k, v in rec.values.items())
    return f"{rec.task_id}\t{rec.begin_ts}\t{rec.end_ts}\t{pairs}"


def encode_trace(records: Iterable[TaskRecord], header: bool = True) -> Iterator[str]:
    """Yield one self-delimiting line per record (no trailing newline)."""
    if header:
        yield TRACE_HEADER
    for rec in records:
        yield encode_record(rec)


def write_trace(records: Iterable[TaskRecord], path: str | Path) -> int:
    """Write a trace file; returns bytes written."""
    n = 0
    with open(path, "w") as f:
        for line in encode_trace(records):
            n += f.write(line + "\n")
    return n


def decode_trace(
    lines: Iterable[str],
    errors: list[MalformedRecord] | None = None,
) -> Iterator[TaskRecord]:
    """Decode a trace stream, skipping (but reporting) malformed lines.

    Malformed lines are appended to `errors` when a list is given,
    otherwise logged as warnings. The stream always continues.
    """

    def report(line_no: int, reason: str, line: str) -> None:
        bad = MalformedRecord(line_no, reason, line)
        if errors is not None:
            errors.append(bad)
        else:
            log.warning("trace line %d: %s", line_no, reason)

    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            report(line_no, f"expected 4 tab-separated fields, got {len(fields)}", line)
            continue
        task_id, begin_s, end_s, pairs_s = fields
        if not task_id:
            report(line_no, "empty task id", line)
            continue
        try:
            begin_ts, end_ts = int(begin_s), int(end_s)
        except ValueError:
            report(line_no, "non-integer timestamp", line)
            continue
        if end_ts < begin_ts:
            report(line_no, "negative latency (end < begin)", line)
            continue
        values: dict[str, int] = {}
        ok = True
        if pairs_s:
            for pair in pairs_s.split(","):
                key, sep, val_s = pair.partition("=")
                if not sep or not key:
                    report(line_no, f"bad key=value pair {pair!r}", line)
                    ok = False
                    break
                try:
                    val = int(val_s)
                except ValueError:
                    report(line_no, f"non-integer value in {pair!r}", line)
                    ok = False
                    break
                if val < 0:
                    report(line_no, f"negative value in {pair!r}", line)
                    ok = False
                    break
                values[key] = val
        if ok:
            yield TaskRecord(task_id, begin_ts, end_ts, values)


def read_trace(path: str | Path) -> tuple[list[TaskRecord], list[MalformedRecord]]:
    errors: list[MalformedRecord] = []
    with open(path) as f:
        records = list(decode_trace(f, errors))
    return records, errors


# -- statistics -----------------------------------------------------------


def _as_fraction(p: int | float | Fraction) -> Fraction:
    # Floats go through their shortest decimal repr so that p=0.99 means
    # 99/100, not the nearest binary float (ceil() is sensitive to that).
    if isinstance(p, float):
        return Fraction(str(p))
    return Fraction(p)


def percentile(values: Sequence[int | float], p: int | float | Fraction) -> int | float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest element."""
    n = len(values)
    if n == 0:
        raise EmptyInput("percentile of empty input")
    frac = _as_fraction(p)
    if not 0 < frac <= 1:
        raise ValueError(f"percentile fraction out of (0, 1]: {p}")
    k = -((-frac.numerator * n) // frac.denominator)  # ceil(p*n), exact
    return sorted(values)[k - 1]


def cov(values: Sequence[int | float]) -> float:
    """Coefficient of variation: population stddev / mean (0 if mean is 0)."""
    n = len(values)
    if n == 0:
        raise EmptyInput("cov of empty input")
    mean = sum(values) / n
    if mean == 0:
        return 0.0
    var = sum((v - mean) ** 2 for v in values) / n
    return math.sqrt(var) / mean


DEFAULT_PERCENTILES = (0.5, 0.9, 0.99)


@dataclass
class SegmentStats:
    segment_index: int
    task_count: int
    latency_percentiles: dict[float, int | float]
    cov: float

    @classmethod
    def from_latencies(
        cls,
        index: int,
        latencies: Sequence[int],
        percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    ) -> "SegmentStats":
        return cls(
            segment_index=index,
            task_count=len(latencies),
            latency_percentiles={p: percentile(latencies, p) for p in percentiles},
            cov=cov(latencies),
        )
