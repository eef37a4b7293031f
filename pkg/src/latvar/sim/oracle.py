"""Ground-truth ledger, computed from an event stream by interval algebra.

This is the independent oracle for the online recorder: instead of
replaying a shadow stack, it matches interrupt/fault Start/End pairs by
instance id, builds a per-core nesting-depth profile by sweeping interval
boundaries, and reads each instance's net length off that profile (the
time inside the instance where nothing deeper is active). Task values
come from plain interval intersection/subtraction over the task's
scheduled-in segments.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..events import (
    EventCatalog,
    FAULT_COUNT,
    FAULT_LEN,
    INTERRUPT_COUNT,
    INTERRUPT_LEN,
    MIGRATION_COUNT,
    RUNNING_LEN,
    SCHED_WAIT_COUNT,
    SCHED_WAIT_LEN,
    default_catalog,
)
from .machine import EvKind, EventBatch


class NestingViolation(ValueError):
    pass


@dataclass(frozen=True)
class InstanceNet:
    instance: int
    core: int
    kind: str  # "interrupt" | "fault"
    start: int
    end: int
    net: int
    level: int


@dataclass
class TaskTruth:
    task_id: str
    thread: int
    begin: int
    end: int
    values: dict[str, int] = field(default_factory=dict)

    @property
    def latency(self) -> int:
        return self.end - self.begin


@dataclass
class GroundTruthLedger:
    tasks: dict[str, TaskTruth]
    instances: dict[int, InstanceNet]

    def value(self, task_id: str, event: str) -> int:
        return self.tasks[task_id].values.get(event, 0)

    # -- text format -------------------------------------------------------

    def dump_lines(self):
        yield "# latvar-ledger v1"
        for inst in sorted(self.instances.values(), key=lambda i: (i.core, i.start)):
            yield (
                f"instance\t{inst.instance}\t{inst.core}\t{inst.kind}"
                f"\t{inst.start}\t{inst.end}\t{inst.net}\t{inst.level}"
            )
        for t in self.tasks.values():
            pairs = ",".join(f"{k}={v}" for k, v in sorted(t.values.items()))
            yield f"task\t{t.task_id}\t{t.thread}\t{t.begin}\t{t.end}\t{pairs}"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.dump_lines()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruthLedger":
        tasks: dict[str, TaskTruth] = {}
        instances: dict[int, InstanceNet] = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if fields[0] == "instance":
                _, inst, core, kind, start, end, net, level = fields
                instances[int(inst)] = InstanceNet(
                    int(inst), int(core), kind, int(start), int(end), int(net), int(level)
                )
            elif fields[0] == "task":
                _, task_id, thread, begin, end, pairs = fields
                values = {}
                if pairs:
                    for pair in pairs.split(","):
                        k, _, v = pair.partition("=")
                        values[k] = int(v)
                tasks[task_id] = TaskTruth(task_id, int(thread), int(begin), int(end), values)
            else:
                raise ValueError(f"bad ledger line: {line!r}")
        return cls(tasks, instances)


def check_nesting(batch: EventBatch) -> int:
    """Stack-replay validity check: every exit matches the most recent
    unmatched enter on its core, and all stacks end empty. Returns the
    maximum nesting depth seen."""
    stacks: dict[int, list[int]] = {}
    max_depth = 0
    for ev in batch:
        if ev.kind in (EvKind.IRQ_ENTER, EvKind.FAULT_ENTER):
            stack = stacks.setdefault(ev.core, [])
            stack.append(ev.a)
            max_depth = max(max_depth, len(stack))
        elif ev.kind in (EvKind.IRQ_EXIT, EvKind.FAULT_EXIT):
            stack = stacks.setdefault(ev.core, [])
            if not stack:
                raise NestingViolation(f"exit with empty stack at ts {ev.ts}")
            top = stack.pop()
            if top != ev.a:
                raise NestingViolation(
                    f"exit of instance {ev.a} at ts {ev.ts} but {top} is innermost"
                )
    for core, stack in stacks.items():
        if stack:
            raise NestingViolation(f"core {core}: {len(stack)} unmatched enters")
    return max_depth


def _columns(batch: EventBatch, kinds: tuple[int, ...]):
    mask = np.isin(batch.kind, kinds)
    return (
        batch.ts[mask].tolist(),
        batch.core[mask].tolist(),
        batch.kind[mask].tolist(),
        batch.a[mask].tolist(),
        batch.b[mask].tolist(),
    )


def _net_lengths(core_instances: list[list[int]]) -> None:
    """Fill net & level (in place, columns [start, end, net, level]) for one
    core's instances from the boundary-sweep depth profile."""
    bounds: list[int] = []
    for start, end, _, _ in core_instances:
        bounds.append(start)
        bounds.append(end)
    bounds.sort()
    # depth on slice [bounds[i], bounds[i+1])
    starts = sorted(row[0] for row in core_instances)
    ends = sorted(row[1] for row in core_instances)
    depth = []
    for i in range(len(bounds) - 1):
        t = bounds[i]
        d = bisect_right(starts, t) - bisect_right(ends, t)
        depth.append(d)
    for row in core_instances:
        start, end = row[0], row[1]
        i = bisect_left(bounds, start)
        j = bisect_left(bounds, end)
        level = depth[i]
        net = 0
        for k in range(i, j):
            if depth[k] == level:
                net += bounds[k + 1] - bounds[k]
        row[2] = net
        row[3] = level


def ledger_oracle(
    batch: EventBatch,
    catalog: EventCatalog | None = None,
    tasks: list[tuple[str, int, int, int]] | None = None,
) -> GroundTruthLedger:
    """Compute the ground truth for `batch`.

    `tasks` optionally overrides the (task_id, thread, begin, end) spans;
    by default they are read from the TASK_BEGIN/TASK_END events.
    """
    catalog = catalog or default_catalog()
    check_nesting(batch)
    end_of_stream = (int(batch.ts[-1]) if len(batch) else 0) + 1

    # -- interrupt/fault instances, matched by id --------------------------
    enters: dict[int, tuple[int, int, int]] = {}  # id -> (core, kind, start)
    exits: dict[int, int] = {}
    ts_l, core_l, kind_l, a_l, _ = _columns(
        batch, (EvKind.IRQ_ENTER, EvKind.IRQ_EXIT, EvKind.FAULT_ENTER, EvKind.FAULT_EXIT)
    )
    for ts, core, kind, a in zip(ts_l, core_l, kind_l, a_l):
        if kind in (EvKind.IRQ_ENTER, EvKind.FAULT_ENTER):
            if a in enters:
                raise NestingViolation(f"duplicate enter for instance {a}")
            enters[a] = (core, kind, ts)
        else:
            exits[a] = ts
    per_core: dict[int, list[list[int]]] = {}
    inst_rows: dict[int, list[int]] = {}
    inst_meta: dict[int, tuple[int, int]] = {}
    for a, (core, kind, start) in enters.items():
        end = exits.get(a)
        if end is None:
            raise NestingViolation(f"instance {a} never exits")
        row = [start, end, 0, 0]
        per_core.setdefault(core, []).append(row)
        inst_rows[a] = row
        inst_meta[a] = (core, kind)
    for rows in per_core.values():
        _net_lengths(rows)
    instances = {
        a: InstanceNet(
            a,
            inst_meta[a][0],
            "fault" if inst_meta[a][1] == EvKind.FAULT_ENTER else "interrupt",
            row[0],
            row[1],
            row[2],
            row[3],
        )
        for a, row in inst_rows.items()
    }

    # per-core instance index sorted by start, for window queries
    core_inst: dict[int, tuple[list[int], list[int]]] = {}  # core -> (starts, ids)
    by_core: dict[int, list[tuple[int, int]]] = {}
    for a, inst in instances.items():
        by_core.setdefault(inst.core, []).append((inst.start, a))
    for core, pairs in by_core.items():
        pairs.sort()
        core_inst[core] = ([p[0] for p in pairs], [p[1] for p in pairs])

    # -- per-thread scheduled-in runs --------------------------------------
    runs: dict[int, list[tuple[int, int, int]]] = {}  # thread -> [(in, out, core)]
    open_run: dict[int, tuple[int, int]] = {}
    ts_l, core_l, kind_l, a_l, _ = _columns(batch, (EvKind.SCHED_IN, EvKind.SCHED_OUT))
    for ts, core, kind, a in zip(ts_l, core_l, kind_l, a_l):
        if kind == EvKind.SCHED_IN:
            if a in open_run:
                raise ValueError(f"thread {a} scheduled in twice at ts {ts}")
            open_run[a] = (ts, core)
        else:
            if a not in open_run:
                raise ValueError(f"thread {a} scheduled out while not running at ts {ts}")
            in_ts, in_core = open_run.pop(a)
            if in_core != core:
                raise ValueError(f"thread {a} scheduled out on a different core")
            runs.setdefault(a, []).append((in_ts, ts, core))
    for a, (in_ts, core) in open_run.items():
        runs.setdefault(a, []).append((in_ts, end_of_stream, core))
    for r in runs.values():
        r.sort()

    # -- task spans ---------------------------------------------------------
    if tasks is None:
        spans: dict[int, list] = {}
        ts_l, core_l, kind_l, a_l, b_l = _columns(batch, (EvKind.TASK_BEGIN, EvKind.TASK_END))
        for ts, _core, kind, a, b in zip(ts_l, core_l, kind_l, a_l, b_l):
            if kind == EvKind.TASK_BEGIN:
                spans[a] = [batch.task_ids[a], b, ts, None]
            elif a in spans:
                spans[a][3] = ts
        task_list = [tuple(v) for v in spans.values() if v[3] is not None]
    else:
        task_list = list(tasks)

    # -- per-core counter event arrays --------------------------------------
    cmask = batch.kind == int(EvKind.COUNTER)
    counters_by_core: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    if cmask.any():
        c_core = batch.core[cmask]
        c_ts = batch.ts[cmask]
        c_idx = batch.a[cmask]
        c_delta = batch.b[cmask]
        for core in np.unique(c_core):
            sel = c_core == core
            counters_by_core[int(core)] = (c_ts[sel], c_idx[sel], c_delta[sel])

    # -- per-task values ------------------------------------------------------
    out_tasks: dict[str, TaskTruth] = {}
    for task_id, thread, begin, end in task_list:
        if task_id in out_tasks:
            raise ValueError(f"duplicate task id {task_id!r}")
        values: dict[str, int] = {
            SCHED_WAIT_LEN: 0,
            SCHED_WAIT_COUNT: 0,
            INTERRUPT_LEN: 0,
            INTERRUPT_COUNT: 0,
            FAULT_LEN: 0,
            FAULT_COUNT: 0,
            MIGRATION_COUNT: 0,
        }
        thread_runs = runs.get(thread, [])
        segments: list[tuple[int, int, int]] = []  # (s, e, core) within the task
        prev_out = None
        prev_core = None
        for in_ts, out_ts, core in thread_runs:
            if out_ts <= begin or in_ts >= end:
                continue
            s, e = max(in_ts, begin), min(out_ts, end)
            if prev_out is not None:
                values[SCHED_WAIT_LEN] += in_ts - prev_out
                values[SCHED_WAIT_COUNT] += 1
                if core != prev_core:
                    values[MIGRATION_COUNT] += 1
            segments.append((s, e, core))
            prev_out = out_ts
            prev_core = core
        if not segments:
            raise ValueError(f"task {task_id!r}: no scheduled-in time")

        running_windows: list[tuple[int, int, int]] = []
        for s, e, core in segments:
            starts, ids = core_inst.get(core, ([], []))
            lo = bisect_left(starts, s)
            hi = bisect_left(starts, e)
            busy: list[tuple[int, int]] = []
            for j in range(lo, hi):
                inst = instances[ids[j]]
                key = INTERRUPT_LEN if inst.kind == "interrupt" else FAULT_LEN
                cnt = INTERRUPT_COUNT if inst.kind == "interrupt" else FAULT_COUNT
                values[key] += inst.net
                values[cnt] += 1
                if inst.level == 1:
                    busy.append((inst.start, inst.end))
            cursor = s
            for bs, be in busy:  # already sorted by start, disjoint
                if bs > cursor:
                    running_windows.append((cursor, bs, core))
                cursor = be
            if cursor < e:
                running_windows.append((cursor, e, core))
        values[RUNNING_LEN] = sum(e - s for s, e, _ in running_windows)

        for s, e, core in running_windows:
            arrs = counters_by_core.get(core)
            if arrs is None:
                continue
            c_ts, c_idx, c_delta = arrs
            lo = int(np.searchsorted(c_ts, s, side="left"))
            hi = int(np.searchsorted(c_ts, e, side="left"))
            for j in range(lo, hi):
                name = catalog.name(int(c_idx[j]))
                values[name] = values.get(name, 0) + int(c_delta[j])

        out_tasks[task_id] = TaskTruth(task_id, thread, begin, end, values)

    return GroundTruthLedger(out_tasks, instances)
