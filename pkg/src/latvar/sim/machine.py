"""Deterministic discrete-event simulation of a small multi-core machine.

The machine runs threads under a round-robin scheduler, preempts them
with (possibly nested) interrupts and faults, and advances synthetic CPU
counters on a fixed tick. Everything observable is emitted as a single
time-ordered event stream; the ground-truth ledger is derived from that
stream alone (see `latvar.sim.oracle`), so any consumer of the stream can
be checked against it.

Timestamp discipline (relied on by the recorder and the oracle):
  - per core, non-counter events have strictly increasing timestamps;
  - counter events land exactly on multiples of `counter_tick`, and
    non-counter events never do, so "was this delta inside the interrupt"
    is never a tie-break question;
  - a thread's events are globally ordered (a thread never appears on a
    second core before its sched-out on the first is in the past).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from ..events import EventCatalog, default_catalog


class ConfigError(ValueError):
    pass


class EvKind(IntEnum):
    SCHED_IN = 1
    SCHED_OUT = 2
    IRQ_ENTER = 3
    IRQ_EXIT = 4
    FAULT_ENTER = 5
    FAULT_EXIT = 6
    COUNTER = 7
    TASK_BEGIN = 8
    TASK_END = 9


class MachineEvent(NamedTuple):
    """One machine event. `a`/`b` depend on kind:

    SCHED_IN/SCHED_OUT: a=thread
    IRQ/FAULT ENTER/EXIT: a=instance id
    COUNTER: a=catalog counter index, b=delta
    TASK_BEGIN/TASK_END: a=task seq (index into batch.task_ids), b=thread
    """

    ts: int
    core: int
    kind: EvKind
    a: int
    b: int


@dataclass
class EventBatch:
    """Columnar, time-sorted event stream."""

    ts: np.ndarray
    core: np.ndarray
    kind: np.ndarray
    a: np.ndarray
    b: np.ndarray
    task_ids: list[str]

    def __len__(self) -> int:
        return len(self.ts)

    def __iter__(self) -> Iterator[MachineEvent]:
        for i in range(len(self.ts)):
            yield MachineEvent(
                int(self.ts[i]), int(self.core[i]), EvKind(int(self.kind[i])),
                int(self.a[i]), int(self.b[i]),
            )

    @classmethod
    def from_events(cls, events: Sequence[tuple], task_ids: Sequence[str] = ()) -> "EventBatch":
        """Build from (ts, core, kind, a, b) tuples; sorts by (ts, input order)."""
        n = len(events)
        ts = np.fromiter((e[0] for e in events), dtype=np.int64, count=n)
        core = np.fromiter((e[1] for e in events), dtype=np.int32, count=n)
        kind = np.fromiter((int(e[2]) for e in events), dtype=np.int8, count=n)
        a = np.fromiter((e[3] for e in events), dtype=np.int64, count=n)
        b = np.fromiter((e[4] for e in events), dtype=np.int64, count=n)
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], core[order], kind[order], a[order], b[order], list(task_ids))

    def dump_lines(self, catalog: EventCatalog | None = None) -> Iterator[str]:
        """One event per line, for debugging."""
        for ev in self:
            kind = ev.kind.name
            if ev.kind is EvKind.COUNTER:
                name = catalog.name(ev.a) if catalog else str(ev.a)
                yield f"{ev.ts}\tcore{ev.core}\t{kind}\t{name}\t+{ev.b}"
            elif ev.kind in (EvKind.TASK_BEGIN, EvKind.TASK_END):
                tid = self.task_ids[ev.a] if ev.a < len(self.task_ids) else f"seq{ev.a}"
                yield f"{ev.ts}\tcore{ev.core}\t{kind}\t{tid}\tthread{ev.b}"
            else:
                yield f"{ev.ts}\tcore{ev.core}\t{kind}\t{ev.a}\t{ev.b}"


def validate_batch(batch: EventBatch, counter_tick: int | None = None) -> None:
    """Check the timestamp discipline documented in the module docstring."""
    last_nc: dict[int, int] = {}
    counter_ts: dict[int, set[int]] = {}
    for ev in batch:
        if ev.kind is EvKind.COUNTER:
            counter_ts.setdefault(ev.core, set()).add(ev.ts)
            continue
        prev = last_nc.get(ev.core)
        if prev is not None and ev.ts <= prev:
            raise ConfigError(f"core {ev.core}: non-counter ts {ev.ts} not after {prev}")
        if counter_tick is not None and ev.ts % counter_tick == 0:
            raise ConfigError(f"core {ev.core}: non-counter event on counter grid at {ev.ts}")
        last_nc[ev.core] = ev.ts
    for ev in batch:
        if ev.kind is not EvKind.COUNTER and ev.ts in counter_ts.get(ev.core, ()):
            raise ConfigError(f"core {ev.core}: counter and state event share ts {ev.ts}")


# -- configuration ---------------------------------------------------------


@dataclass
class Dist:
    """Integer-valued draw: const, uniform[lo, hi], or exponential(mean)."""

    dist: str = "const"
    value: int = 0
    lo: int = 0
    hi: int = 0
    mean: float = 0.0

    def validate(self, what: str) -> None:
        if self.dist not in ("const", "uniform", "exponential"):
            raise ConfigError(f"{what}: unknown dist {self.dist!r}")
        if self.dist == "uniform" and not 0 <= self.lo <= self.hi:
            raise ConfigError(f"{what}: bad uniform bounds [{self.lo}, {self.hi}]")
        if self.dist == "exponential" and self.mean < 0:
            raise ConfigError(f"{what}: negative mean")
        if self.dist == "const" and self.value < 0:
            raise ConfigError(f"{what}: negative const")

    def draw(self, rng: np.random.Generator) -> int:
        if self.dist == "const":
            return self.value
        if self.dist == "uniform":
            return int(rng.integers(self.lo, self.hi + 1))
        return int(round(rng.exponential(self.mean)))

    @classmethod
    def from_obj(cls, obj) -> "Dist":
        if isinstance(obj, Dist):
            return obj
        if isinstance(obj, (int, float)):
            return cls(dist="const", value=int(obj))
        return cls(**obj)


@dataclass
class ArrivalModel:
    """Batched Poisson arrivals: batches at `rate` per second / burstiness,
    geometric batch size with mean `burstiness`, per-instance length.

    `burst_cycle`/`burst_levels` make burstiness time-varying (one level
    per cycle, round robin) while the mean instance rate stays `rate`."""

    rate: float = 0.0  # instances per second (averaged over batches)
    burstiness: float = 1.0
    length: Dist = field(default_factory=lambda: Dist("const", value=1000))
    burst_cycle: int = 0
    burst_levels: list[float] = field(default_factory=list)

    def burstiness_at(self, t: int) -> float:
        if self.burst_cycle > 0 and self.burst_levels:
            return self.burst_levels[(t // self.burst_cycle) % len(self.burst_levels)]
        return self.burstiness

    def validate(self, what: str) -> None:
        if self.rate < 0:
            raise ConfigError(f"{what}: negative rate")
        if self.burstiness < 1.0:
            raise ConfigError(f"{what}: burstiness must be >= 1")
        if self.burst_cycle < 0 or any(b < 1.0 for b in self.burst_levels):
            raise ConfigError(f"{what}: bad burst schedule")
        self.length.validate(f"{what}.length")

    @classmethod
    def from_obj(cls, obj) -> "ArrivalModel":
        if isinstance(obj, ArrivalModel):
            return obj
        obj = dict(obj)
        if "length" in obj:
            obj["length"] = Dist.from_obj(obj["length"])
        return cls(**obj)


@dataclass
class CounterRate:
    """Mean delta per counter tick, split by executing context. A counter
    may instead mirror another one (delta = factor * base delta), which
    models exactly proportional hardware counters."""

    task: float = 0.0
    irq: float = 0.0
    proportional_to: str | None = None
    factor: int = 1

    def validate(self, what: str) -> None:
        if self.task < 0 or self.irq < 0:
            raise ConfigError(f"{what}: negative rate")
        if self.proportional_to is not None and self.factor < 0:
            raise ConfigError(f"{what}: negative factor")

    @classmethod
    def from_obj(cls, obj) -> "CounterRate":
        if isinstance(obj, CounterRate):
            return obj
        if isinstance(obj, (int, float)):
            return cls(task=float(obj))
        return cls(**obj)


@dataclass
class MachineConfig:
    cores: int = 2
    seed: int = 0
    quantum: int = 50_000
    quantum_jitter: float = 0.0
    counter_tick: int = 1000
    counter_rates: dict[str, CounterRate] = field(default_factory=dict)
    interrupts: ArrivalModel = field(default_factory=ArrivalModel)
    faults: ArrivalModel = field(default_factory=ArrivalModel)

    def validate(self, catalog: EventCatalog) -> None:
        if self.cores < 1:
            raise ConfigError("cores must be >= 1")
        if self.quantum < 1:
            raise ConfigError("quantum must be >= 1")
        if not 0 <= self.quantum_jitter < 1:
            raise ConfigError("quantum_jitter must be in [0, 1)")
        if self.counter_tick < 2:
            raise ConfigError("counter_tick must be >= 2")
        self.interrupts.validate("interrupts")
        self.faults.validate("faults")
        for name, rate in self.counter_rates.items():
            rate.validate(f"counter_rates[{name}]")
            if name not in catalog:
                raise ConfigError(f"counter_rates: unknown event {name}")
            if rate.proportional_to is not None:
                base = self.counter_rates.get(rate.proportional_to)
                if base is None or name == rate.proportional_to:
                    raise ConfigError(f"counter_rates[{name}]: bad proportional_to")
                if base.proportional_to is not None:
                    raise ConfigError(f"counter_rates[{name}]: proportional chains not supported")

    @classmethod
    def from_obj(cls, obj: dict) -> "MachineConfig":
        obj = dict(obj)
        if "counter_rates" in obj:
            obj["counter_rates"] = {
                k: CounterRate.from_obj(v) for k, v in obj["counter_rates"].items()
            }
        for key in ("interrupts", "faults"):
            if key in obj:
                obj[key] = ArrivalModel.from_obj(obj[key])
        return cls(**obj)


@dataclass
class TaskSpec:
    """One unit of annotated (or plain) work pulled from a thread program."""

    task_id: str
    work: int
    gap: int = 0
    annotated: bool = True
    counter_extra: dict[str, int] = field(default_factory=dict)
    kernel_plants: list[tuple[str, int]] = field(default_factory=list)  # (irq|fault, length)


ThreadProgram = Callable[[np.random.Generator], Iterator[TaskSpec]]


# -- engine -----------------------------------------------------------------


class _Frame:
    __slots__ = ("kind", "instance", "remaining", "resume_ts")

    def __init__(self, kind: int, instance: int, remaining: int, resume_ts: int):
        self.kind = kind
        self.instance = instance
        self.remaining = remaining
        self.resume_ts = resume_ts


class _Core:
    __slots__ = (
        "idx", "thread", "stack", "run_start", "work_token",
        "switch_token", "pending_switch", "end_token",
    )

    def __init__(self, idx: int):
        self.idx = idx
        self.thread = -1
        self.stack: list[_Frame] = []
        self.run_start = -1
        self.work_token = 0
        self.switch_token = 0
        self.end_token = 0
        self.pending_switch = False


class _Thread:
    __slots__ = ("tid", "program", "cur", "remaining", "seq", "began", "done", "plants_pending")

    def __init__(self, tid: int, program: Iterator[TaskSpec]):
        self.tid = tid
        self.program = program
        self.cur: TaskSpec | None = None
        self.remaining = 0
        self.seq = -1
        self.began = False
        self.done = False
        self.plants_pending: dict[int, int] = {}


class _Machine:
    def __init__(self, config: MachineConfig, programs: list[ThreadProgram],
                 catalog: EventCatalog, duration: int):
        self.cfg = config
        self.catalog = catalog
        self.duration = duration
        self.rng = np.random.default_rng(config.seed)
        self.heap: list[tuple[int, int, int, tuple]] = []
        self.heap_seq = 0
        self.cores = [_Core(i) for i in range(config.cores)]
        self.threads = [
            _Thread(tid, prog(np.random.default_rng((config.seed, 7, tid))))
            for tid, prog in enumerate(programs)
        ]
        self.ready: list[int] = []
        self.events: list[tuple[int, int, int, int, int]] = []
        self.task_ids: list[str] = []
        self.last_nc = [-1] * config.cores
        self.thread_last = [-1] * len(self.threads)
        self.next_instance = 0
        self.stopped = False
        self.live_threads = len(self.threads)
        # counter emission order is catalog order, proportional ones resolved
        self.rate_idx: list[tuple[int, CounterRate]] = []
        names = {name: catalog.index(name) for name in config.counter_rates}
        for name, rate in config.counter_rates.items():
            self.rate_idx.append((names[name], rate))
        self.prop_base = {
            names[name]: (names[rate.proportional_to], rate.factor)
            for name, rate in config.counter_rates.items()
            if rate.proportional_to is not None
        }

    # -- plumbing ---------------------------------------------------------

    A_WAKE, A_SWITCH, A_IRQ_BATCH, A_END, A_WORK, A_TICK, A_FAULT = range(7)

    def _push(self, t: int, action: int, payload: tuple) -> None:
        heapq.heappush(self.heap, (t, self.heap_seq, action, payload))
        self.heap_seq += 1

    def _emit_nc(self, core: int, desired: int, kind: EvKind, a: int, b: int,
                 thread: int = -1) -> int:
        ts = max(desired, self.last_nc[core] + 1)
        if thread >= 0:
            ts = max(ts, self.thread_last[thread] + 1)
        while ts % self.cfg.counter_tick == 0:
            ts += 1
        self.last_nc[core] = ts
        if thread >= 0:
            self.thread_last[thread] = ts
        self.events.append((ts, core, int(kind), a, b))
        return ts

    def _emit_counter(self, core: int, ts: int, idx: int, delta: int) -> None:
        self.events.append((ts, core, int(EvKind.COUNTER), idx, delta))

    # -- scheduling -------------------------------------------------------

    def _dispatch_idle(self, t: int) -> None:
        for core in self.cores:
            if not self.ready:
                return
            if core.thread == -1 and not core.stack:
                self._dispatch(core, self.ready.pop(0), t)

    def _quantum(self) -> int:
        q = self.cfg.quantum
        if self.cfg.quantum_jitter:
            j = self.cfg.quantum_jitter
            q = int(self.rng.integers(int(q * (1 - j)), int(q * (1 + j)) + 1))
        return max(1, q)

    def _dispatch(self, core: _Core, tid: int, t: int) -> None:
        th = self.threads[tid]
        ts = self._emit_nc(core.idx, t, EvKind.SCHED_IN, tid, 0, thread=tid)
        core.thread = tid
        core.pending_switch = False
        core.switch_token += 1
        self._push(ts + self._quantum(), self.A_SWITCH, (core.idx, core.switch_token))
        self._start_work(core, th, ts)

    def _start_work(self, core: _Core, th: _Thread, t: int) -> None:
        """Thread continues (or begins) its current task on `core` at t."""
        if th.cur is None and not self._next_task(core, th, t):
            self._sched_out(core, th, t, requeue=False)
            return
        if not th.began:
            t = self._begin_task(core, th, t)
            if core.stack:
                # a planted instance preempted the task at birth; work
                # resumes from the stack-drain path
                return
        core.run_start = t
        core.work_token += 1
        self._push(t + th.remaining, self.A_WORK, (core.idx, core.work_token))

    def _next_task(self, core: _Core, th: _Thread, t: int) -> bool:
        try:
            th.cur = next(th.program)
        except StopIteration:
            th.done = True
            self.live_threads -= 1
            return False
        th.remaining = max(1, th.cur.work)
        th.began = False
        return True

    def _begin_task(self, core: _Core, th: _Thread, t: int) -> int:
        th.began = True
        spec = th.cur
        if spec.annotated:
            th.seq = len(self.task_ids)
            self.task_ids.append(spec.task_id)
            t = self._emit_nc(core.idx, t, EvKind.TASK_BEGIN, th.seq, th.tid, thread=th.tid)
            th.plants_pending = {
                self.catalog.index(name): extra for name, extra in spec.counter_extra.items()
            }
            for plant_kind, length in spec.kernel_plants:
                kind = 1 if plant_kind == "fault" else 0
                t = self._start_instance(core, t + 1, kind, max(1, length))
        else:
            th.seq = -1
        return t

    def _sched_out(self, core: _Core, th: _Thread, t: int, requeue: bool) -> None:
        ts = self._emit_nc(core.idx, t, EvKind.SCHED_OUT, th.tid, 0, thread=th.tid)
        core.thread = -1
        core.run_start = -1
        core.work_token += 1
        core.switch_token += 1
        if requeue:
            self.ready.append(th.tid)
        self._dispatch_idle(ts)

    def _on_switch(self, t: int, core_idx: int, token: int) -> None:
        core = self.cores[core_idx]
        if token != core.switch_token or core.thread == -1:
            return
        if core.stack:
            core.pending_switch = True  # switch completes when the stack drains
            return
        if not self.ready:
            core.switch_token += 1
            self._push(t + self._quantum(), self.A_SWITCH, (core_idx, core.switch_token))
            return
        th = self.threads[core.thread]
        th.remaining -= t - core.run_start
        if th.remaining < 1:
            th.remaining = 1
        self._sched_out(core, th, t, requeue=True)

    def _on_work_done(self, t: int, core_idx: int, token: int) -> None:
        core = self.cores[core_idx]
        if token != core.work_token or core.thread == -1 or core.stack:
            return
        th = self.threads[core.thread]
        spec = th.cur
        ts = t
        if spec.annotated:
            ts = self._emit_nc(core.idx, t, EvKind.TASK_END, th.seq, th.tid, thread=th.tid)
        th.cur = None
        th.plants_pending = {}
        gap = max(0, spec.gap)
        if gap == 0:
            self._start_work(core, th, ts)
            return
        self._sched_out(core, th, ts, requeue=False)
        if not th.done:
            self._push(ts + gap, self.A_WAKE, (th.tid,))

    def _on_wake(self, t: int, tid: int) -> None:
        self.ready.append(tid)
        self._dispatch_idle(t)

    # -- interrupts and faults ---------------------------------------------

    def _start_instance(self, core_or_idx, t: int, kind: int, length: int) -> int:
        core = core_or_idx if isinstance(core_or_idx, _Core) else self.cores[core_or_idx]
        if core.stack:
            top = core.stack[-1]
            top.remaining -= t - top.resume_ts
            if top.remaining < 1:
                top.remaining = 1
            core.end_token += 1
        elif core.thread != -1 and core.run_start >= 0:
            th = self.threads[core.thread]
            th.remaining -= t - core.run_start
            if th.remaining < 1:
                th.remaining = 1
            core.run_start = -1
            core.work_token += 1
        instance = self.next_instance
        self.next_instance += 1
        ev = EvKind.FAULT_ENTER if kind == 1 else EvKind.IRQ_ENTER
        ts = self._emit_nc(core.idx, t, ev, instance, 0)
        core.stack.append(_Frame(kind, instance, length, ts))
        core.end_token += 1
        self._push(ts + length, self.A_END, (core.idx, core.end_token))
        return ts

    def _on_instance_end(self, t: int, core_idx: int, token: int) -> None:
        core = self.cores[core_idx]
        if token != core.end_token or not core.stack:
            return
        frame = core.stack.pop()
        ev = EvKind.FAULT_EXIT if frame.kind == 1 else EvKind.IRQ_EXIT
        ts = self._emit_nc(core.idx, t, ev, frame.instance, 0)
        if core.stack:
            top = core.stack[-1]
            top.resume_ts = ts
            core.end_token += 1
            self._push(ts + top.remaining, self.A_END, (core.idx, core.end_token))
            return
        # stack drained: complete a deferred switch or resume the thread
        if core.thread == -1:
            self._dispatch_idle(ts)
            return
        th = self.threads[core.thread]
        if self.stopped:
            return
        if core.pending_switch and self.ready:
            th.remaining = max(1, th.remaining)
            self._sched_out(core, th, ts, requeue=True)
            return
        core.pending_switch = False
        core.run_start = ts
        core.work_token += 1
        self._push(ts + th.remaining, self.A_WORK, (core.idx, core.work_token))
        core.switch_token += 1
        self._push(ts + self._quantum(), self.A_SWITCH, (core.idx, core.switch_token))

    def _on_irq_batch(self, t: int, core_idx: int, is_fault: int) -> None:
        model = self.cfg.faults if is_fault else self.cfg.interrupts
        core = self.cores[core_idx]
        burstiness = model.burstiness_at(t)
        size = int(self.rng.geometric(1.0 / burstiness))
        offset = 0
        for _ in range(size):
            if is_fault:
                # faults occur in thread context only, never preempt anything
                if not core.stack and core.thread != -1 and core.run_start >= 0:
                    th = self.threads[core.thread]
                    if th.cur is not None and th.cur.annotated:
                        self._start_instance(core, t, 1, max(1, model.length.draw(self.rng)))
            else:
                self._start_instance(core, t + offset, 0, max(1, model.length.draw(self.rng)))
                offset += int(self.rng.integers(1, 4))
        scale = burstiness / (model.rate / 1e9)
        nxt = t + max(1, int(round(self.rng.exponential(scale))))
        self._push(nxt, self.A_FAULT if is_fault else self.A_IRQ_BATCH, (core_idx, is_fault))

    # -- counters -----------------------------------------------------------

    def _on_tick(self, t: int, core_idx: int) -> None:
        core = self.cores[core_idx]
        in_irq = bool(core.stack)
        th = self.threads[core.thread] if core.thread != -1 else None
        running = th is not None and not in_irq and core.run_start >= 0
        if in_irq or running:
            deltas: dict[int, int] = {}
            for idx, rate in self.rate_idx:
                if rate.proportional_to is not None:
                    continue
                mean = rate.irq if in_irq else rate.task
                delta = int(self.rng.poisson(mean)) if mean > 0 else 0
                if delta:
                    deltas[idx] = delta
            if running and th.plants_pending:
                for idx in list(th.plants_pending):
                    deltas[idx] = deltas.get(idx, 0) + th.plants_pending.pop(idx)
            for idx, (base, factor) in self.prop_base.items():
                d = deltas.get(base, 0) * factor
                if d:
                    deltas[idx] = d
            for idx, delta in deltas.items():
                self._emit_counter(core_idx, t, idx, delta)
        self._push(t + self.cfg.counter_tick, self.A_TICK, (core_idx,))

    # -- main loop -----------------------------------------------------------

    def run(self) -> EventBatch:
        t0 = 1
        for th in self.threads:
            self._push(t0 + th.tid, self.A_WAKE, (th.tid,))
        if self.cfg.interrupts.rate > 0:
            for c in range(self.cfg.cores):
                self._push(t0 + 1, self.A_IRQ_BATCH, (c, 0))
        if self.cfg.faults.rate > 0:
            for c in range(self.cfg.cores):
                self._push(t0 + 1, self.A_FAULT, (c, 1))
        if self.rate_idx:
            for c in range(self.cfg.cores):
                self._push(self.cfg.counter_tick, self.A_TICK, (c,))

        while self.heap:
            if self.live_threads == 0 and all(
                c.thread == -1 and not c.stack for c in self.cores
            ):
                break  # workload exhausted; only ticks/arrivals remain
            t, _, action, payload = heapq.heappop(self.heap)
            if t >= self.duration:
                if not self.stopped:
                    self.stopped = True
                # past the horizon, only drain open interrupt stacks
                if action != self.A_END:
                    continue
            if action == self.A_WAKE:
                if not self.stopped:
                    self._on_wake(t, *payload)
            elif action == self.A_SWITCH:
                self._on_switch(t, *payload)
            elif action in (self.A_IRQ_BATCH, self.A_FAULT):
                self._on_irq_batch(t, *payload)
            elif action == self.A_END:
                self._on_instance_end(t, *payload)
            elif action == self.A_WORK:
                self._on_work_done(t, *payload)
            elif action == self.A_TICK:
                self._on_tick(t, *payload)

        return EventBatch.from_events(self.events, self.task_ids)


def run(config: MachineConfig, scenario, duration: int,
        catalog: EventCatalog | None = None):
    """Simulate `scenario` on `config` for `duration` ns.

    Returns (EventBatch, GroundTruthLedger). The ledger is computed from
    the emitted stream by interval arithmetic, independent of how the
    stream was produced.
    """
    from .oracle import ledger_oracle

    if duration <= 0:
        raise ConfigError("duration must be > 0")
    catalog = catalog or default_catalog()
    config.validate(catalog)
    if scenario.scripted is not None:
        batch = scenario.scripted
        validate_batch(batch)
    else:
        programs = scenario.build_programs(config)
        batch = _Machine(config, programs, catalog, duration).run()
    ledger = ledger_oracle(batch, catalog=catalog)
    return batch, ledger
