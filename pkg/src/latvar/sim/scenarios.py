"""Workload scenarios: thread/task programs plus machine defaults.

A scenario either generates per-thread task programs (work lengths,
inter-arrival gaps, optional planted causes) or carries a fully scripted
event stream. Builtin scenarios cover the shapes the analyzer is expected
to recover: a plain loop benchmark, bursty interrupts whose burstiness
drifts across segments, and planted-cause workloads used by the
recovery tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..events import FAULT_LEN, INTERRUPT_LEN
from .machine import (
    ArrivalModel,
    ConfigError,
    CounterRate,
    Dist,
    EvKind,
    EventBatch,
    MachineConfig,
    TaskSpec,
)

INST = "ctr.INST_RETIRED.ANY_P"
CYC = "ctr.CPU_CLK_UNHALTED.THREAD_P"
L1_MISS = "ctr.MEM_LOAD_RETIRED.L1_MISS"
DTLB_WALK = "ctr.DTLB_LOAD_MISSES.MISS_CAUSES_A_WALK"


@dataclass
class PlantedCause:
    """Inflate one event on a fraction of tasks, raising their latency.

    For kernel length events the extra instance length is both the value
    and the latency increase; for counters, `value` is added to the
    counter and `latency` ns of extra work to the task.
    """

    event: str
    fraction: float
    value: int = 0
    latency: int = 0


@dataclass
class ThreadSpec:
    work: Dist = field(default_factory=lambda: Dist("const", value=50_000))
    gap: Dist = field(default_factory=lambda: Dist("const", value=1_000))
    count: int | None = None
    annotated: bool = True


@dataclass
class Scenario:
    name: str
    threads: list[ThreadSpec] = field(default_factory=list)
    planted: list[PlantedCause] = field(default_factory=list)
    machine: MachineConfig = field(default_factory=MachineConfig)
    scripted: EventBatch | None = None

    def build_programs(self, config: MachineConfig):
        if self.scripted is not None:
            raise ConfigError("scripted scenario has no thread programs")
        programs = []
        for tid, spec in enumerate(self.threads):
            programs.append(self._program(tid, spec))
        return programs

    def _program(self, tid: int, spec: ThreadSpec):
        planted = self.planted

        def program(rng: np.random.Generator) -> Iterator[TaskSpec]:
            k = 0
            while spec.count is None or k < spec.count:
                work = max(1, spec.work.draw(rng))
                gap = max(0, spec.gap.draw(rng))
                counter_extra: dict[str, int] = {}
                kernel_plants: list[tuple[str, int]] = []
                for cause in planted:
                    if rng.random() >= cause.fraction:
                        continue
                    if cause.event == INTERRUPT_LEN:
                        kernel_plants.append(("irq", cause.latency or cause.value))
                    elif cause.event == FAULT_LEN:
                        kernel_plants.append(("fault", cause.latency or cause.value))
                    else:
                        counter_extra[cause.event] = (
                            counter_extra.get(cause.event, 0) + cause.value
                        )
                        work += cause.latency
                yield TaskSpec(
                    task_id=f"t{tid}.{k}",
                    work=work,
                    gap=gap,
                    annotated=spec.annotated,
                    counter_extra=counter_extra,
                    kernel_plants=kernel_plants,
                )
                k += 1

        return program


# -- builtin scenarios -------------------------------------------------------


def loopbench(threads: int = 4, cores: int = 2, work: int = 60_000, gap: int = 2_000) -> Scenario:
    """Empty-loop benchmark: more threads than cores, light interrupts."""
    machine = MachineConfig(
        cores=cores,
        quantum=80_000,
        counter_tick=2_000,
        counter_rates={
            INST: CounterRate(task=4.0, irq=1.0),
            CYC: CounterRate(task=8.0, irq=2.0),
            L1_MISS: CounterRate(task=0.2, irq=0.4),
            DTLB_WALK: CounterRate(task=0.05, irq=0.1),
        },
        interrupts=ArrivalModel(rate=2000.0, burstiness=1.5,
                                length=Dist("uniform", lo=1_000, hi=8_000)),
        faults=ArrivalModel(rate=300.0, burstiness=1.0,
                            length=Dist("uniform", lo=500, hi=3_000)),
    )
    spec = ThreadSpec(work=Dist("const", value=work), gap=Dist("exponential", mean=gap))
    return Scenario("loopbench", threads=[spec] * threads, machine=machine)


def bursty_interrupts(
    segment_len: int = 20_000_000,
    levels_seed: int = 11,
    n_levels: int = 24,
    rate: float = 60_000.0,
) -> Scenario:
    """Interrupt burstiness drifts per time block while the mean interrupt
    load stays fixed; tail latency then varies across segments."""
    rng = np.random.default_rng(levels_seed)
    levels = [float(x) for x in 1.0 + 11.0 * rng.random(n_levels)]
    machine = MachineConfig(
        cores=1,
        quantum=10_000_000,
        counter_tick=5_000,
        counter_rates={INST: CounterRate(task=2.0, irq=0.5)},
        interrupts=ArrivalModel(
            rate=rate,
            burstiness=1.0,
            length=Dist("uniform", lo=2_000, hi=6_000),
            burst_cycle=segment_len,
            burst_levels=levels,
        ),
    )
    spec = ThreadSpec(work=Dist("const", value=30_000), gap=Dist("const", value=5_000))
    return Scenario("bursty_interrupts", threads=[spec], machine=machine)


def planted_counter(
    fraction: float = 0.01,
    n_tasks: int = 2_000,
    extra_value: int = 600,
    extra_work: int = 40_000,
    decoy: bool = False,
) -> Scenario:
    """Inflate one INST counter on a fraction of tasks (with matching extra
    work). With `decoy`, a CYCLE counter mirrors the INST counter exactly."""
    rates = {
        INST: CounterRate(task=3.0, irq=0.0),
        L1_MISS: CounterRate(task=0.5, irq=0.0),
        DTLB_WALK: CounterRate(task=0.2, irq=0.0),
    }
    if decoy:
        rates[CYC] = CounterRate(proportional_to=INST, factor=2)
    machine = MachineConfig(
        cores=1,
        quantum=100_000_000,
        counter_tick=2_000,
        counter_rates=rates,
    )
    spec = ThreadSpec(
        work=Dist("uniform", lo=18_000, hi=22_000),
        gap=Dist("const", value=1_000),
        count=n_tasks,
    )
    name = "planted_counter_decoy" if decoy else "planted_counter"
    return Scenario(
        name,
        threads=[spec],
        planted=[PlantedCause(INST, fraction, value=extra_value, latency=extra_work)],
        machine=machine,
    )


def planted_interrupt(fraction: float = 0.01, n_tasks: int = 2_000,
                      length: int = 60_000) -> Scenario:
    """Inject one long interrupt into a fraction of tasks."""
    machine = MachineConfig(
        cores=1,
        quantum=100_000_000,
        counter_tick=2_000,
        counter_rates={INST: CounterRate(task=2.0, irq=0.5)},
        interrupts=ArrivalModel(rate=1_000.0, burstiness=1.0,
                                length=Dist("uniform", lo=500, hi=2_000)),
    )
    spec = ThreadSpec(
        work=Dist("uniform", lo=18_000, hi=22_000),
        gap=Dist("const", value=1_000),
        count=n_tasks,
    )
    return Scenario(
        "planted_interrupt",
        threads=[spec],
        planted=[PlantedCause(INTERRUPT_LEN, fraction, latency=length)],
        machine=machine,
    )


def figure_example() -> Scenario:
    """The two-thread worked example: loop2 runs undisturbed on core 1;
    loop3 starts on core 0, waits 20us to migrate to core 1, and is
    preempted there by one 30us interrupt. Expected record values:
    loop2 sched=0 interrupt=0 running=100us; loop3 sched=20us
    interrupt=30us running=100us."""
    from ..events import default_catalog

    catalog = default_catalog()
    dtlb = catalog.index(DTLB_WALK)
    l1 = catalog.index(L1_MISS)
    B, E = EvKind.TASK_BEGIN, EvKind.TASK_END
    events = [
        # (ts, core, kind, a, b)
        (1_000, 0, EvKind.SCHED_IN, 0, 0),
        (51_000, 0, B, 0, 0),              # loop3 begins (loop1 was not annotated)
        (101_000, 0, EvKind.SCHED_OUT, 0, 0),
        (5_000, 1, EvKind.SCHED_IN, 1, 0),
        (11_000, 1, B, 1, 1),              # loop2
        (60_000, 1, EvKind.COUNTER, dtlb, 3),
        (111_000, 1, E, 1, 1),
        (116_000, 1, EvKind.SCHED_OUT, 1, 0),
        (121_000, 1, EvKind.SCHED_IN, 0, 0),
        (125_000, 1, EvKind.COUNTER, dtlb, 2),  # loop3 running between t8 and t9
        (131_000, 1, EvKind.IRQ_ENTER, 0, 0),
        (145_000, 1, EvKind.COUNTER, l1, 7),  # inside the interrupt: not credited
        (161_000, 1, EvKind.IRQ_EXIT, 0, 0),
        (165_000, 1, EvKind.COUNTER, dtlb, 4),  # running again after t10
        (201_000, 1, E, 0, 0),
        (206_000, 1, EvKind.SCHED_OUT, 0, 0),
    ]
    batch = EventBatch.from_events(events, task_ids=["loop3", "loop2"])
    return Scenario("figure_example", machine=MachineConfig(cores=2), scripted=batch)


BUILTIN_SCENARIOS = {
    "loopbench": loopbench,
    "bursty_interrupts": bursty_interrupts,
    "planted_counter": planted_counter,
    "planted_counter_decoy": lambda **kw: planted_counter(decoy=True, **kw),
    "planted_interrupt": planted_interrupt,
    "figure_example": figure_example,
}


def load_scenario(source: str | Path) -> Scenario:
    """Resolve a scenario: a builtin name, or a JSON file.

    JSON shape: {"builtin": name, "params": {...}} or
    {"name": ..., "threads": [{"work": ..., "gap": ..., "count": ...}],
     "planted": [...], "machine": {...}}.
    """
    name = str(source)
    if name in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name]()
    path = Path(source)
    if not path.exists():
        raise ConfigError(
            f"unknown scenario {name!r} (not a builtin: {sorted(BUILTIN_SCENARIOS)}; not a file)"
        )
    obj = json.loads(path.read_text())
    if "builtin" in obj:
        builtin = obj["builtin"]
        if builtin not in BUILTIN_SCENARIOS:
            raise ConfigError(f"unknown builtin scenario {builtin!r}")
        return BUILTIN_SCENARIOS[builtin](**obj.get("params", {}))
    threads = [
        ThreadSpec(
            work=Dist.from_obj(t.get("work", 50_000)),
            gap=Dist.from_obj(t.get("gap", 1_000)),
            count=t.get("count"),
            annotated=t.get("annotated", True),
        )
        for t in obj.get("threads", [])
    ]
    planted = [PlantedCause(**p) for p in obj.get("planted", [])]
    machine = MachineConfig.from_obj(obj.get("machine", {}))
    return Scenario(obj.get("name", path.stem), threads=threads,
                    planted=planted, machine=machine)


# -- fuzzing ------------------------------------------------------------------


def nested_preemption_fuzz(
    seed: int,
    depth_max: int,
    n_instances: int,
    cores: int = 2,
    tasks_per_core: int = 4,
    counter_idxs: tuple[int, ...] = (),
    counter_tick: int = 1_000,
    sched_churn: bool = True,
) -> EventBatch:
    """Random properly nested interrupt/fault streams wrapped in valid
    task/sched framing, with optional counter ticks sprinkled over the
    whole timeline. Nesting validity holds by construction."""
    if depth_max < 1:
        raise ConfigError("depth_max must be >= 1")
    rng = np.random.default_rng(seed)
    events: list[tuple[int, int, int, int, int]] = []
    task_ids: list[str] = []
    next_instance = 0
    per_core = max(1, n_instances // max(1, cores))

    def off_grid(t: int) -> int:
        return t + 1 if t % counter_tick == 0 else t

    for core in range(cores):
        thread = core
        t = off_grid(int(rng.integers(1, 50)))
        budget = per_core if core < cores - 1 else n_instances - per_core * (cores - 1)

        def advance(lo: int = 1, hi: int = 400) -> int:
            nonlocal t
            t = off_grid(t + int(rng.integers(lo, hi + 1)))
            return t

        def build_instance(depth: int) -> None:
            nonlocal next_instance, budget
            instance = next_instance
            next_instance += 1
            budget -= 1
            kind = EvKind.FAULT_ENTER if rng.random() < 0.3 else EvKind.IRQ_ENTER
            exit_kind = EvKind.FAULT_EXIT if kind == EvKind.FAULT_ENTER else EvKind.IRQ_EXIT
            events.append((t, core, int(kind), instance, 0))
            advance()
            while budget > 0 and depth < depth_max and rng.random() < 0.45:
                build_instance(depth + 1)
                advance()
            events.append((t, core, int(exit_kind), instance, 0))
            advance()

        events.append((t, core, int(EvKind.SCHED_IN), thread, 0))
        for k in range(tasks_per_core):
            seq = len(task_ids)
            task_ids.append(f"fuzz.t{thread}.{k}")
            advance()
            events.append((t, core, int(EvKind.TASK_BEGIN), seq, thread))
            groups = max(1, budget // max(1, (tasks_per_core - k) * 3))
            for g in range(groups):
                if budget <= 0:
                    break
                advance()
                build_instance(1)
                if sched_churn and budget > 0 and rng.random() < 0.25:
                    advance()
                    events.append((t, core, int(EvKind.SCHED_OUT), thread, 0))
                    advance(50, 900)
                    events.append((t, core, int(EvKind.SCHED_IN), thread, 0))
            advance()
            events.append((t, core, int(EvKind.TASK_END), seq, thread))
        # drain any leftover budget outside tasks
        while budget > 0:
            advance()
            build_instance(1)
        advance()
        events.append((t, core, int(EvKind.SCHED_OUT), thread, 0))

        if counter_idxs:
            first = min(e[0] for e in events if e[1] == core)
            last = max(e[0] for e in events if e[1] == core)
            for tick in range(first // counter_tick + 1, last // counter_tick + 1):
                for idx in counter_idxs:
                    delta = int(rng.integers(0, 4))
                    if delta:
                        events.append((tick * counter_tick, core, int(EvKind.COUNTER), idx, delta))

    return EventBatch.from_events(events, task_ids)
