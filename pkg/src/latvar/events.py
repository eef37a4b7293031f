"""Event identities, groups, and the counter catalog.

Two families of events exist. Kernel events (scheduling waits, interrupt
and fault lengths/counts, running time, migrations) are always recorded
for a selected task. CPU counter events live in a catalog with a slot
budget: a few counters are always on ("fixed"), the rest ("configurable")
are multiplexed a handful at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class EventKind(Enum):
    KERNEL_LENGTH = "kernel-length"
    KERNEL_COUNT = "kernel-count"
    CPU_COUNTER = "cpu-counter"


class EventGroup(Enum):
    INST = "INST"
    CACHE = "CACHE"
    CYCLE = "CYCLE"
    UOP = "UOP"
    OTHER = "OTHER"
    KERNEL = "KERNEL"


@dataclass(frozen=True)
class EventId:
    name: str
    kind: EventKind

    def __post_init__(self) -> None:
        if not self.name or any(c in self.name for c in "\t,= \n"):
            raise CatalogError(f"invalid event name: {self.name!r}")


# The eight built-in kernel events, in catalog index order 0..7.
SCHED_WAIT_LEN = "sched_wait_len"
SCHED_WAIT_COUNT = "sched_wait_count"
INTERRUPT_LEN = "interrupt_len"
INTERRUPT_COUNT = "interrupt_count"
FAULT_LEN = "fault_len"
FAULT_COUNT = "fault_count"
RUNNING_LEN = "running_len"
MIGRATION_COUNT = "migration_count"

KERNEL_EVENTS: tuple[tuple[str, EventKind], ...] = (
    (SCHED_WAIT_LEN, EventKind.KERNEL_LENGTH),
    (SCHED_WAIT_COUNT, EventKind.KERNEL_COUNT),
    (INTERRUPT_LEN, EventKind.KERNEL_LENGTH),
    (INTERRUPT_COUNT, EventKind.KERNEL_COUNT),
    (FAULT_LEN, EventKind.KERNEL_LENGTH),
    (FAULT_COUNT, EventKind.KERNEL_COUNT),
    (RUNNING_LEN, EventKind.KERNEL_LENGTH),
    (MIGRATION_COUNT, EventKind.KERNEL_COUNT),
)


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    event: EventId
    group: EventGroup
    fixed: bool = False
    configurable: bool = False


@dataclass
class EventCatalog:
    """Event table plus slot budget and parent/child pairs.

    Indices are stable: kernel events occupy 0..7, counters follow in
    declaration order. Both recorder backends and the oracle address
    counters by these indices.
    """

    entries: list[CatalogEntry]
    parent_child: list[tuple[str, str]] = field(default_factory=list)
    fixed_slots: int = 3
    configurable_slots: int = 4

    def __post_init__(self) -> None:
        names = [e.event.name for e in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CatalogError(f"duplicate event names: {dupes}")
        if names[: len(KERNEL_EVENTS)] != [n for n, _ in KERNEL_EVENTS]:
            raise CatalogError("kernel events must occupy catalog indices 0..7")
        for e in self.entries:
            if e.event.kind is EventKind.CPU_COUNTER:
                if e.group is EventGroup.KERNEL:
                    raise CatalogError(f"{e.event.name}: cpu counter in KERNEL group")
            elif e.group is not EventGroup.KERNEL:
                raise CatalogError(f"{e.event.name}: kernel event outside KERNEL group")
        self._index = {n: i for i, n in enumerate(names)}
        known = set(names)
        for child, parent in self.parent_child:
            if child not in known or parent not in known:
                raise CatalogError(f"pair ({child}, {parent}) references unknown event")
        self._check_pair_cycles()
        if self.fixed_slots < 0 or self.configurable_slots < 0:
            raise CatalogError("slot counts must be non-negative")

    def _check_pair_cycles(self) -> None:
        parent_of: dict[str, list[str]] = {}
        for child, parent in self.parent_child:
            parent_of.setdefault(child, []).append(parent)
        for start in parent_of:
            seen = {start}
            frontier = list(parent_of[start])
            while frontier:
                cur = frontier.pop()
                if cur in seen:
                    raise CatalogError(f"cycle in parent relation involving {cur}")
                seen.add(cur)
                frontier.extend(parent_of.get(cur, []))

    # -- lookups ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CatalogError(f"unknown event: {name}") from None

    def name(self, idx: int) -> str:
        return self.entries[idx].event.name

    def group(self, name: str) -> EventGroup:
        return self.entries[self.index(name)].group

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def kernel_indices(self) -> list[int]:
        return list(range(len(KERNEL_EVENTS)))

    @property
    def fixed_indices(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.fixed]

    @property
    def configurable_indices(self) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.configurable]

    def counter_names(self) -> list[str]:
        return [e.event.name for e in self.entries if e.event.kind is EventKind.CPU_COUNTER]

    # -- text format -----------------------------------------------------

    def dumps(self) -> str:
        lines = ["# latvar catalog v1"]
        lines.append(f"slots\tfixed={self.fixed_slots}\tconfigurable={self.configurable_slots}")
        for e in self.entries:
            if e.event.kind is not EventKind.CPU_COUNTER:
                continue
            slot = "fixed" if e.fixed else "configurable"
            lines.append(f"event\t{e.event.name}\t{e.group.value}\t{slot}")
        for child, parent in self.parent_child:
            lines.append(f"pair\t{child}\t{parent}")
        return "\n".join(lines) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EventCatalog":
        entries = _kernel_entries()
        pairs: list[tuple[str, str]] = []
        fixed_slots, configurable_slots = 3, 4
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t") if "\t" in line else line.split()
            tag = fields[0]
            try:
                if tag == "slots":
                    for f in fields[1:]:
                        key, val = f.split("=")
                        if key == "fixed":
                            fixed_slots = int(val)
                        elif key == "configurable":
                            configurable_slots = int(val)
                        else:
                            raise CatalogError(f"unknown slots key {key!r}")
                elif tag == "event":
                    _, name, group, slot = fields
                    if slot not in ("fixed", "configurable"):
                        raise CatalogError(f"bad slot class {slot!r}")
                    entries.append(
                        CatalogEntry(
                            EventId(name, EventKind.CPU_COUNTER),
                            EventGroup(group),
                            fixed=slot == "fixed",
                            configurable=slot == "configurable",
                        )
                    )
                elif tag == "pair":
                    _, child, parent = fields
                    pairs.append((child, parent))
                else:
                    raise CatalogError(f"unknown line tag {tag!r}")
            except (ValueError, CatalogError) as exc:
                raise CatalogError(f"catalog line {lineno}: {exc}") from None
        return cls(entries, pairs, fixed_slots, configurable_slots)

    @classmethod
    def load(cls, path: str | Path) -> "EventCatalog":
        return cls.loads(Path(path).read_text())


def _kernel_entries() -> list[CatalogEntry]:
    return [CatalogEntry(EventId(n, k), EventGroup.KERNEL) for n, k in KERNEL_EVENTS]


def default_catalog() -> EventCatalog:
    """Representative counter table: three fixed slots, four configurable.

    Users with other hardware can ship their own catalog file; nothing
    below is authoritative.
    """
    ctr = EventKind.CPU_COUNTER

    def c(name: str, group: EventGroup, fixed: bool = False) -> CatalogEntry:
        return CatalogEntry(EventId("ctr." + name, ctr), group, fixed=fixed, configurable=not fixed)

    entries = _kernel_entries() + [
        c("INST_RETIRED.ANY_P", EventGroup.INST, fixed=True),
        c("CPU_CLK_UNHALTED.THREAD_P", EventGroup.CYCLE, fixed=True),
        c("CPU_CLK_UNHALTED.REF_TSC", EventGroup.CYCLE, fixed=True),
        c("BR_INST_RETIRED.ALL_BRANCHES", EventGroup.INST),
        c("BR_MISP_RETIRED.ALL_BRANCHES", EventGroup.INST),
        c("MEM_INST_RETIRED.ALL_LOADS", EventGroup.INST),
        c("MEM_INST_RETIRED.ALL_STORES", EventGroup.INST),
        c("MEM_INST_RETIRED.LOCK_LOADS", EventGroup.INST),
        c("MEM_LOAD_RETIRED.L1_MISS", EventGroup.CACHE),
        c("MEM_LOAD_RETIRED.L2_MISS", EventGroup.CACHE),
        c("MEM_LOAD_RETIRED.L3_MISS", EventGroup.CACHE),
        c("DTLB_LOAD_MISSES.MISS_CAUSES_A_WALK", EventGroup.CACHE),
        c("ITLB_MISSES.MISS_CAUSES_A_WALK", EventGroup.CACHE),
        c("CYCLE_ACTIVITY.STALLS_TOTAL", EventGroup.CYCLE),
        c("CYCLE_ACTIVITY.STALLS_L2_MISS", EventGroup.CYCLE),
        c("CYCLE_ACTIVITY.STALLS_MEM_ANY", EventGroup.CYCLE),
        c("UOPS_ISSUED.ANY", EventGroup.UOP),
        c("HW_INTERRUPTS.RECEIVED", EventGroup.OTHER),
    ]
    pairs = [
        ("ctr.CYCLE_ACTIVITY.STALLS_L2_MISS", "ctr.CYCLE_ACTIVITY.STALLS_TOTAL"),
        ("ctr.CYCLE_ACTIVITY.STALLS_MEM_ANY", "ctr.CYCLE_ACTIVITY.STALLS_TOTAL"),
        ("ctr.BR_INST_RETIRED.ALL_BRANCHES", "ctr.INST_RETIRED.ANY_P"),
        ("ctr.BR_MISP_RETIRED.ALL_BRANCHES", "ctr.BR_INST_RETIRED.ALL_BRANCHES"),
        ("ctr.MEM_INST_RETIRED.LOCK_LOADS", "ctr.MEM_INST_RETIRED.ALL_LOADS"),
    ]
    return EventCatalog(entries, pairs, fixed_slots=3, configurable_slots=4)
