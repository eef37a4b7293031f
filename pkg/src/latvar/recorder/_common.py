"""Recorder policy shared by both engine backends.

Selection and epoch counter-subset choice are pure functions of
(seed, task counter) and (seed, epoch index); the engines never
reimplement them, so the compiled and pure-Python paths cannot diverge
on policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..events import EventCatalog

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def task_selected(seed: int, counter: int, rate: float) -> bool:
    """Deterministic selector with exact long-run proportion: a seeded
    phase plus a rate quota, so any n consecutive tasks select
    n*rate +/- 1 of them."""
    if rate >= 1.0:
        return True
    if rate <= 0.0:
        return False
    phase = splitmix64(seed ^ 0xC0FFEE) / 2.0**64
    return math.floor((counter + 1) * rate + phase) > math.floor(counter * rate + phase)


def epoch_enabled_mask(seed: int, epoch: int, catalog: EventCatalog) -> np.ndarray:
    """uint8 mask over catalog indices enabled for `epoch`: kernel events,
    fixed counters, and a uniformly chosen slot-sized subset of the
    configurable counters."""
    mask = np.zeros(len(catalog), dtype=np.uint8)
    for i in catalog.kernel_indices:
        mask[i] = 1
    for i in catalog.fixed_indices:
        mask[i] = 1
    conf = catalog.configurable_indices
    m = len(conf)
    k = min(catalog.configurable_slots, m)
    if k <= 0 or m == 0:
        return mask
    arr = list(conf)
    state = splitmix64(splitmix64(seed) ^ ((epoch * 0x9E3779B97F4A7C15) & _MASK64))
    for i in range(k):
        state = splitmix64(state)
        j = i + state % (m - i)
        arr[i], arr[j] = arr[j], arr[i]
        mask[arr[i]] = 1
    return mask


class NestedTaskOnThread(RuntimeError):
    pass


class UnmatchedEnd(RuntimeError):
    pass


class EmptyStackPop(RuntimeError):
    pass


class UnknownCounter(RuntimeError):
    pass


@dataclass
class RecorderConfig:
    catalog: EventCatalog
    selection_rate: float = 1.0
    epoch_length: int = 1_000_000_000
    seed: int = 0
    log_instances: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.selection_rate <= 1.0:
            raise ValueError("selection_rate must be in [0, 1]")
        if self.epoch_length < 1:
            raise ValueError("epoch_length must be >= 1")


@dataclass
class RecorderStats:
    tasks_seen: int = 0
    tasks_selected: int = 0
    records_emitted: int = 0
    bytes_written: int = 0
    epochs: int = 0
    counter_writes: int = 0
    flag_writes: int = 0
    tcm_blocks: int = 0
    enabled_history: list[tuple[int, tuple[str, ...]]] = field(default_factory=list)

    def dump_lines(self):
        yield "# latvar-recorder-stats v1"
        for key in (
            "tasks_seen", "tasks_selected", "records_emitted", "bytes_written",
            "epochs", "counter_writes", "flag_writes", "tcm_blocks",
        ):
            yield f"{key}={getattr(self, key)}"
        for epoch, names in self.enabled_history:
            yield f"epoch\t{epoch}\t{','.join(names)}"
