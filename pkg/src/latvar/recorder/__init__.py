"""Online recorder: the AppTask API, cumulative kernel-event lengths via a
per-core shadow stack, counter attribution that excludes interrupt time,
epoch-multiplexed counter selection, and selective task recording.

Two engines implement the identical state machine: a compiled extension
(built from `_engine_cy.pyx`) and a pure-Python fallback. The compiled
one is chosen at import when available; set LATVAR_PURE_PYTHON=1 to force
the fallback. Policy (which tasks are selected, which counters an epoch
enables) lives here in the wrapper and is shared by both engines.
"""

from __future__ import annotations

import os

import numpy as np

from ..events import CatalogError, EventCatalog
from ..sim.machine import EvKind, EventBatch
from ..trace import TaskRecord
from ._common import (
    EmptyStackPop,
    NestedTaskOnThread,
    RecorderConfig,
    RecorderStats,
    UnknownCounter,
    UnmatchedEnd,
    epoch_enabled_mask,
    task_selected,
)
from . import _engine_py

try:
    from . import _engine_cy
except ImportError:  # extension not built; pure Python still works
    _engine_cy = None

__all__ = [
    "EmptyStackPop",
    "NestedTaskOnThread",
    "Recorder",
    "RecorderConfig",
    "RecorderStats",
    "UnknownCounter",
    "UnmatchedEnd",
    "available_backends",
    "default_backend",
]


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _engine_cy is not None else [])


def default_backend() -> str:
    if os.environ.get("LATVAR_PURE_PYTHON"):
        return "python"
    return "cython" if _engine_cy is not None else "python"


class Recorder:
    """Consumes machine events and emits one TaskRecord per selected task.

    Per-event entry points mirror the kernel hooks (`on_sched_in`,
    `on_irq_enter`, ...); `process()` applies a whole event batch through
    the engine's fast path with identical semantics.
    """

    def __init__(self, config: RecorderConfig, cores: int = 8, backend: str = "auto"):
        config.validate()
        self.config = config
        self.catalog: EventCatalog = config.catalog
        if backend == "auto":
            backend = default_backend()
        if backend == "cython":
            if _engine_cy is None:
                raise RuntimeError("compiled recorder backend is not available")
            self.engine = _engine_cy.CyEngine(len(self.catalog), cores, config.log_instances)
        elif backend == "python":
            self.engine = _engine_py.PyEngine(len(self.catalog), cores, config.log_instances)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self._names = [e.event.name for e in self.catalog.entries]
        self._task_counter = 0
        self._tasks_selected = 0
        self._records_emitted = 0
        self._masks: dict[int, np.ndarray] = {}
        self._mask_bytes: dict[int, bytes] = {}
        self._pending: dict[int, str] = {}
        self._max_epoch = -1

    # -- epoch / selection policy -------------------------------------------

    def _mask(self, epoch: int) -> np.ndarray:
        mask = self._masks.get(epoch)
        if mask is None:
            mask = epoch_enabled_mask(self.config.seed, epoch, self.catalog)
            self._masks[epoch] = mask
            self._mask_bytes[epoch] = bytes(mask)
        return mask

    def _mask_b(self, epoch: int) -> bytes:
        self._mask(epoch)
        return self._mask_bytes[epoch]

    def _note_epoch(self, epoch: int) -> None:
        if epoch > self._max_epoch:
            self._max_epoch = epoch

    def epoch_tick(self, now: int) -> None:
        """Advance the epoch clock; the enabled set changes only between
        epochs and in-flight tasks keep their begin-epoch selection."""
        self._note_epoch(now // self.config.epoch_length)

    def enabled_events(self, epoch: int) -> list[str]:
        mask = self._mask(epoch)
        return [self._names[i] for i in range(len(mask)) if mask[i]]

    # -- AppTask API -----------------------------------------------------------

    def begin_app_task(self, thread: int, task_id: str, now: int) -> None:
        if thread in self._pending:
            raise NestedTaskOnThread(f"thread {thread} already in task {self._pending[thread]!r}")
        epoch = now // self.config.epoch_length
        self._note_epoch(epoch)
        sel = task_selected(self.config.seed, self._task_counter, self.config.selection_rate)
        self._task_counter += 1
        if sel:
            self._tasks_selected += 1
        self.engine.begin_task(thread, now, sel, self._mask_b(epoch), -1)
        self._pending[thread] = task_id

    def end_app_task(self, thread: int, task_id: str, now: int) -> TaskRecord | None:
        want = self._pending.get(thread)
        if want is None or want != task_id:
            raise UnmatchedEnd(f"thread {thread}: end of {task_id!r} but active is {want!r}")
        out = self.engine.end_task(thread, now)
        del self._pending[thread]
        self.engine.take_emitted()
        if out is None:
            return None
        self._records_emitted += 1
        return self._build_record(task_id, out)

    # -- kernel event hooks ------------------------------------------------------

    def on_sched_in(self, thread: int, core: int, now: int) -> None:
        self.engine.sched_in(thread, core, now)

    def on_sched_out(self, thread: int, core: int, now: int) -> None:
        self.engine.sched_out(thread, core, now)

    def on_irq_enter(self, core: int, now: int, fault: bool = False) -> None:
        self.engine.irq_enter(core, now, 1 if fault else 0)

    def on_irq_exit(self, core: int, now: int) -> None:
        self.engine.irq_exit(core, now)

    def on_counter_advance(self, core: int, event: str | int, delta: int, now: int) -> None:
        if isinstance(event, str):
            try:
                event = self.catalog.index(event)
            except CatalogError:
                raise UnknownCounter(f"unknown counter {event!r}") from None
        self.engine.counter_advance(core, event, delta, now)

    # -- batch path -----------------------------------------------------------------

    def process(self, batch: EventBatch) -> list[TaskRecord]:
        """Apply a full event batch; returns the records it emitted.

        Task ids are resolved against this batch's task table, so feed
        complete batches (a task must begin and end within the batches of
        one run).
        """
        n_events = len(self.catalog)
        begins = np.flatnonzero(batch.kind == int(EvKind.TASK_BEGIN))
        n_begins = len(begins)
        sel = np.zeros(n_begins, dtype=np.uint8)
        rows = np.zeros(n_begins, dtype=np.int64)
        row_of: dict[int, int] = {}
        mask_list: list[np.ndarray] = []
        epoch_len = self.config.epoch_length
        b_epochs = (batch.ts[begins] // epoch_len).tolist()
        for i, epoch in enumerate(b_epochs):
            self._note_epoch(epoch)
            row = row_of.get(epoch)
            if row is None:
                row = len(mask_list)
                row_of[epoch] = row
                mask_list.append(self._mask(epoch))
            rows[i] = row
            if task_selected(self.config.seed, self._task_counter, self.config.selection_rate):
                sel[i] = 1
                self._tasks_selected += 1
            self._task_counter += 1
        masks = np.stack(mask_list) if mask_list else np.zeros((1, n_events), dtype=np.uint8)
        self.engine.process_batch(
            batch.ts, batch.core, batch.kind, batch.a, batch.b, sel, rows, masks
        )
        if len(batch):
            self._note_epoch(int(batch.ts[-1]) // epoch_len)
        records = []
        for out in self.engine.take_emitted():
            seq = out[0]
            task_id = batch.task_ids[seq] if 0 <= seq < len(batch.task_ids) else f"task{seq}"
            records.append(self._build_record(task_id, out))
        self._records_emitted += len(records)
        return records

    # -- output ------------------------------------------------------------------

    def _build_record(self, task_id: str, out) -> TaskRecord:
        _, begin, end, counters, enabled = out
        values = {
            name: int(counters[i])
            for i, name in enumerate(self._names)
            if enabled[i]
        }
        return TaskRecord(task_id, int(begin), int(end), values)

    @property
    def instance_log(self) -> list[tuple[int, int, int, int, int]]:
        """(core, is_fault, start, end, actual length) per finished instance;
        populated when config.log_instances is set."""
        return self.engine.instance_log

    def stats(self, bytes_written: int = 0) -> RecorderStats:
        history = []
        for epoch in range(self._max_epoch + 1):
            mask = self._mask(epoch)
            names = tuple(
                self._names[i] for i in range(8, len(mask)) if mask[i]
            )
            history.append((epoch, names))
        return RecorderStats(
            tasks_seen=self._task_counter,
            tasks_selected=self._tasks_selected,
            records_emitted=self._records_emitted,
            bytes_written=bytes_written,
            epochs=self._max_epoch + 1,
            counter_writes=self.engine.counter_writes,
            flag_writes=self.engine.flag_writes,
            tcm_blocks=self.engine.allocated_blocks(),
            enabled_history=history,
        )
