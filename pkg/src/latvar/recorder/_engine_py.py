"""Pure-Python recorder engine.

Holds per-thread context metadata (block-allocated, 64K thread ids per
block), per-core context with the interrupt/fault shadow stack, and
applies machine events one at a time. `process_batch` is the same state
machine run over a columnar event batch; the compiled engine mirrors it
operation for operation.

Index conventions: catalog indices 0..7 are the kernel events
(sched_wait_len, sched_wait_count, interrupt_len, interrupt_count,
fault_len, fault_count, running_len, migration_count), counters follow.
"""

from __future__ import annotations

from ._common import EmptyStackPop, NestedTaskOnThread, UnknownCounter, UnmatchedEnd

BLOCK_SHIFT = 16
BLOCK_SIZE = 1 << BLOCK_SHIFT

I_SCHED_LEN = 0
I_SCHED_CNT = 1
I_IRQ_LEN = 2
I_IRQ_CNT = 3
I_FAULT_LEN = 4
I_FAULT_CNT = 5
I_RUN_LEN = 6
I_MIGRATIONS = 7

K_SCHED_IN = 1
K_SCHED_OUT = 2
K_IRQ_ENTER = 3
K_IRQ_EXIT = 4
K_FAULT_ENTER = 5
K_FAULT_EXIT = 6
K_COUNTER = 7
K_TASK_BEGIN = 8
K_TASK_END = 9


class _Tcm:
    __slots__ = (
        "active", "selected", "recording", "task_seq", "begin_ts", "counters",
        "enabled", "last_wait", "window_start", "cur_core", "prev_core",
    )

    def __init__(self, n_events: int):
        self.active = False
        self.selected = False
        self.recording = False
        self.task_seq = -1
        self.begin_ts = -1
        self.counters = [0] * n_events
        self.enabled = bytes(n_events)
        self.last_wait = -1
        self.window_start = -1
        self.cur_core = -1
        self.prev_core = -1


class _Ccm:
    __slots__ = ("running", "recording", "stack", "tcm")

    def __init__(self):
        self.running = -1
        self.recording = False
        self.stack: list[list[int]] = []  # [is_fault, start_ts, preempted]
        self.tcm: _Tcm | None = None


class PyEngine:
    backend = "python"

    def __init__(self, n_events: int, cores: int, log_instances: bool = False):
        self.n_events = n_events
        self.blocks: dict[int, list[_Tcm | None]] = {}
        self.cores = [_Ccm() for _ in range(cores)]
        self.log_instances = log_instances
        self.instance_log: list[tuple[int, int, int, int, int]] = []
        self.counter_writes = 0
        self.flag_writes = 0
        self.emitted: list[tuple[int, int, int, list[int], bytes]] = []

    # -- TCM store ----------------------------------------------------------

    def _tcm(self, thread: int) -> _Tcm:
        block = self.blocks.get(thread >> BLOCK_SHIFT)
        if block is None:
            block = [None] * BLOCK_SIZE
            self.blocks[thread >> BLOCK_SHIFT] = block
        slot = thread & (BLOCK_SIZE - 1)
        tcm = block[slot]
        if tcm is None:
            tcm = _Tcm(self.n_events)
            block[slot] = tcm
        return tcm

    def _peek(self, thread: int) -> _Tcm | None:
        block = self.blocks.get(thread >> BLOCK_SHIFT)
        return None if block is None else block[thread & (BLOCK_SIZE - 1)]

    def allocated_blocks(self) -> int:
        return len(self.blocks)

    # -- task API -------------------------------------------------------------

    def begin_task(self, thread: int, now: int, selected: bool,
                   mask: bytes, task_seq: int) -> None:
        tcm = self._tcm(thread)
        if tcm.active:
            raise NestedTaskOnThread(f"thread {thread} already in a task")
        if tcm.cur_core < 0:
            # first task on this thread: its TCM did not exist at sched-in
            for idx, core in enumerate(self.cores):
                if core.running == thread:
                    tcm.cur_core = idx
                    core.tcm = tcm
                    break
            else:
                raise RuntimeError(f"thread {thread} not scheduled in at task begin")
        tcm.active = True
        tcm.selected = selected
        tcm.task_seq = task_seq
        tcm.begin_ts = now
        self.flag_writes += 1
        if not selected:
            return
        core = self.cores[tcm.cur_core]
        if core.stack:
            raise RuntimeError("task begin with interrupt in flight")
        tcm.recording = True
        tcm.counters = [0] * self.n_events
        tcm.enabled = mask
        tcm.last_wait = -1
        tcm.window_start = now
        core.recording = True
        self.counter_writes += 1  # counter vector reset
        self.flag_writes += 1

    def end_task(self, thread: int, now: int):
        """Returns (task_seq, begin_ts, end_ts, counters, enabled) if the
        task was recorded, else None."""
        tcm = self._peek(thread)
        if tcm is None or not tcm.active:
            raise UnmatchedEnd(f"thread {thread} has no active task")
        tcm.active = False
        self.flag_writes += 1
        if not tcm.selected:
            return None
        core = self.cores[tcm.cur_core]
        if core.stack:
            raise RuntimeError("task end with interrupt in flight")
        tcm.counters[I_RUN_LEN] += now - tcm.window_start
        self.counter_writes += 1
        tcm.window_start = -1
        tcm.recording = False
        tcm.selected = False
        core.recording = False
        self.flag_writes += 1
        out = (tcm.task_seq, tcm.begin_ts, now, tcm.counters, tcm.enabled)
        self.emitted.append(out)
        return out

    # -- scheduler events --------------------------------------------------

    def sched_in(self, thread: int, core_idx: int, now: int) -> None:
        core = self.cores[core_idx]
        if core.running != -1:
            raise RuntimeError(f"core {core_idx} already running thread {core.running}")
        tcm = self._peek(thread)
        core.running = thread
        core.tcm = tcm
        core.recording = tcm is not None and tcm.recording
        self.flag_writes += 2
        if tcm is None:
            return
        if tcm.cur_core != -1:
            raise RuntimeError(f"thread {thread} scheduled in twice")
        tcm.cur_core = core_idx
        self.flag_writes += 1
        if tcm.recording:
            if tcm.last_wait >= 0:
                tcm.counters[I_SCHED_LEN] += now - tcm.last_wait
                tcm.counters[I_SCHED_CNT] += 1
                if tcm.prev_core != core_idx:
                    tcm.counters[I_MIGRATIONS] += 1
                tcm.last_wait = -1
                self.counter_writes += 3
            tcm.window_start = now
            self.counter_writes += 1

    def sched_out(self, thread: int, core_idx: int, now: int) -> None:
        core = self.cores[core_idx]
        if core.running != thread:
            raise RuntimeError(f"core {core_idx} not running thread {thread}")
        if core.stack:
            raise RuntimeError("context switch with interrupt in flight")
        tcm = core.tcm
        core.running = -1
        core.recording = False
        core.tcm = None
        self.flag_writes += 2
        if tcm is None:
            return
        tcm.cur_core = -1
        tcm.prev_core = core_idx
        self.flag_writes += 2
        if tcm.recording:
            tcm.last_wait = now
            tcm.counters[I_RUN_LEN] += now - tcm.window_start
            tcm.window_start = -1
            self.counter_writes += 2

    # -- interrupts / faults -------------------------------------------------

    def irq_enter(self, core_idx: int, now: int, is_fault: int = 0) -> None:
        core = self.cores[core_idx]
        if not core.stack and core.recording:
            tcm = core.tcm
            tcm.counters[I_RUN_LEN] += now - tcm.window_start
            tcm.window_start = -1
            self.counter_writes += 2
        core.stack.append([is_fault, now, 0])

    def irq_exit(self, core_idx: int, now: int) -> None:
        core = self.cores[core_idx]
        if not core.stack:
            raise EmptyStackPop(f"core {core_idx}: exit with empty shadow stack")
        is_fault, start, preempted = core.stack.pop()
        total = now - start
        actual = total - preempted
        if core.stack:
            core.stack[-1][2] += total
        if self.log_instances:
            self.instance_log.append((core_idx, is_fault, start, now, actual))
        if core.recording:
            tcm = core.tcm
            if is_fault:
                tcm.counters[I_FAULT_LEN] += actual
                tcm.counters[I_FAULT_CNT] += 1
            else:
                tcm.counters[I_IRQ_LEN] += actual
                tcm.counters[I_IRQ_CNT] += 1
            self.counter_writes += 2
            if not core.stack:
                tcm.window_start = now
                self.counter_writes += 1

    # -- counters ----------------------------------------------------------

    def counter_advance(self, core_idx: int, event_idx: int, delta: int, now: int) -> None:
        if not 8 <= event_idx < self.n_events:
            raise UnknownCounter(f"counter index {event_idx} out of range")
        core = self.cores[core_idx]
        if core.stack or not core.recording:
            return
        tcm = core.tcm
        if tcm.enabled[event_idx]:
            tcm.counters[event_idx] += delta
            self.counter_writes += 1

    # -- batch path -----------------------------------------------------------

    def process_batch(self, ts, core, kind, a, b, sel, mask_rows, masks) -> int:
        """Apply a columnar event batch. `sel[i]`/`mask_rows[i]` give the
        selection decision and epoch-mask row for the i-th TASK_BEGIN in
        stream order. Returns the number of records emitted."""
        ts_l, core_l, kind_l = ts.tolist(), core.tolist(), kind.tolist()
        a_l, b_l = a.tolist(), b.tolist()
        sel_l, rows_l = list(sel), list(mask_rows)
        mask_bytes = [bytes(masks[i]) for i in range(masks.shape[0])]
        begin_ord = 0
        emitted_before = len(self.emitted)
        for i in range(len(ts_l)):
            k = kind_l[i]
            if k == K_COUNTER:
                self.counter_advance(core_l[i], a_l[i], b_l[i], ts_l[i])
            elif k == K_IRQ_ENTER:
                self.irq_enter(core_l[i], ts_l[i], 0)
            elif k == K_IRQ_EXIT or k == K_FAULT_EXIT:
                self.irq_exit(core_l[i], ts_l[i])
            elif k == K_FAULT_ENTER:
                self.irq_enter(core_l[i], ts_l[i], 1)
            elif k == K_SCHED_IN:
                self.sched_in(a_l[i], core_l[i], ts_l[i])
            elif k == K_SCHED_OUT:
                self.sched_out(a_l[i], core_l[i], ts_l[i])
            elif k == K_TASK_BEGIN:
                self.begin_task(b_l[i], ts_l[i], bool(sel_l[begin_ord]),
                                mask_bytes[rows_l[begin_ord]], a_l[i])
                begin_ord += 1
            elif k == K_TASK_END:
                self.end_task(b_l[i], ts_l[i])
        return len(self.emitted) - emitted_before

    def take_emitted(self):
        out = self.emitted
        self.emitted = []
        return out
