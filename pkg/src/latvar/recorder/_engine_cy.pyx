# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled recorder engine: same state machine as `_engine_py`, with
C-level context blocks and shadow stacks for fast batch processing."""

import numpy as np

cimport numpy as cnp

from ._common import EmptyStackPop, NestedTaskOnThread, UnknownCounter, UnmatchedEnd

cnp.import_array()

cdef enum:
    BLOCK_SHIFT = 16
    BLOCK_SIZE = 65536
    MAX_DEPTH = 256

cdef enum:
    I_SCHED_LEN = 0
    I_SCHED_CNT = 1
    I_IRQ_LEN = 2
    I_IRQ_CNT = 3
    I_FAULT_LEN = 4
    I_FAULT_CNT = 5
    I_RUN_LEN = 6
    I_MIGRATIONS = 7

cdef enum:
    K_SCHED_IN = 1
    K_SCHED_OUT = 2
    K_IRQ_ENTER = 3
    K_IRQ_EXIT = 4
    K_FAULT_ENTER = 5
    K_FAULT_EXIT = 6
    K_COUNTER = 7
    K_TASK_BEGIN = 8
    K_TASK_END = 9


cdef class _Block:
    cdef cnp.int64_t[:, ::1] counters
    cdef cnp.uint8_t[:, ::1] enabled
    cdef cnp.int64_t[::1] begin_ts
    cdef cnp.int64_t[::1] last_wait
    cdef cnp.int64_t[::1] window_start
    cdef cnp.int64_t[::1] task_seq
    cdef cnp.int32_t[::1] cur_core
    cdef cnp.int32_t[::1] prev_core
    cdef cnp.uint8_t[::1] active
    cdef cnp.uint8_t[::1] selected
    cdef cnp.uint8_t[::1] recording
    cdef cnp.uint8_t[::1] exists

    def __cinit__(self, int n_events):
        self.counters = np.zeros((BLOCK_SIZE, n_events), dtype=np.int64)
        self.enabled = np.zeros((BLOCK_SIZE, n_events), dtype=np.uint8)
        self.begin_ts = np.zeros(BLOCK_SIZE, dtype=np.int64)
        self.last_wait = np.zeros(BLOCK_SIZE, dtype=np.int64)
        self.window_start = np.zeros(BLOCK_SIZE, dtype=np.int64)
        self.task_seq = np.zeros(BLOCK_SIZE, dtype=np.int64)
        self.cur_core = np.zeros(BLOCK_SIZE, dtype=np.int32)
        self.prev_core = np.zeros(BLOCK_SIZE, dtype=np.int32)
        self.active = np.zeros(BLOCK_SIZE, dtype=np.uint8)
        self.selected = np.zeros(BLOCK_SIZE, dtype=np.uint8)
        self.recording = np.zeros(BLOCK_SIZE, dtype=np.uint8)
        self.exists = np.zeros(BLOCK_SIZE, dtype=np.uint8)

    cdef inline void init_slot(self, long slot):
        if not self.exists[slot]:
            self.exists[slot] = 1
            self.cur_core[slot] = -1
            self.prev_core[slot] = -1
            self.last_wait[slot] = -1
            self.window_start[slot] = -1
            self.task_seq[slot] = -1


cdef class CyEngine:
    cdef readonly int n_events
    cdef int n_cores
    cdef dict blocks
    cdef cnp.int64_t[:, :, ::1] stack
    cdef cnp.int32_t[::1] depth
    cdef cnp.int32_t[::1] running
    cdef cnp.uint8_t[::1] core_recording
    cdef list core_block
    cdef cnp.int32_t[::1] core_slot
    cdef public long counter_writes
    cdef public long flag_writes
    cdef public list emitted
    cdef public list instance_log
    cdef public bint log_instances

    def __cinit__(self, int n_events, int cores, bint log_instances=False):
        self.n_events = n_events
        self.n_cores = cores
        self.blocks = {}
        self.stack = np.zeros((cores, MAX_DEPTH, 3), dtype=np.int64)
        self.depth = np.zeros(cores, dtype=np.int32)
        self.running = np.full(cores, -1, dtype=np.int32)
        self.core_recording = np.zeros(cores, dtype=np.uint8)
        self.core_block = [None] * cores
        self.core_slot = np.zeros(cores, dtype=np.int32)
        self.counter_writes = 0
        self.flag_writes = 0
        self.emitted = []
        self.instance_log = []
        self.log_instances = log_instances

    @property
    def backend(self):
        return "cython"

    def allocated_blocks(self):
        return len(self.blocks)

    cdef _Block _get_block(self, long thread):
        cdef long bidx = thread >> BLOCK_SHIFT
        blk = self.blocks.get(bidx)
        if blk is None:
            blk = _Block(self.n_events)
            self.blocks[bidx] = blk
        return <_Block>blk

    cdef _Block _peek_block(self, long thread):
        blk = self.blocks.get(thread >> BLOCK_SHIFT)
        if blk is None:
            return None
        return <_Block>blk

    # -- task API ------------------------------------------------------------

    cdef int _begin(self, long thread, long now, bint selected,
                    const unsigned char[:] mask, long task_seq) except -1:
        cdef _Block blk = self._get_block(thread)
        cdef long slot = thread & (BLOCK_SIZE - 1)
        cdef int c, j
        blk.init_slot(slot)
        if blk.active[slot]:
            raise NestedTaskOnThread(f"thread {thread} already in a task")
        if blk.cur_core[slot] < 0:
            for c in range(self.n_cores):
                if self.running[c] == thread:
                    blk.cur_core[slot] = c
                    self.core_block[c] = blk
                    self.core_slot[c] = <int>slot
                    break
            else:
                raise RuntimeError(f"thread {thread} not scheduled in at task begin")
        blk.active[slot] = 1
        blk.selected[slot] = 1 if selected else 0
        blk.task_seq[slot] = task_seq
        blk.begin_ts[slot] = now
        self.flag_writes += 1
        if not selected:
            return 0
        c = blk.cur_core[slot]
        if self.depth[c] != 0:
            raise RuntimeError("task begin with interrupt in flight")
        blk.recording[slot] = 1
        for j in range(self.n_events):
            blk.counters[slot, j] = 0
            blk.enabled[slot, j] = mask[j]
        blk.last_wait[slot] = -1
        blk.window_start[slot] = now
        self.core_recording[c] = 1
        self.counter_writes += 1
        self.flag_writes += 1
        return 0

    cpdef object begin_task(self, long thread, long now, bint selected,
                            bytes mask, long task_seq):
        cdef const unsigned char[:] m = mask
        self._begin(thread, now, selected, m, task_seq)
        return None

    cpdef object end_task(self, long thread, long now):
        cdef _Block blk = self._peek_block(thread)
        cdef long slot = thread & (BLOCK_SIZE - 1)
        cdef int c
        if blk is None or not blk.exists[slot] or not blk.active[slot]:
            raise UnmatchedEnd(f"thread {thread} has no active task")
        blk.active[slot] = 0
        self.flag_writes += 1
        if not blk.selected[slot]:
            return None
        c = blk.cur_core[slot]
        if self.depth[c] != 0:
            raise RuntimeError("task end with interrupt in flight")
        blk.counters[slot, I_RUN_LEN] += now - blk.window_start[slot]
        self.counter_writes += 1
        blk.window_start[slot] = -1
        blk.recording[slot] = 0
        blk.selected[slot] = 0
        self.core_recording[c] = 0
        self.flag_writes += 1
        out = (
            int(blk.task_seq[slot]),
            int(blk.begin_ts[slot]),
            now,
            np.asarray(blk.counters[slot]).copy(),
            bytes(np.asarray(blk.enabled[slot])),
        )
        self.emitted.append(out)
        return out

    # -- scheduler events ------------------------------------------------------

    cpdef int sched_in(self, long thread, int core, long now) except -1:
        cdef _Block blk
        cdef long slot = thread & (BLOCK_SIZE - 1)
        if self.running[core] != -1:
            raise RuntimeError(f"core {core} already running thread {self.running[core]}")
        self.running[core] = <int>thread
        blk = self._peek_block(thread)
        if blk is not None and not blk.exists[slot]:
            blk = None
        self.core_block[core] = blk
        self.core_slot[core] = <int>slot
        self.core_recording[core] = 0 if blk is None else blk.recording[slot]
        self.flag_writes += 2
        if blk is None:
            return 0
        if blk.cur_core[slot] != -1:
            raise RuntimeError(f"thread {thread} scheduled in twice")
        blk.cur_core[slot] = core
        self.flag_writes += 1
        if blk.recording[slot]:
            if blk.last_wait[slot] >= 0:
                blk.counters[slot, I_SCHED_LEN] += now - blk.last_wait[slot]
                blk.counters[slot, I_SCHED_CNT] += 1
                if blk.prev_core[slot] != core:
                    blk.counters[slot, I_MIGRATIONS] += 1
                blk.last_wait[slot] = -1
                self.counter_writes += 3
            blk.window_start[slot] = now
            self.counter_writes += 1
        return 0

    cpdef int sched_out(self, long thread, int core, long now) except -1:
        cdef _Block blk
        cdef long slot
        if self.running[core] != thread:
            raise RuntimeError(f"core {core} not running thread {thread}")
        if self.depth[core] != 0:
            raise RuntimeError("context switch with interrupt in flight")
        blk = <_Block>self.core_block[core]
        slot = self.core_slot[core]
        self.running[core] = -1
        self.core_recording[core] = 0
        self.core_block[core] = None
        self.flag_writes += 2
        if blk is None:
            return 0
        blk.cur_core[slot] = -1
        blk.prev_core[slot] = core
        self.flag_writes += 2
        if blk.recording[slot]:
            blk.last_wait[slot] = now
            blk.counters[slot, I_RUN_LEN] += now - blk.window_start[slot]
            blk.window_start[slot] = -1
            self.counter_writes += 2
        return 0

    # -- interrupts / faults -----------------------------------------------------

    cpdef int irq_enter(self, int core, long now, int is_fault=0) except -1:
        cdef _Block blk
        cdef long slot
        cdef int d = self.depth[core]
        if d == 0 and self.core_recording[core]:
            blk = <_Block>self.core_block[core]
            slot = self.core_slot[core]
            blk.counters[slot, I_RUN_LEN] += now - blk.window_start[slot]
            blk.window_start[slot] = -1
            self.counter_writes += 2
        if d >= MAX_DEPTH:
            raise RuntimeError("shadow stack overflow")
        self.stack[core, d, 0] = is_fault
        self.stack[core, d, 1] = now
        self.stack[core, d, 2] = 0
        self.depth[core] = d + 1
        return 0

    cpdef int irq_exit(self, int core, long now) except -1:
        cdef _Block blk
        cdef long slot, start, preempted, total, actual
        cdef int is_fault
        cdef int d = self.depth[core]
        if d == 0:
            raise EmptyStackPop(f"core {core}: exit with empty shadow stack")
        d -= 1
        is_fault = <int>self.stack[core, d, 0]
        start = self.stack[core, d, 1]
        preempted = self.stack[core, d, 2]
        total = now - start
        actual = total - preempted
        self.depth[core] = d
        if d > 0:
            self.stack[core, d - 1, 2] += total
        if self.log_instances:
            self.instance_log.append((core, is_fault, int(start), now, int(actual)))
        if self.core_recording[core]:
            blk = <_Block>self.core_block[core]
            slot = self.core_slot[core]
            if is_fault:
                blk.counters[slot, I_FAULT_LEN] += actual
                blk.counters[slot, I_FAULT_CNT] += 1
            else:
                blk.counters[slot, I_IRQ_LEN] += actual
                blk.counters[slot, I_IRQ_CNT] += 1
            self.counter_writes += 2
            if d == 0:
                blk.window_start[slot] = now
                self.counter_writes += 1
        return 0

    # -- counters ------------------------------------------------------------

    cpdef int counter_advance(self, int core, long event_idx, long delta, long now) except -1:
        cdef _Block blk
        cdef long slot
        if event_idx < 8 or event_idx >= self.n_events:
            raise UnknownCounter(f"counter index {event_idx} out of range")
        if self.depth[core] != 0 or not self.core_recording[core]:
            return 0
        blk = <_Block>self.core_block[core]
        slot = self.core_slot[core]
        if blk.enabled[slot, event_idx]:
            blk.counters[slot, event_idx] += delta
            self.counter_writes += 1
        return 0

    # -- batch path -----------------------------------------------------------

    def process_batch(self, ts, core, kind, a, b, sel, mask_rows, masks):
        cdef cnp.int64_t[::1] ts_v = ts
        cdef cnp.int32_t[::1] core_v = core
        cdef cnp.int8_t[::1] kind_v = kind
        cdef cnp.int64_t[::1] a_v = a
        cdef cnp.int64_t[::1] b_v = b
        cdef cnp.uint8_t[::1] sel_v = sel
        cdef cnp.int64_t[::1] rows_v = mask_rows
        cdef cnp.uint8_t[:, ::1] masks_v = masks
        cdef Py_ssize_t i, n = ts_v.shape[0]
        cdef long begin_ord = 0
        cdef int k
        cdef Py_ssize_t emitted_before = len(self.emitted)
        for i in range(n):
            k = kind_v[i]
            if k == K_COUNTER:
                self.counter_advance(core_v[i], a_v[i], b_v[i], ts_v[i])
            elif k == K_IRQ_ENTER:
                self.irq_enter(core_v[i], ts_v[i], 0)
            elif k == K_IRQ_EXIT or k == K_FAULT_EXIT:
                self.irq_exit(core_v[i], ts_v[i])
            elif k == K_FAULT_ENTER:
                self.irq_enter(core_v[i], ts_v[i], 1)
            elif k == K_SCHED_IN:
                self.sched_in(a_v[i], core_v[i], ts_v[i])
            elif k == K_SCHED_OUT:
                self.sched_out(a_v[i], core_v[i], ts_v[i])
            elif k == K_TASK_BEGIN:
                self._begin(b_v[i], ts_v[i], sel_v[begin_ord] != 0,
                            masks_v[rows_v[begin_ord]], a_v[i])
                begin_ord += 1
            elif k == K_TASK_END:
                self.end_task(b_v[i], ts_v[i])
        return len(self.emitted) - emitted_before

    def take_emitted(self):
        out = self.emitted
        self.emitted = []
        return out
