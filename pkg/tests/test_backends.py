"""The compiled and pure-Python recorder engines must be bit-for-bit
interchangeable: same records, same stats counters, same errors."""

import pytest

from latvar.recorder import Recorder, RecorderConfig, available_backends
from latvar.sim import nested_preemption_fuzz, run
from latvar.sim.scenarios import loopbench

pytestmark = pytest.mark.skipif(
    "cython" not in available_backends(), reason="compiled backend not built"
)


def canon(records):
    return [(r.task_id, r.begin_ts, r.end_ts, sorted(r.values.items())) for r in records]


def pair(catalog, batch, **cfg):
    outs = {}
    for backend in ("python", "cython"):
        rec = Recorder(
            RecorderConfig(catalog=catalog, **cfg), cores=8, backend=backend
        )
        records = rec.process(batch)
        outs[backend] = (canon(records), rec.stats(), rec.instance_log)
    return outs["python"], outs["cython"]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_fuzz_streams_identical(catalog, seed):
    batch = nested_preemption_fuzz(
        seed=seed, depth_max=5, n_instances=2_000, cores=4, counter_idxs=(8, 11, 15)
    )
    (py_recs, py_stats, py_log), (cy_recs, cy_stats, cy_log) = pair(
        catalog, batch, selection_rate=0.7, seed=seed, log_instances=True
    )
    assert py_recs == cy_recs
    assert py_log == cy_log
    assert py_stats.counter_writes == cy_stats.counter_writes
    assert py_stats.flag_writes == cy_stats.flag_writes
    assert py_stats.records_emitted == cy_stats.records_emitted
    assert py_stats.tcm_blocks == cy_stats.tcm_blocks


def test_simulated_scenario_identical(catalog):
    sc = loopbench(threads=6, cores=3)
    sc.machine.seed = 99
    batch, _ = run(sc.machine, sc, 40_000_000, catalog)
    (py_recs, py_stats, _), (cy_recs, cy_stats, _) = pair(
        catalog, batch, selection_rate=0.25, seed=5
    )
    assert py_recs == cy_recs
    assert py_stats.counter_writes == cy_stats.counter_writes


def test_errors_match(catalog):
    from latvar.recorder import EmptyStackPop, NestedTaskOnThread

    for backend in ("python", "cython"):
        r = Recorder(RecorderConfig(catalog=catalog), cores=1, backend=backend)
        with pytest.raises(EmptyStackPop):
            r.on_irq_exit(0, 10)
        r.on_sched_in(0, 0, 11)
        r.begin_app_task(0, "x", 15)
        with pytest.raises(NestedTaskOnThread):
            r.begin_app_task(0, "y", 20)
