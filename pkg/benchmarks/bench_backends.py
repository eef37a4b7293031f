#!/usr/bin/env python3
"""Benchmark the recorder's compiled engine against the pure-Python
fallback on identical event streams, and check they emit identical
records while timing them.

    python3 benchmarks/bench_backends.py [--instances N] [--cores N] [--repeat R]
"""

import argparse
import time

from latvar.events import default_catalog
from latvar.recorder import Recorder, RecorderConfig, available_backends
from latvar.sim import nested_preemption_fuzz


def canon(records):
    return [(r.task_id, r.begin_ts, r.end_ts, sorted(r.values.items())) for r in records]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=400_000)
    ap.add_argument("--cores", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    catalog = default_catalog()
    print(f"generating stream: {args.instances} nested instances on {args.cores} cores ...")
    t0 = time.perf_counter()
    batch = nested_preemption_fuzz(
        seed=args.seed,
        depth_max=5,
        n_instances=args.instances,
        cores=args.cores,
        tasks_per_core=64,
        counter_idxs=(8, 9, 10, 12, 15),
    )
    print(f"  {len(batch)} events in {time.perf_counter() - t0:.2f}s")

    results = {}
    outputs = {}
    for backend in available_backends():
        best = float("inf")
        for _ in range(args.repeat):
            recorder = Recorder(RecorderConfig(catalog=catalog), cores=args.cores,
                                backend=backend)
            t0 = time.perf_counter()
            records = recorder.process(batch)
            best = min(best, time.perf_counter() - t0)
        results[backend] = best
        outputs[backend] = canon(records)
        rate = len(batch) / best
        print(f"{backend:>8}: {best * 1e3:9.1f} ms   {rate / 1e6:7.2f} M events/s   "
              f"({len(records)} records)")

    if len(outputs) == 2:
        same = outputs["python"] == outputs["cython"]
        print(f"outputs identical: {same}")
        speedup = results["python"] / results["cython"]
        print(f"speedup (cython vs python): {speedup:.1f}x")
        return 0 if same else 1
    print("only one backend available; no comparison")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
