"""Compiled vs pure-Python event loop on the same lowered program.

    python3 benchmarks/bench_kernel.py [--stages 8] [--batch 256] [--k 4] [--b 1] [--repeats 5]

Lowering (graph -> arrays) is done once and excluded; only the kernel is timed.
Outputs are checked to be bit-identical before timings are reported.
"""
import argparse
import sys
import time

import numpy as np

from pipesched import ModelSpec, PlanConfig, build_task_graph, plan_kfkb
from pipesched.kernel import run_compiled, run_python
from pipesched.model import pipeline_links
from pipesched.network import preemption_trace
from pipesched.simulator import lower


def best_of(fn, prog, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn(prog)
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--stages", type=int, default=8)
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--b", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    S = args.stages
    model = ModelSpec.uniform(
        S,
        args.batch,
        forward_per_sample=1.0,
        backward_per_sample=2.0,
        activation_bytes_per_sample=1.0,
        output_bytes_per_sample_fwd=0.5,
        output_bytes_per_sample_bwd=0.5,
    )
    traces = {
        link: preemption_trace(link, 1.0, seed=7, horizon=5000.0, period=2.0, low=0.1, high=0.9, p_preempt=0.5)
        for link in pipeline_links(S)
    }
    config = PlanConfig(args.k, args.b, args.batch // args.b)
    plan = plan_kfkb(build_task_graph(model, config), args.k)
    prog = lower(plan, model, traces)
    print(f"S={S} M={config.micro_batches} k={args.k} b={args.b}: {len(prog.op_ids)} compute ops")

    t_py, out_py = best_of(run_python, prog, args.repeats)
    print(f"python  {t_py * 1e3:9.2f} ms")
    compiled = run_compiled()
    if compiled is None:
        print("cython  not built (reinstall without PIPESCHED_NO_EXT=1)")
        return 0
    t_cy, out_cy = best_of(compiled, prog, args.repeats)
    same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(out_py[1:], out_cy[1:]))
    same = same and out_py[0] == out_cy[0]
    print(f"cython  {t_cy * 1e3:9.2f} ms")
    print(f"speedup {t_py / t_cy:9.1f}x  identical={same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
