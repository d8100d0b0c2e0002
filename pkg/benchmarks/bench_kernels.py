#!/usr/bin/env python3
"""Benchmark the jit and numpy variants of the simulator's hot kernels.

Expands a large decode-heavy workload (llama-2-13b, tp=8 x pp=4) with both
backends, verifies the arrays are identical, and reports the best per-call
wall time of each. Kernel selection inside the library is untouched; both
implementations are fetched explicitly.
"""

import argparse
import time

import numpy as np

from commscope import ParallelismLayout, preset
from commscope._kernels import COLUMNS, available_backends, get_kernels
from commscope.schedule import _pass_slots


def build_workload(prefill_len: int, decode_len: int):
    arch = preset("llama-2-13b")
    layout = ParallelismLayout(tp=8, pp=4)
    slots = _pass_slots(arch, layout)
    return (*slots, np.int64(arch.vocab_shard(layout.tp)),
            np.int64(prefill_len), np.int64(decode_len))


def best_call_time(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--prefill", type=int, default=512)
    parser.add_argument("--decode", type=int, default=2048)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()

    backends = available_backends()
    if "numba" not in backends:
        print("numba is not installed; nothing to compare against.")
        return 1

    expand_args = build_workload(args.prefill, args.decode)
    numpy_expand, numpy_costs = get_kernels("numpy")
    numba_expand, numba_costs = get_kernels("numba")

    reference = numpy_expand(*expand_args)
    jitted = numba_expand(*expand_args)  # first call compiles or loads the cache
    for name, ref, jit in zip(COLUMNS, reference, jitted):
        np.testing.assert_array_equal(ref, jit, err_msg=name)
    n_events = reference[0].shape[0]

    step = reference[COLUMNS.index("step")]
    cost = reference[COLUMNS.index("bytes_on_wire")].astype(np.float64)
    n_passes = args.decode
    cost_args = (step, cost, n_passes)
    np.testing.assert_allclose(numpy_costs(*cost_args), numba_costs(*cost_args))

    rows = [
        ("expand", best_call_time(numpy_expand, expand_args, args.repeats),
         best_call_time(numba_expand, expand_args, args.repeats)),
        ("pass_costs", best_call_time(numpy_costs, cost_args, args.repeats),
         best_call_time(numba_costs, cost_args, args.repeats)),
    ]

    print(f"workload: llama-2-13b, tp=8, pp=4, prefill={args.prefill}, "
          f"decode={args.decode} -> {n_events} events")
    print(f"best of {args.repeats} calls, outputs verified identical\n")
    print(f"{'kernel':<12} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, t_numpy, t_numba in rows:
        print(f"{name:<12} {t_numpy * 1e3:>9.3f} ms {t_numba * 1e3:>9.3f} ms "
              f"{t_numpy / t_numba:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
