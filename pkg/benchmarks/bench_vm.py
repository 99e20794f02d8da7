"""Throughput of the program VM backends on random CGP genomes.

    python benchmarks/bench_vm.py [--genomes 50] [--rows 2000] [--repeat 3]

Compares the compiled VM, the pure-Python VM, the per-row interpreter
(``run_program``) and, for straight-line programs, numpy column evaluation.
Outputs are checked for equality before anything is timed.
"""
import argparse
import time

import numpy as np

from asos.symbolic import vm
from asos.symbolic.cgp import decode_genome, random_genome, run_program
from asos.symbolic.evolution import EvolutionConfig


def programs(n, seed):
    rng = np.random.default_rng(seed)
    funcs = tuple(c for c in EvolutionConfig().functions if c not in vm.UNSUPPORTED)
    out = []
    while len(out) < n:
        try:
            p = decode_genome(random_genome(2, 1, 1, 20, 20, funcs, rng))
        except Exception:
            continue
        if vm.supports(p):
            out.append((p, vm.compile_program(p)))
    return out


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--genomes", type=int, default=50)
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--interp-rows", type=int, default=200,
                    help="rows for the slow per-row interpreter")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    progs = programs(args.genomes, args.seed)
    X = 50 + 100 * np.random.default_rng(args.seed + 1).random((args.rows, 2))
    straight = [cp for _, cp in progs if cp.straight_line]

    if vm.HAVE_NATIVE:
        for _, cp in progs:
            a = vm.run_batch(cp, X, backend="native")
            b = vm.run_batch(cp, X, backend="python")
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    rows = []
    n_eval = len(progs) * args.rows
    if vm.HAVE_NATIVE:
        t = best_of(lambda: [vm.run_batch(cp, X, backend="native") for _, cp in progs], args.repeat)
        rows.append(("native VM", t, n_eval))
    t = best_of(lambda: [vm.run_batch(cp, X, backend="python") for _, cp in progs], args.repeat)
    rows.append(("pure-Python VM", t, n_eval))
    if straight:
        t = best_of(lambda: [vm.run_columns(cp, X) for cp in straight], args.repeat)
        rows.append(("numpy columns (straight-line only)", t, len(straight) * args.rows))
    Xi = X[:args.interp_rows]
    t = best_of(lambda: [[run_program(p, list(r)) for r in Xi] for p, _ in progs], 1)
    rows.append(("run_program interpreter", t, len(progs) * len(Xi)))

    print(f"{len(progs)} programs ({len(straight)} straight-line), {args.rows} rows each")
    print(f"{'backend':40s} {'seconds':>10s} {'rows/s':>14s}")
    for name, t, n in rows:
        print(f"{name:40s} {t:10.4f} {n / t:14.0f}")
    if not vm.HAVE_NATIVE:
        print("compiled VM not available (not built, or ASOS_PURE_PYTHON=1)")


if __name__ == "__main__":
    main()
