"""Compare the compiled and pure-NumPy kernel backends.

    python benchmarks/bench_kernels.py [--m 20000] [--n 8000] [--density 5e-4]

Prints per-call times for matvec, rmatvec and the fused normal product,
plus one FMLSMR solve per backend. Both backends must produce bitwise
identical results; the script checks that too.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

import fmlsmr
from fmlsmr import _backend


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=20000)
    ap.add_argument("--n", type=int, default=8000)
    ap.add_argument("--density", type=float, default=5e-4)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    S = sp.random(args.m, args.n, density=args.density, format="csr", random_state=rng)
    S.sort_indices()
    A = fmlsmr.SparseMatrix(args.m, args.n, S.indptr.astype(np.int64),
                            S.indices.astype(np.int64), S.data.copy())
    x = rng.standard_normal(args.n)
    y = rng.standard_normal(args.m)
    b = rng.random(args.m)
    print(f"A: {args.m} x {args.n}, nnz {A.nnz}")

    backends = _backend.available_backends()
    results = {}
    for name, mod in backends.items():
        kw = {"row_ids": A._row_ids} if name == "python" else {}
        out_m, out_n, work = np.empty(args.m), np.empty(args.n), np.empty(args.m)
        ops = {
            "matvec": lambda: mod.csr_matvec(A.row_offsets, A.col_indices, A.values, x, out_m),
            "rmatvec": lambda: mod.csr_rmatvec(A.row_offsets, A.col_indices, A.values, y, out_n, **kw),
            "normal_matvec": lambda: mod.csr_normal_matvec(
                A.row_offsets, A.col_indices, A.values, x, 0.5, work, out_n, **kw),
        }
        times = {op: timeit(fn, args.repeat) for op, fn in ops.items()}
        ops["matvec"]()
        mv = out_m.copy()
        ops["rmatvec"]()
        rmv = out_n.copy()
        results[name] = (times, mv, rmv)

    print(f"{'kernel':<15}" + "".join(f"{n:>14}" for n in results))
    for op in ("matvec", "rmatvec", "normal_matvec"):
        row = "".join(f"{results[n][0][op] * 1e3:>12.3f}ms" for n in results)
        print(f"{op:<15}{row}")
    if len(results) == 2:
        (_, mv_c, rmv_c), (_, mv_p, rmv_p) = results["cython"], results["python"]
        same = np.array_equal(mv_c, mv_p) and np.array_equal(rmv_c, rmv_p)
        print(f"bitwise identical: {same}")

    cfg = fmlsmr.OuterConfig(tol=1e-10, max_iterations=500)
    for name in backends:
        with _backend.use_backend(name):
            t = time.perf_counter()
            rep = fmlsmr.fmlsmr_solve(A, b, cfg)
            dt = time.perf_counter() - t
        print(f"fmlsmr [{name}]: {rep.status} in {rep.iterations} iterations, {dt:.3f} s")


if __name__ == "__main__":
    main()
