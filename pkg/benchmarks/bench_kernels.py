"""Compiled vs pure-Python kernels on the factorizations the compressor uses.

    python benchmarks/bench_kernels.py [--sizes 16 32 64] [--repeats 5] [--json out.json]

Each cell is the median wall time of ``repeats`` runs on the same seeded matrix.
The last column is the largest elementwise difference between the two backends'
factors. They agree to rounding, not bit for bit: numpy reductions and the C
loops accumulate in different orders.
"""
import argparse
import json
import statistics
import time

import numpy as np

from vtpmd import decomp, kernels

CASES = {
    "svd": lambda A: decomp.svd(A),
    "qr_pivoted": lambda A: decomp.qr_pivoted(A),
    "lu": lambda A: decomp.lu(A, allow_singular=True),
    "cholesky": lambda A: decomp.cholesky(A.T @ A + np.eye(A.shape[1])),
}


def max_diff(f, g):
    d = 0.0
    for k, v in vars(f).items():
        if isinstance(v, np.ndarray) and v.size:
            d = max(d, float(np.max(np.abs(v.astype(float) - getattr(g, k).astype(float)))))
    return d


def timed(fn, A, repeats):
    out = None
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(A)
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--json", default=None)
    args = p.parse_args(argv)

    backends = kernels.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the python backend is available")
    rows = []
    for n in args.sizes:
        A = np.random.default_rng(n).standard_normal((n, n))
        for case, fn in CASES.items():
            row = {"case": case, "n": n}
            outs = {}
            for b in backends:
                with kernels.use(b):
                    row[b], outs[b] = timed(fn, A, args.repeats)
            if len(outs) == 2:
                row["max_diff"] = max_diff(outs["cython"], outs["python"])
                row["speedup"] = row["python"] / row["cython"]
            rows.append(row)

    head = f"{'case':<12}{'n':>5}" + "".join(f"{b + ' [s]':>14}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}{'max |diff|':>12}"
    print(head)
    for r in rows:
        line = f"{r['case']:<12}{r['n']:>5}" + "".join(f"{r[b]:>14.2e}" for b in backends)
        if "speedup" in r:
            line += f"{r['speedup']:>9.1f}x{r['max_diff']:>12.1e}"
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
