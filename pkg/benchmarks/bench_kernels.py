"""Times the truncated series product under both backends.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one row per (variables, order, batch) with the numba and numpy
timings, their ratio and the max difference of the two results.  A second
table times an end-to-end curvature evaluation with each backend.
"""

import argparse
import time

import numpy as np

from tangent_forge import _kernels
from tangent_forge.jets import _product_table, ncoef


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    for n, r, batch in [(4, 2, 64), (4, 4, 64), (8, 2, 256), (8, 3, 256), (8, 4, 64)]:
        table = _product_table(n, r)
        k = ncoef(n, r)
        a, b = rng.normal(size=(batch, k)), rng.normal(size=(batch, k))
        out = {}
        times = {}
        for name in ("numba", "numpy"):
            _kernels.set_backend(name)
            out[name] = _kernels.series_product(a, b, table)  # warm-up / compile
            times[name] = best_of(lambda: _kernels.series_product(a, b, table), repeat)
        diff = float(np.max(np.abs(out["numba"] - out["numpy"])))
        yield n, r, batch, times["numba"], times["numpy"], diff


def curvature_rows(repeat):
    from tangent_forge.bundle import NonlinearConnection, VelocityTensor
    from tangent_forge.curvtor import curvature_dmc_closed_form
    from tangent_forge.genmetric import sasaki_metric

    sigma = VelocityTensor.parse([["2+y1^2+0.1*x2", "0.3*x1*y2"], ["0.3*x1*y2", "1.5+x2^2+0.2*y1*y2"]],
                                 2, "symmetric")
    psi = VelocityTensor.parse([["0", "0.2*x1+0.3*y2"], ["-(0.2*x1+0.3*y2)", "0"]], 2, "antisymmetric")
    t = NonlinearConnection.parse([["0.3*y1+0.1*x2*y2", "0.2*y2*y1"], ["-0.1*x1*y1", "0.4*y2^2+0.1*y1"]], 2)

    def work():
        gs = sasaki_metric(sigma, psi, t, [0.7, 0.4, 0.3, -0.5], order=2)
        return curvature_dmc_closed_form(gs)

    res = {}
    for name in ("numba", "numpy"):
        _kernels.set_backend(name)
        out = work()
        res[name] = (best_of(work, max(1, repeat // 4)), out)
    diff = float(np.max(np.abs(res["numba"][1] - res["numpy"][1])))
    return res["numba"][0], res["numpy"][0], diff


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    print(f"{'vars':>4} {'order':>5} {'batch':>5} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    for n, r, batch, tn, tp, diff in kernel_rows(args.repeat):
        print(f"{n:>4} {r:>5} {batch:>5} {tn * 1e3:>10.3f} {tp * 1e3:>10.3f} {tp / tn:>8.2f} {diff:>10.1e}")

    tn, tp, diff = curvature_rows(args.repeat)
    print("\ncurvature of the double metric Cartan connection, m = 2, one point")
    print(f"numba {tn * 1e3:.1f} ms   numpy {tp * 1e3:.1f} ms   max diff {diff:.1e}")


if __name__ == "__main__":
    main()
