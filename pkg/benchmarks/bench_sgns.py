"""Timing comparison for the skip-gram SGD kernel: compiled vs numpy fallback.

The epoch loop is the only hot path in the package that is inherently
sequential (each pair's rank-1 update feeds the next), so it is the one
piece shipped as a C extension. Everything else is vectorized numpy and
gains nothing from compilation. Run:

    python3 benchmarks/bench_sgns.py

Both backends are imported directly, so this works regardless of which
one the package selected at import time. If the extension is missing the
script still runs and says so.
"""

import time

import numpy as np

from pseudobox._kernels import _core_py

try:
    from pseudobox._kernels import _sgns
except ImportError:
    _sgns = None


def _inputs(rng, n_nodes, dim, m, negs=5):
    w_in = (rng.random((n_nodes, dim)) - 0.5) / dim
    w_out = rng.standard_normal((n_nodes, dim)) * 0.01
    centers = rng.integers(0, n_nodes, m)
    contexts = rng.integers(0, n_nodes, m)
    negatives = np.ascontiguousarray(rng.integers(0, n_nodes, (m, negs)))
    return w_in, w_out, centers, contexts, negatives


def _time_epoch(fn, args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        work = tuple(x.copy() for x in args)
        t0 = time.perf_counter()
        fn(*work, 0.025, 0.0001, 0, len(args[2]))
        best = min(best, time.perf_counter() - t0)
    return best, work


def main():
    rng = np.random.default_rng(0)
    sizes = [
        # (n_nodes, dim, pairs) roughly: tiny scene, typical scene, stress
        (60, 64, 5_000),
        (300, 128, 50_000),
        (1_000, 128, 200_000),
    ]
    print(f"{'nodes':>6} {'dim':>4} {'pairs':>8} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for n_nodes, dim, m in sizes:
        args = _inputs(rng, n_nodes, dim, m)
        t_py, out_py = _time_epoch(_core_py.sgns_epoch, args)
        if _sgns is None:
            print(f"{n_nodes:>6} {dim:>4} {m:>8} {t_py:>9.3f}s {'missing':>10} {'-':>8}")
            continue
        t_cy, out_cy = _time_epoch(_sgns.sgns_epoch, args)
        # same update sequence, so the weights must agree to float accumulation order
        drift = max(
            float(np.abs(out_py[0] - out_cy[0]).max()),
            float(np.abs(out_py[1] - out_cy[1]).max()),
        )
        assert drift < 1e-9, f"backends disagree: max |delta| = {drift:g}"
        print(
            f"{n_nodes:>6} {dim:>4} {m:>8} {t_py:>9.3f}s {t_cy:>9.3f}s {t_py / t_cy:>7.1f}x"
        )


if __name__ == "__main__":
    main()
