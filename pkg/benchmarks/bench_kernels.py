"""Timing comparison of the jit-compiled kernels against the plain-python
fallback.

Each backend runs in its own interpreter because the path is fixed at
import time by HPC_SENTINEL_NO_NUMBA. Usage:

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import textwrap

_WORKER = textwrap.dedent("""
    import json
    import sys
    import time

    import numpy as np

    from hpc_sentinel import _kernels

    repeat = int(sys.argv[1])
    _kernels.warmup()
    rng = np.random.default_rng(0)

    def best_of(fn):
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    cats = rng.integers(0, 6, size=2_000_000).astype(np.int64)
    t_wc = best_of(lambda: _kernels.window_counts(cats, 50))

    x = rng.integers(0, 600, size=(3000, 30)).astype(np.int64)
    y = rng.integers(0, 2, size=3000).astype(np.int64)
    feats = np.arange(30, dtype=np.int64)
    t_bs = best_of(lambda: _kernels.best_split(x, y, feats, 1))

    params = np.array([800.0, 437.0, 10.0, 2.185, 43.7, 100.0, 100.0, 50.0,
                       500.0, 2.0, 0.0, 60.0, 1.0, 0.5, 1000.0, 1.0])
    n = 6000
    load = np.full(n, 500.0); load[3500:] = 800.0
    ones = np.ones(n)
    ion = np.ones(n, dtype=np.int64)
    zeros = np.zeros(n)
    t_sim = best_of(lambda: _kernels.simulate_core(
        n, 10, 0.01, 0.001, load, ones, ion.copy(), ion.copy(),
        zeros, zeros, params))

    print(json.dumps({"backend": _kernels.backend(),
                      "window_counts_2M": t_wc,
                      "best_split_3000x30": t_bs,
                      "simulate_60s": t_sim}))
""")


def run_backend(no_numba: bool, repeat: int) -> dict:
    env = dict(os.environ)
    if no_numba:
        env["HPC_SENTINEL_NO_NUMBA"] = "1"
    else:
        env.pop("HPC_SENTINEL_NO_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", _WORKER, str(repeat)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5,
                    help="timed repetitions per kernel; best time wins")
    args = ap.parse_args()

    jit = run_backend(no_numba=False, repeat=args.repeat)
    pure = run_backend(no_numba=True, repeat=args.repeat)
    if jit["backend"] == pure["backend"]:
        print("note: numba unavailable, both runs used the pure path")

    keys = ["window_counts_2M", "best_split_3000x30", "simulate_60s"]
    label = {"window_counts_2M": "window counts, 2M instructions",
             "best_split_3000x30": "best split, 3000x30 node",
             "simulate_60s": "microgrid step loop, 60 s scenario"}
    print(f"{'kernel':<36} {'jit':>10} {'pure':>10} {'speedup':>9}")
    for k in keys:
        ratio = pure[k] / jit[k] if jit[k] > 0 else float("inf")
        print(f"{label[k]:<36} {jit[k] * 1e3:>8.2f}ms {pure[k] * 1e3:>8.2f}ms "
              f"{ratio:>8.1f}x")


if __name__ == "__main__":
    main()
