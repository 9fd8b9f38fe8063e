"""Jit and plain-python kernel paths must agree bit for bit.

The path is chosen at import time from HPC_SENTINEL_NO_NUMBA, so the
alternate path runs in a subprocess and ships its results back through an
npz file.
"""

import os
import subprocess
import sys
import textwrap

import numpy as np

from hpc_sentinel import _kernels

_COMPUTE = textwrap.dedent("""
    import sys
    import numpy as np
    from hpc_sentinel import _kernels

    out = sys.argv[1]
    rng = np.random.default_rng(2024)

    wc_out = []
    for n in (0, 1, 49, 50, 137, 400):
        cats = rng.integers(0, 6, size=n).astype(np.int64)
        for w in (1, 7, 50):
            wc_out.append(np.asarray(_kernels.window_counts(cats, w)))

    bs_out = []
    for trial in range(30):
        n = int(rng.integers(2, 40))
        f = int(rng.integers(1, 6))
        x = rng.integers(0, 50, size=(n, f)).astype(np.int64)
        y = rng.integers(0, 2, size=n).astype(np.int64)
        feats = np.arange(f, dtype=np.int64)
        for exact in (0, 1):
            r = _kernels.best_split(x, y, feats, exact)
            bs_out.append(np.asarray(r, dtype=np.int64))
    # values near the int64 cliff exercise the exact path's wide arithmetic
    xb = (rng.integers(0, 2**31, size=(12, 3)) * 2**29).astype(np.int64)
    yb = rng.integers(0, 2, size=12).astype(np.int64)
    r = _kernels.best_split(xb, yb, np.arange(3, dtype=np.int64), 1)
    bs_out.append(np.asarray(r, dtype=np.int64))

    params = np.array([800.0, 437.0, 10.0, 2.185, 43.7, 100.0, 100.0, 50.0,
                       500.0, 2.0, 0.0, 60.0, 1.0, 0.5, 1000.0, 1.0])
    n_steps, substeps = 400, 10
    load = np.full(n_steps, 500.0); load[200:] = 800.0
    irr = np.full(n_steps, 1.0)
    mppt_on = np.ones(n_steps, dtype=np.int64)
    inv_on = np.ones(n_steps, dtype=np.int64); inv_on[150:250] = 0
    pert_amp = np.zeros(n_steps); pert_amp[300:] = 0.1
    pert_freq = np.zeros(n_steps); pert_freq[300:] = 0.5
    sim = _kernels.simulate_core(n_steps, substeps, 0.01, 0.001, load, irr,
                                 mppt_on, inv_on, pert_amp, pert_freq, params)

    arrays = {"backend": np.array([_kernels.backend() == "numba"], dtype=np.int64),
              "sim": np.asarray(sim)}
    for i, a in enumerate(wc_out):
        arrays[f"wc{i}"] = a
    for i, a in enumerate(bs_out):
        arrays[f"bs{i}"] = a
    np.savez(out, **arrays)
""")


def _run(path, no_numba):
    env = dict(os.environ)
    if no_numba:
        env["HPC_SENTINEL_NO_NUMBA"] = "1"
    else:
        env.pop("HPC_SENTINEL_NO_NUMBA", None)
    subprocess.run([sys.executable, "-c", _COMPUTE, str(path)], check=True,
                   env=env, capture_output=True)
    return np.load(path)


def test_backends_agree_exactly(tmp_path):
    jit = _run(tmp_path / "jit.npz", no_numba=False)
    pure = _run(tmp_path / "pure.npz", no_numba=True)
    assert jit["backend"][0] == 1, "jit process did not select numba"
    assert pure["backend"][0] == 0, "pure process selected numba anyway"
    assert set(jit.files) == set(pure.files)
    for key in jit.files:
        if key == "backend":
            continue
        a, b = jit[key], pure[key]
        assert a.dtype == b.dtype, key
        assert np.array_equal(a, b), key  # exact, including float bits


def test_backend_reports_name():
    assert _kernels.backend() in ("numba", "pure")


def test_window_counts_kernel_shapes():
    cats = np.array([0, 1, 2, 3, 4, 5, 0], dtype=np.int64)
    counts = np.asarray(_kernels.window_counts(cats, 3))
    assert counts.shape == (3, 30)
    # last, partial window holds the lone trailing arithmetic code
    assert counts[2, 0] == 1 and counts[2].sum() == 1
