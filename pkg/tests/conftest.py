"""Shared fixtures: one kernel warmup per session and small dataset builders."""

import numpy as np
import pytest

from hpc_sentinel import _kernels, hpc


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or no-op on the pure path) once so timed tests measure work,
    # not jit latency
    _kernels.warmup()


def make_dataset(X, y, attack="mppt_dos", feature_names=None):
    """Dataset from a dense matrix: row i becomes one 50-long window sample."""
    names = tuple(feature_names) if feature_names else hpc.FEATURE_NAMES
    X = np.asarray(X)
    samples = []
    for i, (row, label) in enumerate(zip(X, y)):
        counts = np.zeros(len(hpc.FEATURE_NAMES), dtype=np.int64)
        counts[: len(row)] = np.asarray(row, dtype=np.int64)
        vec = hpc.HpcVector(counts=counts, window_len=50, partial=False)
        if int(label) == 1:
            samples.append(hpc.Sample(f"fw{i}", i, vec, "malicious", attack))
        else:
            samples.append(hpc.Sample(f"fw{i}", i, vec, "benign", None))
    return hpc.Dataset(samples)


@pytest.fixture
def tiny_dataset():
    """20 linearly separable samples on the first feature."""
    rng = np.random.default_rng(7)
    X = rng.integers(0, 10, size=(20, 30))
    X[:10, 0] = rng.integers(0, 5, size=10)
    X[10:, 0] = rng.integers(20, 30, size=10)
    y = np.array([0] * 10 + [1] * 10)
    return make_dataset(X, y)
