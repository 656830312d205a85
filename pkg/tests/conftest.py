"""Shared fixtures and oracle helpers for the test suite."""

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_grad(f, x, step=1e-5):
    """Central finite-difference gradient of scalar f at 1-D point x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def max_rel_err(approx, exact):
    """Max relative error with an absolute floor for near-zero entries."""
    approx = np.asarray(approx, dtype=np.float64).ravel()
    exact = np.asarray(exact, dtype=np.float64).ravel()
    denom = np.maximum(np.abs(exact), 1e-6)
    return float(np.max(np.abs(approx - exact) / denom))


def random_alpha(rng, c, lo=0.1, hi=50.0):
    return rng.uniform(lo, hi, size=c)
