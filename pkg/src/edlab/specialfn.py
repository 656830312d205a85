"""Special functions backing every Dirichlet closed form.

At import time the compiled extension (edlab._specfn_c) is preferred; the
pure numpy fallback is selected when the extension is missing or EDLAB_PURE
is set.  Both backends implement identical algorithms, so results agree to
the last ulp or so; see benchmarks/bench_specialfn.py for the speed gap.

All functions accept scalars or arrays of positive reals and raise
DomainError on non-positive input.
"""

from __future__ import annotations

import os

import numpy as np

from . import _specfn_py

if os.environ.get("EDLAB_PURE"):
    _impl = _specfn_py
    BACKEND = "python"
else:
    try:
        from . import _specfn_c as _impl

        BACKEND = "c"
    except ImportError:
        _impl = _specfn_py
        BACKEND = "python"


class DomainError(ValueError):
    """Argument outside the function's domain."""


def _check_positive(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(arr > 0.0):
        raise DomainError(f"{name} requires strictly positive input")
    return arr


def _maybe_scalar(out, x):
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(np.asarray(out).item())
    return out


def lgamma(x):
    """Natural log of the Gamma function for x > 0."""
    arr = _check_positive(x, "lgamma")
    return _maybe_scalar(_impl.lgamma(arr), x)


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _check_positive(x, "digamma")
    return _maybe_scalar(_impl.digamma(arr), x)


def trigamma(x):
    """psi'(x) for x > 0."""
    arr = _check_positive(x, "trigamma")
    return _maybe_scalar(_impl.trigamma(arr), x)


def log_beta(alpha):
    """Log of the multivariate Beta function: sum lgamma(a_i) - lgamma(sum a)."""
    arr = np.asarray(alpha, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise DomainError("log_beta requires a vector of length >= 2")
    if not np.all(arr > 0.0):
        raise DomainError("log_beta requires strictly positive components")
    total = np.asarray(_impl.lgamma(np.asarray([arr.sum()]))).item()
    return float(np.sum(_impl.lgamma(arr)) - total)
