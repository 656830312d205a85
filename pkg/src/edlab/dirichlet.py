"""The Dirichlet meta distribution and its closed-form functionals.

Concentration vectors are plain 1-D numpy arrays of positive doubles.  All
entropies and divergences are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specialfn import DomainError, digamma, lgamma, log_beta

PROB_TOL = 1e-9


def as_prob_vector(p, tol: float = PROB_TOL) -> np.ndarray:
    """Validate and return a probability vector (components in [0,1], sum 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise DomainError("probability vector must be 1-D with length >= 2")
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        raise DomainError("probability vector components must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > tol:
        raise DomainError("probability vector must sum to 1")
    return arr


@dataclass(frozen=True)
class Dirichlet:
    """Dir(alpha) over the (C-1)-simplex; alpha strictly positive, C >= 2."""

    alpha: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alpha, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise DomainError("alpha must be 1-D with length >= 2")
        if not np.all(np.isfinite(arr)) or not np.all(arr > 0.0):
            raise DomainError("alpha components must be finite and > 0")
        object.__setattr__(self, "alpha", arr)

    @property
    def n_classes(self) -> int:
        return self.alpha.shape[0]

    @property
    def total(self) -> float:
        return float(self.alpha.sum())


def shannon_entropy(p) -> float:
    """H(p) in nats; 0 log 0 = 0."""
    arr = as_prob_vector(p)
    pos = arr[arr > 0.0]
    return float(-np.sum(pos * np.log(pos)))


def log_pdf(d: Dirichlet, pi) -> float:
    """Log density of Dir(alpha) at an interior point of the simplex."""
    p = as_prob_vector(pi)
    if p.shape[0] != d.n_classes:
        raise DomainError("dimension mismatch between alpha and pi")
    a = d.alpha
    boundary = p <= 0.0
    if np.any(boundary):
        if np.any(a[boundary] != 1.0):
            raise DomainError("zero pi component with alpha != 1 has no density")
        # (a-1) log p terms vanish where a == 1
        p = np.where(boundary, 1.0, p)
    return float(-log_beta(a) + np.sum((a - 1.0) * np.log(p)))


def kl(p: Dirichlet, q: Dirichlet) -> float:
    """KL(Dir(alpha) || Dir(beta)), nonnegative."""
    a, b = p.alpha, q.alpha
    if a.shape != b.shape:
        raise DomainError("KL requires equal-length concentration vectors")
    s = a.sum()
    val = log_beta(b) - log_beta(a) + float(np.sum((a - b) * (digamma(a) - digamma(s))))
    return max(val, 0.0)


def diff_entropy(d: Dirichlet) -> float:
    """Differential entropy of Dir(alpha); may be negative."""
    a = d.alpha
    s = a.sum()
    c = a.shape[0]
    return float(log_beta(a) + (s - c) * digamma(s) - np.sum((a - 1.0) * digamma(a)))


def mean(d: Dirichlet) -> np.ndarray:
    """Mean probability vector alpha / sum(alpha)."""
    return d.alpha / d.alpha.sum()


def expected_cat_entropy(d: Dirichlet) -> float:
    """E_Dir(alpha)[H(Cat(pi))]: the aleatoric (data) uncertainty."""
    a = d.alpha
    s = a.sum()
    return float(np.sum((a / s) * (digamma(s + 1.0) - digamma(a + 1.0))))


def mutual_info(d: Dirichlet) -> float:
    """I(y; pi) = H(mean) - E[H(Cat(pi))]; tiny negative rounding clipped to 0."""
    val = shannon_entropy(mean(d)) - expected_cat_entropy(d)
    return max(val, 0.0)


def energy(d: Dirichlet) -> float:
    """Free-energy score -log(sum alpha); low on confident (ID) outputs."""
    return float(-np.log(d.alpha.sum()))


def sample(d: Dirichlet, rng: np.random.Generator) -> np.ndarray:
    """One draw via normalized Gamma(alpha_i, 1) variates."""
    g = rng.gamma(d.alpha)
    return g / g.sum()


def sample_n(d: Dirichlet, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws, shape (n, C)."""
    g = rng.gamma(d.alpha, size=(n, d.n_classes))
    return g / g.sum(axis=1, keepdims=True)


def tempered_posterior(alpha0, nu: float, y: int) -> Dirichlet:
    """Dir(alpha0 + nu * e_y): conjugate update under the tempered likelihood."""
    a0 = np.asarray(alpha0, dtype=np.float64)
    if not (0 <= y < a0.shape[0]):
        raise DomainError(f"class index {y} out of range for {a0.shape[0]} classes")
    if nu <= 0:
        raise DomainError("nu must be positive")
    out = a0.copy()
    out[y] += nu
    return Dirichlet(out)


def optimal_target(alpha0, nu: float, eta) -> Dirichlet:
    """Dir(alpha0 + nu * eta): the fixed target the reverse-KL objective fits."""
    a0 = np.asarray(alpha0, dtype=np.float64)
    e = as_prob_vector(eta)
    if a0.shape != e.shape:
        raise DomainError("alpha0 and eta must have equal length")
    if nu <= 0:
        raise DomainError("nu must be positive")
    return Dirichlet(a0 + nu * e)
