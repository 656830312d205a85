"""Closed-form losses over Dirichlet parameters with analytic gradients.

Every per-sample loss comes in a batched form returning (values (B,),
d/dalpha (B, C)); the unified batch objective composes them with the model's
backward pass.  nu and lambda are reciprocal throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OodSource, sample_ood
from .specialfn import digamma, lgamma, trigamma

LOSS_KINDS = ("FKL", "RKL", "MSE", "VI", "UCE", "LOGMSE", "DISTILL")


@dataclass(frozen=True)
class LossSpec:
    """Which objective to train, with its prior and weights."""

    kind: str
    alpha0: np.ndarray | None = None
    lam: float = 1e-2
    gamma_ood: float = 0.0
    ood: OodSource | None = None
    fkl_aux_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(
                f"unknown loss kind {self.kind!r}; valid kinds: {', '.join(LOSS_KINDS)}"
            )
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.gamma_ood < 0:
            raise ValueError("gamma_ood must be nonnegative")
        if self.gamma_ood > 0 and self.ood is None:
            raise ValueError("gamma_ood > 0 requires an OOD source")
        if self.alpha0 is not None:
            a0 = np.asarray(self.alpha0, dtype=np.float64)
            if np.any(a0 <= 0):
                raise ValueError("alpha0 must be strictly positive")
            object.__setattr__(self, "alpha0", a0)

    @property
    def nu(self) -> float:
        return 1.0 / self.lam

    def resolved_alpha0(self, n_classes: int) -> np.ndarray:
        if self.alpha0 is None:
            return np.ones(n_classes)
        if self.alpha0.shape[0] != n_classes:
            raise ValueError("alpha0 length does not match class count")
        return self.alpha0


def _rows(alpha):
    a = np.asarray(alpha, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


def _log_beta_rows(a):
    return lgamma(a).sum(axis=1) - lgamma(a.sum(axis=1))


# -- building blocks (value, grad w.r.t. alpha) ------------------------------

def expected_log_inv_pi(alpha, y):
    """E_Dir(alpha)[log 1/pi_y] = psi(S) - psi(alpha_y)."""
    a = _rows(alpha)
    y = np.atleast_1d(y)
    s = a.sum(axis=1)
    ay = a[np.arange(len(y)), y]
    val = digamma(s) - digamma(ay)
    grad = np.repeat(trigamma(s)[:, None], a.shape[1], axis=1)
    grad[np.arange(len(y)), y] -= trigamma(ay)
    return val, grad


def kl_alpha_to(alpha, beta):
    """KL(Dir(alpha) || Dir(beta)) per row, with grad w.r.t. alpha."""
    a, b = _rows(alpha), _rows(beta)
    if b.shape[0] == 1 and a.shape[0] > 1:
        b = np.broadcast_to(b, a.shape)
    s = a.sum(axis=1)
    dig_a = digamma(a)
    val = (
        _log_beta_rows(b)
        - _log_beta_rows(a)
        + np.sum((a - b) * (dig_a - digamma(s)[:, None]), axis=1)
    )
    diffsum = (a - b).sum(axis=1)
    grad = (a - b) * trigamma(a) - trigamma(s)[:, None] * diffsum[:, None]
    return val, grad


def kl_from_target(beta, alpha):
    """KL(Dir(beta) || Dir(alpha)) per row, with grad w.r.t. alpha."""
    a, b = _rows(alpha), _rows(beta)
    if b.shape[0] == 1 and a.shape[0] > 1:
        b = np.broadcast_to(b, a.shape)
    s = a.sum(axis=1)
    t = b.sum(axis=1)
    dig_b = digamma(b) - digamma(t)[:, None]
    val = _log_beta_rows(a) - _log_beta_rows(b) + np.sum((b - a) * dig_b, axis=1)
    grad = digamma(a) - digamma(s)[:, None] - dig_b
    return val, grad


def diff_entropy_rows(alpha):
    """Differential entropy per row, with grad w.r.t. alpha."""
    a = _rows(alpha)
    s = a.sum(axis=1)
    c = a.shape[1]
    val = (
        _log_beta_rows(a)
        + (s - c) * digamma(s)
        - np.sum((a - 1.0) * digamma(a), axis=1)
    )
    grad = (s - c)[:, None] * trigamma(s)[:, None] - (a - 1.0) * trigamma(a)
    return val, grad


def expected_sq_err(alpha, y):
    """E_Dir(alpha)||pi - e_y||^2, with grad w.r.t. alpha."""
    a = _rows(alpha)
    y = np.atleast_1d(y)
    b = a.shape[0]
    s = a.sum(axis=1)
    ay = a[np.arange(b), y]
    quad = np.sum(a * (a + 1.0), axis=1)
    val = quad / (s * (s + 1.0)) - 2.0 * ay / s + 1.0
    grad = (2.0 * a + 1.0) / (s * (s + 1.0))[:, None]
    grad -= (quad * (2.0 * s + 1.0) / (s * (s + 1.0)) ** 2)[:, None]
    grad += (ay / (s * s) * 2.0)[:, None]
    grad[np.arange(b), y] -= 2.0 / s
    return val, grad


def neg_log_mean_prob(alpha, y):
    """-log(alpha_y / S): cross entropy of the induced predictive mean."""
    a = _rows(alpha)
    y = np.atleast_1d(y)
    b = a.shape[0]
    s = a.sum(axis=1)
    ay = a[np.arange(b), y]
    val = np.log(s) - np.log(ay)
    grad = np.repeat((1.0 / s)[:, None], a.shape[1], axis=1)
    grad[np.arange(b), y] -= 1.0 / ay
    return val, grad


# -- the seven losses --------------------------------------------------------

def loss_vi(alpha, y, alpha0, lam):
    v1, g1 = expected_log_inv_pi(alpha, y)
    v2, g2 = kl_alpha_to(alpha, alpha0)
    return v1 + lam * v2, g1 + lam * g2


def loss_uce(alpha, y, lam):
    v1, g1 = expected_log_inv_pi(alpha, y)
    v2, g2 = diff_entropy_rows(alpha)
    return v1 - lam * v2, g1 - lam * g2


def loss_mse(alpha, y, alpha0, lam):
    v1, g1 = expected_sq_err(alpha, y)
    v2, g2 = kl_alpha_to(alpha, alpha0)
    return v1 + lam * v2, g1 + lam * g2


def _tempered_targets(alpha0, nu, y):
    a0 = np.asarray(alpha0, dtype=np.float64)
    y = np.atleast_1d(y)
    t = np.repeat(a0[None, :], len(y), axis=0)
    t[np.arange(len(y)), y] += nu
    return t


def loss_rkl(alpha, y, alpha0, nu):
    return kl_alpha_to(alpha, _tempered_targets(alpha0, nu, y))


def loss_fkl(alpha, y, alpha0, nu, aux_weight=1.0):
    v1, g1 = kl_from_target(_tempered_targets(alpha0, nu, y), alpha)
    if aux_weight != 0.0:
        v2, g2 = neg_log_mean_prob(alpha, y)
        return v1 + aux_weight * v2, g1 + aux_weight * g2
    return v1, g1


def loss_logmse(alpha, y, alpha0, lam):
    a = _rows(alpha)
    t = _tempered_targets(alpha0, 1.0 / lam, y)
    d = np.log(a) - np.log(t)
    return np.sum(d * d, axis=1), 2.0 * d / a


def loss_distill(alpha, teacher_pis):
    """-mean_j log Dir(alpha) density at each teacher probability vector.

    teacher_pis: (M, C) for a single alpha row, or (B, M, C) batched.
    Vectors must be strictly interior.
    """
    a = _rows(alpha)
    pis = np.asarray(teacher_pis, dtype=np.float64)
    if pis.ndim == 2:
        pis = pis[None, :, :]
    if np.any(pis <= 0.0):
        raise ValueError("teacher probability vectors must be strictly interior")
    mean_log_pi = np.log(pis).mean(axis=1)  # (B, C)
    s = a.sum(axis=1)
    val = _log_beta_rows(a) - np.sum((a - 1.0) * mean_log_pi, axis=1)
    grad = digamma(a) - digamma(s)[:, None] - mean_log_pi
    return val, grad


def cross_entropy(alpha, y):
    """Plain softmax cross entropy on the induced mean (teacher training)."""
    return neg_log_mean_prob(alpha, y)


def id_loss(spec: LossSpec, alpha, y):
    """Per-sample ID loss and alpha-gradient for any non-distill kind."""
    a0 = spec.resolved_alpha0(_rows(alpha).shape[1])
    if spec.kind == "VI":
        return loss_vi(alpha, y, a0, spec.lam)
    if spec.kind == "UCE":
        return loss_uce(alpha, y, spec.lam)
    if spec.kind == "MSE":
        return loss_mse(alpha, y, a0, spec.lam)
    if spec.kind == "RKL":
        return loss_rkl(alpha, y, a0, spec.nu)
    if spec.kind == "FKL":
        return loss_fkl(alpha, y, a0, spec.nu, spec.fkl_aux_weight)
    if spec.kind == "LOGMSE":
        return loss_logmse(alpha, y, a0, spec.lam)
    raise ValueError(f"id_loss does not handle kind {spec.kind!r}")


def ood_divergence(spec: LossSpec, alpha):
    """Divergence to the prior Dir(alpha0) used for OOD regularization:
    forward KL for FKL, reverse KL for everything else."""
    a0 = spec.resolved_alpha0(_rows(alpha).shape[1])
    if spec.kind == "FKL":
        return kl_from_target(a0, alpha)
    return kl_alpha_to(alpha, a0)


HEAD_GRAD_CLIP = 5.0


def head_space_clip(model, cache, dalpha, clip):
    """Clip the per-sample loss gradient in the head's natural coordinates.

    For nu = 1/lambda in the thousands, per-sample gradients on underfit
    points are orders of magnitude larger than the restoring gradient above
    the target, which drives logits into the clamp's dead zone (and density
    heads into underflow) where they can never recover.  Capping the
    logit-space (resp. log-density-space) gradient equalizes the push and
    pull so training settles at the fixed target instead.  Optimizer-side
    only: backward itself stays the exact derivative.
    """
    if clip is None:
        return dalpha
    if model.head == "direct":
        alpha = cache["alpha"]
        return np.clip(dalpha * alpha, -clip, clip) / alpha
    factor = model.class_counts[None, :] * cache["dens"]
    safe = np.maximum(factor, 1e-300)
    return np.clip(dalpha * factor, -clip, clip) / safe


def batch_loss(spec: LossSpec, model, xs, ys, xs_ood=None,
               head_grad_clip: float | None = HEAD_GRAD_CLIP):
    """Mean unified loss over an ID batch (+ gamma_ood * OOD term) and its
    gradient over the model's flat parameters."""
    if spec.gamma_ood > 0 and xs_ood is None:
        raise ValueError("gamma_ood > 0 requires an OOD batch")
    alpha, cache = model.forward(xs)
    vals, dalpha = id_loss(spec, alpha, ys)
    n = len(vals)
    loss = float(vals.mean())
    dalpha = head_space_clip(model, cache, dalpha, head_grad_clip)
    grad = model.backward(cache, dalpha / n)
    if spec.gamma_ood > 0:
        alpha_o, cache_o = model.forward(xs_ood)
        vals_o, dalpha_o = ood_divergence(spec, alpha_o)
        loss += spec.gamma_ood * float(vals_o.mean())
        dalpha_o = head_space_clip(model, cache_o, dalpha_o, head_grad_clip)
        grad += spec.gamma_ood * model.backward(cache_o, dalpha_o / len(vals_o))
    return loss, grad


def make_batch_objective(spec: LossSpec, ood_batch_size: int | None = None,
                         head_grad_clip: float | None = HEAD_GRAD_CLIP):
    """Adapt a LossSpec to the train() loop: draws a fresh OOD batch per
    ID batch from the spec's source when gamma_ood > 0."""

    def objective(model, xs, ys, rng):
        xs_ood = None
        if spec.gamma_ood > 0:
            n = ood_batch_size or len(xs)
            xs_ood = sample_ood(spec.ood, n, seed=int(rng.integers(2**32)))
        return batch_loss(spec, model, xs, ys, xs_ood, head_grad_clip)

    return objective


def make_eval_objective(spec: LossSpec):
    """Validation loss: the ID term only (OOD term excluded so early stopping
    tracks fit quality on held-out labeled data)."""

    def objective(model, xs, ys):
        alpha, _ = model.forward(xs)
        vals, _ = id_loss(spec, alpha, ys)
        return float(vals.mean())

    return objective
