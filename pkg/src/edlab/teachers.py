"""Model-uncertainty sources (ensemble / bootstrap / dropout) and forward-KL
distillation of their prediction spread into one Dirichlet-output student."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .data import LabeledSet, bootstrap_split
from .model import (
    AdamState,
    MetaModel,
    NumericalError,
    TrainSchedule,
    adam_step,
    split_train_val,
    train,
)
from .objectives import cross_entropy, loss_distill

SMOOTH_EPS = 1e-4
DEFAULT_DROPOUT_RATE = 0.2
BANK_KINDS = ("ensemble", "bootstrap", "dropout")
UQ_SENTINEL = float("nan")  # dent/energy are undefined for a sample bank


@dataclass(frozen=True)
class AnnealSchedule:
    """Linear temperature decay T(e) = max(1, T0 - (T0-1) e / decay_epochs)."""

    t0: float = 5.0
    decay_epochs: int = 30

    def __post_init__(self):
        if self.t0 < 1.0:
            raise ValueError("initial temperature must be >= 1")
        if self.decay_epochs < 1:
            raise ValueError("decay_epochs must be >= 1")

    def temperature(self, epoch: int) -> float:
        return max(1.0, self.t0 - (self.t0 - 1.0) * epoch / self.decay_epochs)


@dataclass
class TeacherBank:
    """M softmax classifiers, or one dropout net queried M times."""

    kind: str
    members: list
    m: int
    seed: int
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in BANK_KINDS:
            raise ValueError(f"unknown bank kind: {self.kind}")
        if self.kind == "dropout":
            if not (0.0 < self.dropout_rate < 1.0):
                raise ValueError("dropout rate must lie in (0, 1)")
            if len(self.members) != 1:
                raise ValueError("dropout bank holds exactly one model")
        elif self.m < 2 or len(self.members) != self.m:
            raise ValueError("ensemble/bootstrap banks need m >= 2 members")

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _ce_objective(model, xs, ys, rng, dropout_rate=0.0):
    alpha, cache = model.forward(
        xs, dropout_rate=dropout_rate, dropout_rng=rng if dropout_rate > 0 else None
    )
    vals, dalpha = cross_entropy(alpha, ys)
    return float(vals.mean()), model.backward(cache, dalpha / len(vals))


def _ce_eval(model, xs, ys):
    alpha, _ = model.forward(xs)
    vals, _ = cross_entropy(alpha, ys)
    return float(vals.mean())


def train_teachers(
    kind: str,
    base_set: LabeledSet,
    m: int,
    seed: int = 0,
    schedule: TrainSchedule | None = None,
    dropout_rate: float = DEFAULT_DROPOUT_RATE,
    hidden=(64, 64, 64),
) -> TeacherBank:
    """Fit the bank: distinct-seed CE models on the full set (ensemble), on
    0.8-ratio subsets (bootstrap), or one CE model trained with dropout."""
    if kind not in BANK_KINDS:
        raise ValueError(f"unknown bank kind: {kind}; valid: {', '.join(BANK_KINDS)}")
    sched = schedule or TrainSchedule()
    in_dim = base_set.xs.shape[1]

    def _fresh(member_seed):
        return MetaModel(in_dim, base_set.n_classes, hidden=hidden, seed=member_seed)

    if kind == "dropout":
        model = _fresh(seed)
        dsched = TrainSchedule(**{**sched.__dict__, "dropout_rate": dropout_rate})
        train(
            model,
            base_set,
            lambda mo, xs, ys, rng: _ce_objective(mo, xs, ys, rng, dropout_rate),
            dsched,
            seed=seed,
            eval_objective=_ce_eval,
        )
        return TeacherBank("dropout", [model], m, seed, dropout_rate)

    if m < 2:
        raise ValueError("ensemble/bootstrap require m >= 2")
    if kind == "bootstrap":
        subsets = bootstrap_split(base_set, m, ratio=0.8, seed=seed)
    else:
        subsets = [base_set] * m
    members = []
    for j, sub in enumerate(subsets):
        model = _fresh(seed * 100003 + j)
        train(model, sub, _ce_objective, sched, seed=seed * 100003 + j, eval_objective=_ce_eval)
        members.append(model)
    return TeacherBank(kind, members, m, seed)


def teacher_probs(bank: TeacherBank, x, temperature: float = 1.0, rng=None) -> np.ndarray:
    """(M, C) member probability vectors at x: softmax(logits / T) smoothed
    toward uniform by SMOOTH_EPS so every vector is strictly interior.

    Dropout banks draw m stochastic forward passes and need an rng.
    """
    out = teacher_probs_batch(bank, np.asarray(x, float)[None, :], temperature, rng)
    return out[0]


def teacher_probs_batch(
    bank: TeacherBank, xs: np.ndarray, temperature: float = 1.0, rng=None
) -> np.ndarray:
    """(B, M, C) member probability vectors for a batch."""
    if temperature < 1.0:
        raise ValueError("temperature must be >= 1")
    xs = np.asarray(xs, dtype=np.float64)
    c = bank.n_classes
    if bank.kind == "dropout":
        if rng is None:
            raise ValueError("dropout teacher inference requires an rng")
        model = bank.members[0]
        logits = []
        for _ in range(bank.m):
            alpha, cache = model.forward(
                xs, dropout_rate=bank.dropout_rate, dropout_rng=rng
            )
            # recover logits from the cache (direct head, pre-clip)
            logits.append(cache["logits"])
        stack = np.stack(logits, axis=1)  # (B, M, C)
    else:
        stack = np.stack([mo.logits(xs) for mo in bank.members], axis=1)
    probs = _softmax(stack / temperature)
    return (1.0 - SMOOTH_EPS) * probs + SMOOTH_EPS / c


def bank_meta_report(bank: TeacherBank, x, rng=None):
    """Monte-Carlo reference uncertainty of the bank at x.

    Returns a UQReport with dent/energy set to NaN sentinels: the bank is a
    sample cloud, not a Dirichlet, so those two have no analogue.
    """
    from .uncertainty import UQReport

    pis = teacher_probs(bank, x, temperature=1.0, rng=rng)
    mean_p = pis.mean(axis=0)
    ent = float(-np.sum(mean_p * np.log(mean_p)))
    aleatoric = float(-np.mean(np.sum(pis * np.log(pis), axis=1)))
    return UQReport(
        mi=max(ent - aleatoric, 0.0),
        dent=UQ_SENTINEL,
        ent=ent,
        maxp=float(mean_p.max()),
        aleatoric=aleatoric,
        energy=UQ_SENTINEL,
    )


def distill(
    bank: TeacherBank,
    student: MetaModel,
    dataset: LabeledSet,
    anneal: AnnealSchedule | None = None,
    seed: int = 0,
    schedule: TrainSchedule | None = None,
):
    """Fit the student's Dirichlet to the bank's per-point prediction cloud.

    Per epoch, teacher targets are recomputed at the annealed temperature
    T(epoch); validation always scores against the T=1 (final) targets so
    early stopping compares like with like.  Returns the epoch history; the
    student ends with the best-validation parameters.
    """
    if student.head != "direct":
        raise ValueError("distillation requires a direct-head student")
    anneal = anneal or AnnealSchedule()
    sched = schedule or TrainSchedule()
    rng = np.random.default_rng(seed)
    tr_idx, val_idx = split_train_val(len(dataset), sched.val_fraction, rng)
    xs_tr, xs_val = dataset.xs[tr_idx], dataset.xs[val_idx]

    def _targets(xs, temperature, target_seed):
        r = np.random.default_rng(target_seed) if bank.kind == "dropout" else None
        return teacher_probs_batch(bank, xs, temperature, rng=r)

    val_pis = _targets(xs_val, 1.0, seed + 1)
    opt = AdamState(n_params=student.params.size, lr=sched.lr)
    best_loss = np.inf
    best_params = student.get_params()
    stall = 0
    history = []
    for epoch in range(sched.epochs):
        t = anneal.temperature(epoch)
        pis_tr = _targets(xs_tr, t, (seed, epoch))
        order = rng.permutation(len(xs_tr))
        losses = []
        for start in range(0, len(order), sched.batch_size):
            bidx = order[start : start + sched.batch_size]
            alpha, cache = student.forward(xs_tr[bidx])
            vals, dalpha = loss_distill(alpha, pis_tr[bidx])
            loss = float(vals.mean())
            grad = student.backward(cache, dalpha / len(vals))
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite distillation loss at epoch {epoch}")
            student.set_params(adam_step(opt, student.params, grad))
            losses.append(loss)
        alpha_val, _ = student.forward(xs_val)
        vals_val, _ = loss_distill(alpha_val, val_pis)
        val_loss = float(vals_val.mean())
        history.append((epoch, float(np.mean(losses)), val_loss))
        # while the temperature is still decaying the train targets differ
        # from the T=1 val targets, so val losses are not yet comparable;
        # early stopping begins once the schedule reaches its floor
        if t > 1.0:
            best_params = student.get_params()
            continue
        if val_loss < best_loss - 1e-12:
            best_loss = val_loss
            best_params = student.get_params()
            stall = 0
        else:
            stall += 1
            if stall >= sched.patience:
                break
    student.set_params(best_params)
    return history


# -- persistence ---------------------------------------------------------

def save_bank(bank: TeacherBank, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    manifest = {
        "kind": bank.kind,
        "m": bank.m,
        "seed": bank.seed,
        "dropout_rate": bank.dropout_rate,
        "members": [f"member{j:03d}.npz" for j in range(len(bank.members))],
    }
    for name, model in zip(manifest["members"], bank.members):
        model.save(os.path.join(dirpath, name))
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_bank(dirpath) -> TeacherBank:
    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    members = [
        MetaModel.load(os.path.join(dirpath, name)) for name in manifest["members"]
    ]
    return TeacherBank(
        manifest["kind"],
        members,
        manifest["m"],
        manifest["seed"],
        manifest["dropout_rate"],
    )
