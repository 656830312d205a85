"""Ranking metrics (AUROC, AUPR) and the downstream experiment runners:
OOD detection, selective classification, and lambda / sample-size sweeps."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    LabeledSet,
    OodSource,
    make_gaussian_mixture,
    sample_ood,
)
from .model import MetaModel, TrainSchedule, train
from .objectives import LossSpec, make_batch_objective, make_eval_objective
from .teachers import AnnealSchedule, bank_meta_report, distill, train_teachers
from .uncertainty import report_batch, scores_matrix

SWEEP_COLUMNS = ("task", "loss", "lambda", "n_train", "seed", "metric", "value", "runtime_s")
SENTINEL = float("nan")

OOD_METRICS = ("mi", "dent", "energy")
SELECTIVE_METRICS = ("ent", "maxp")


@dataclass(frozen=True)
class ScoredBinary:
    """Scores for a binary ranking task; higher score = more positive."""

    pos_scores: np.ndarray
    neg_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos_scores", np.asarray(self.pos_scores, float))
        object.__setattr__(self, "neg_scores", np.asarray(self.neg_scores, float))
        if len(self.pos_scores) == 0 or len(self.neg_scores) == 0:
            raise ValueError("both score sides must be non-empty")


@dataclass
class ExperimentResult:
    """Config echo plus (task, metric, value) rows and wall time."""

    task: str
    config: dict
    rows: list  # (metric_name, value) tuples
    runtime_s: float = 0.0


def auroc(s: ScoredBinary) -> float:
    """Exact Mann-Whitney statistic: P(pos > neg) + 0.5 P(pos = neg).

    Computed from midranks, which equals the all-pairs count with half
    credit for ties.
    """
    pos, neg = s.pos_scores, s.neg_scores
    both = np.concatenate([pos, neg])
    order = np.argsort(both, kind="stable")
    ranks = np.empty(len(both))
    sorted_vals = both[order]
    i = 0
    while i < len(both):
        j = i
        while j + 1 < len(both) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    n_pos, n_neg = len(pos), len(neg)
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(s: ScoredBinary) -> float:
    """Average precision with tied scores treated as a single threshold."""
    pos, neg = s.pos_scores, s.neg_scores
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    n_pos = len(pos)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = int(np.sum(pos >= t))
        fp = int(np.sum(neg >= t))
        recall = tp / n_pos
        precision = tp / (tp + fp) if tp + fp else 1.0
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def _model_scores(model: MetaModel, xs: np.ndarray) -> dict:
    alphas, _ = model.forward(xs)
    return scores_matrix(report_batch(alphas))


def _bank_scores(bank, xs: np.ndarray, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    reports = [bank_meta_report(bank, x, rng=rng) for x in xs]
    return scores_matrix(reports)


def _scores(model_or_bank, xs: np.ndarray) -> dict:
    if isinstance(model_or_bank, MetaModel):
        return _model_scores(model_or_bank, xs)
    return _bank_scores(model_or_bank, xs)


def _predictions(model_or_bank, xs: np.ndarray) -> np.ndarray:
    if isinstance(model_or_bank, MetaModel):
        alphas, _ = model_or_bank.forward(xs)
        return np.argmax(alphas, axis=1)
    from .teachers import teacher_probs_batch

    pis = teacher_probs_batch(model_or_bank, xs, rng=np.random.default_rng(0))
    return np.argmax(pis.mean(axis=1), axis=1)


def ood_experiment(
    model_or_bank, id_set: LabeledSet, ood_src: OodSource, metric_choice: str,
    n_ood: int | None = None, seed: int = 0,
) -> ExperimentResult:
    """AUROC/AUPR for separating OOD (positive) from ID by an epistemic score."""
    if metric_choice not in OOD_METRICS:
        raise ValueError(f"metric must be one of {OOD_METRICS}")
    t0 = time.perf_counter()
    xs_ood = sample_ood(ood_src, n_ood or len(id_set), seed=seed)
    id_scores = _scores(model_or_bank, id_set.xs)[metric_choice]
    ood_scores = _scores(model_or_bank, xs_ood)[metric_choice]
    s = ScoredBinary(ood_scores, id_scores)
    rows = [("auroc", auroc(s)), ("aupr", aupr(s))]
    cfg = {"task": "ood", "metric_choice": metric_choice, "ood_kind": ood_src.kind}
    return ExperimentResult("ood", cfg, rows, time.perf_counter() - t0)


def selective_experiment(
    model_or_bank, id_test: LabeledSet, metric_choice: str
) -> ExperimentResult:
    """AUROC/AUPR for detecting the model's own errors by total uncertainty
    (ent) or negated confidence (maxp).  A perfect classifier has no
    positives; the ranking rows carry NaN sentinels then."""
    if metric_choice not in SELECTIVE_METRICS:
        raise ValueError(f"metric must be one of {SELECTIVE_METRICS}")
    t0 = time.perf_counter()
    preds = _predictions(model_or_bank, id_test.xs)
    wrong = preds != id_test.ys
    acc = float(1.0 - wrong.mean())
    raw = _scores(model_or_bank, id_test.xs)[metric_choice]
    score = -raw if metric_choice == "maxp" else raw
    if wrong.all() or not wrong.any():
        rows = [("auroc", SENTINEL), ("aupr", SENTINEL), ("accuracy", acc)]
    else:
        s = ScoredBinary(score[wrong], score[~wrong])
        rows = [("auroc", auroc(s)), ("aupr", aupr(s)), ("accuracy", acc)]
    cfg = {"task": "selective", "metric_choice": metric_choice}
    return ExperimentResult("selective", cfg, rows, time.perf_counter() - t0)


# -- sweeps ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepBase:
    """Everything a sweep point needs except the swept variable and seed."""

    loss: str = "RKL"  # a LossSpec kind, or "BOOTSTRAP-DISTILL"
    lam: float = 1e-2
    n_train: int = 3000
    n_test: int = 1000
    noise_rate: float = 0.0
    gamma_ood: float = 0.0
    ood: OodSource = field(default_factory=lambda: OodSource("uniform-box"))
    hidden: tuple = (64, 64, 64)
    epochs: int = 50
    patience: int = 10
    batch_size: int = 64
    teacher_m: int = 10

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(
            epochs=self.epochs, batch_size=self.batch_size, patience=self.patience
        )


def fit_point(base: SweepBase, seed: int) -> MetaModel:
    """Train one model per the base config: an EDL objective or a
    bootstrap-distilled student."""
    ds = make_gaussian_mixture(base.n_train, noise_rate=base.noise_rate, seed=seed)
    if base.loss == "BOOTSTRAP-DISTILL":
        bank = train_teachers(
            "bootstrap", ds, base.teacher_m, seed=seed, schedule=base.schedule(),
            hidden=base.hidden,
        )
        student = MetaModel(2, ds.n_classes, hidden=base.hidden, seed=seed)
        distill(bank, student, ds, AnnealSchedule(), seed=seed, schedule=base.schedule())
        return student
    spec = LossSpec(
        kind=base.loss, lam=base.lam, gamma_ood=base.gamma_ood,
        ood=base.ood if base.gamma_ood > 0 else None,
    )
    model = MetaModel(2, ds.n_classes, hidden=base.hidden, seed=seed)
    train(
        model, ds, make_batch_objective(spec), base.schedule(),
        seed=seed, eval_objective=make_eval_objective(spec),
    )
    return model


def _run_sweep_point(args):
    base, kind, value, seed = args
    if kind == "lambda":
        base = replace(base, lam=float(value))
    elif kind == "samplesize":
        base = replace(base, n_train=int(value))
    else:
        raise ValueError(f"unknown sweep kind: {kind}")
    t0 = time.perf_counter()
    model = fit_point(base, seed)
    test = make_gaussian_mixture(
        base.n_test, noise_rate=base.noise_rate, seed=seed + 777_000
    )
    preds = np.argmax(model.forward(test.xs)[0], axis=1)
    scores = _model_scores(model, test.xs)
    ood_res = ood_experiment(model, test, base.ood, "mi", seed=seed + 555_000)
    metrics = {
        "test_acc": float(np.mean(preds == test.ys)),
        "mean_mi": float(scores["mi"].mean()),
        "mean_aleatoric": float(scores["aleatoric"].mean()),
        "ood_auroc": dict(ood_res.rows)["auroc"],
    }
    runtime = time.perf_counter() - t0
    cfg = {
        "loss": base.loss,
        "lambda": base.lam,
        "n_train": base.n_train,
        "seed": seed,
    }
    rows = sorted(metrics.items())
    return ExperimentResult(kind, cfg, rows, runtime)


def sweep(
    kind: str,
    grid,
    base: SweepBase,
    seeds=(0, 1, 2, 3, 4),
    workers: int = 1,
) -> list[ExperimentResult]:
    """One trained model per (grid value, seed); results sorted by config."""
    if kind not in ("lambda", "samplesize"):
        raise ValueError("sweep kind must be 'lambda' or 'samplesize'")
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    jobs = [(base, kind, v, s) for v in grid for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sweep_point, jobs))
    else:
        results = [_run_sweep_point(j) for j in jobs]
    results.sort(key=lambda r: (r.config["lambda"], r.config["n_train"], r.config["seed"]))
    return results


def write_sweep_csv(path, results: list[ExperimentResult], runtimes_path=None) -> None:
    """Tidy CSV, one row per metric.  The runtime_s column is left empty so
    repeat runs are byte-identical; measured wall times go to runtimes_path
    when given."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in results:
            c = r.config
            for metric, value in r.rows:
                w.writerow(
                    [r.task, c["loss"], repr(float(c["lambda"])), c["n_train"],
                     c["seed"], metric, repr(float(value)), ""]
                )
    if runtimes_path is not None:
        with open(runtimes_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "loss", "lambda", "n_train", "seed", "runtime_s"])
            for r in results:
                c = r.config
                w.writerow(
                    [r.task, c["loss"], repr(float(c["lambda"])), c["n_train"],
                     c["seed"], f"{r.runtime_s:.3f}"]
                )


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["lambda"] = float(row["lambda"])
        row["n_train"] = int(row["n_train"])
        row["seed"] = int(row["seed"])
        row["value"] = float(row["value"])
    return rows
