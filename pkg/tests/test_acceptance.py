"""Acceptance gate.

Eleven criteria, each at its stated tolerance:

 1. objective-equivalence suite (vi/rkl and uce/vi identities), 200 configs
 2. five closed forms vs 1e6-sample Monte Carlo on 50 random Dirichlets
 3. fixed-target convergence of the reverse-KL model at N = 30000
 4. epistemic uncertainty vs sample size (RKL flat, distilled student shrinks)
 5. aleatoric uncertainty responds to lambda under label noise
 6. OOD AUROC non-increasing in lambda with an OOD training term
 7. bootstrap-distilled student matches or beats the RKL baseline
 8. parameter-space gradients of all seven losses on both heads
 9. auroc/aupr vs brute-force enumeration, 1000 tied instances
10. special-function spot values
11. byte-identical sweep determinism

The heavy criteria (3-7) use frozen configurations; total runtime is about
20 minutes on one core.
"""

import math
import time

import numpy as np
import pytest

from edlab import specialfn
from edlab.data import (
    OodSource,
    eta_oracle_batch,
    make_gaussian_mixture,
)
from edlab.dirichlet import Dirichlet, kl, diff_entropy, expected_cat_entropy, sample_n
from edlab.evalmetrics import (
    ScoredBinary,
    SweepBase,
    _model_scores,
    aupr,
    auroc,
    fit_point,
    ood_experiment,
    selective_experiment,
    sweep,
    write_sweep_csv,
)
from edlab.model import MetaModel, TrainSchedule, train
from edlab.objectives import (
    LOSS_KINDS,
    LossSpec,
    expected_log_inv_pi,
    expected_sq_err,
    id_loss,
    loss_distill,
    loss_rkl,
    loss_uce,
    loss_vi,
    make_batch_objective,
    make_eval_objective,
)
from edlab.specialfn import digamma, lgamma, log_beta, trigamma

from conftest import fd_grad, random_alpha

EULER_GAMMA = 0.5772156649015328606


# -- 1. objective equivalences -------------------------------------------------

def test_acceptance_01_objective_equivalences(rng):
    t0 = time.perf_counter()
    for _ in range(200):
        c = int(rng.integers(2, 6))
        y = int(rng.integers(0, c))
        lam = float(10.0 ** rng.uniform(-3, 1))
        nu = 1.0 / lam
        alpha0 = random_alpha(rng, c, lo=0.5, hi=5.0)

        # (a) loss_vi - lam * loss_rkl is constant in alpha
        diffs = []
        for _ in range(8):
            a = random_alpha(rng, c)[None, :]
            v_vi, _ = loss_vi(a, [y], alpha0, lam)
            v_rkl, _ = loss_rkl(a, [y], alpha0, nu)
            diffs.append(v_vi[0] - lam * v_rkl[0])
        assert np.std(diffs) <= 1e-8

        # (b) at alpha0 = ones: loss_uce - loss_vi = lam * log((C-1)!)
        ones = np.ones(c)
        for _ in range(3):
            a = random_alpha(rng, c)[None, :]
            v_uce, _ = loss_uce(a, [y], lam)
            v_vi, _ = loss_vi(a, [y], ones, lam)
            assert abs((v_uce[0] - v_vi[0]) - lam * lgamma(float(c))) <= 1e-10
    assert time.perf_counter() - t0 < 5.0


# -- 2. closed forms vs Monte Carlo ---------------------------------------------

def _log_pdf_rows(d: Dirichlet, pis: np.ndarray) -> np.ndarray:
    return -log_beta(d.alpha) + np.sum((d.alpha - 1.0) * np.log(pis), axis=1)


def test_acceptance_02_closed_forms_vs_mc():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 1_000_000
    for i in range(50):
        c = int(rng.choice([2, 3, 5]))
        d = Dirichlet(random_alpha(rng, c, lo=0.3, hi=20.0))
        q = Dirichlet(random_alpha(rng, c, lo=0.3, hi=20.0))
        y = int(rng.integers(0, c))
        pis = sample_n(d, n, rng)
        pis = np.clip(pis, 1e-300, None)

        samples = {
            "kl": _log_pdf_rows(d, pis) - _log_pdf_rows(q, pis),
            "diff_entropy": -_log_pdf_rows(d, pis),
            "expected_cat_entropy": -np.sum(pis * np.log(pis), axis=1),
            "expected_log_inv_pi": -np.log(pis[:, y]),
        }
        e_y = np.zeros(c)
        e_y[y] = 1.0
        samples["expected_sq_err"] = np.sum((pis - e_y) ** 2, axis=1)

        closed = {
            "kl": kl(d, q),
            "diff_entropy": diff_entropy(d),
            "expected_cat_entropy": expected_cat_entropy(d),
            "expected_log_inv_pi": expected_log_inv_pi(d.alpha[None, :], [y])[0][0],
            "expected_sq_err": expected_sq_err(d.alpha[None, :], [y])[0][0],
        }
        for name, vals in samples.items():
            se = float(np.std(vals)) / math.sqrt(n)
            err = abs(float(np.mean(vals)) - closed[name])
            assert err <= 4.0 * se, f"{name} off by {err:.3g} (4 SE = {4 * se:.3g})"
    assert time.perf_counter() - t0 < 120.0


# -- 3. fixed-target convergence --------------------------------------------------

def test_acceptance_03_fixed_target_convergence():
    t0 = time.perf_counter()
    ds = make_gaussian_mixture(30000, seed=0)
    spec = LossSpec(kind="RKL", lam=1e-2)
    model = MetaModel(2, 3, seed=0)
    train(model, ds, make_batch_objective(spec), TrainSchedule(epochs=50),
          seed=0, eval_objective=make_eval_objective(spec))
    test = make_gaussian_mixture(1000, seed=99)
    alphas, _ = model.forward(test.xs)
    totals = alphas.sum(axis=1)
    target = 3.0 + 100.0  # C + nu with nu = 1/lambda
    relerr = float(np.median(np.abs(totals - target) / target))
    eta = eta_oracle_batch(ds.generator, test.xs)
    tv = float(np.median(0.5 * np.abs(alphas / totals[:, None] - eta).sum(axis=1)))
    assert relerr <= 0.15
    assert tv <= 0.05
    assert time.perf_counter() - t0 < 600.0


# -- 4. epistemic uncertainty vs sample size ----------------------------------------

def test_acceptance_04_mi_vs_sample_size():
    t0 = time.perf_counter()
    test = make_gaussian_mixture(2000, seed=777)
    sizes = (300, 3000, 30000)

    def run(loss):
        accs, mis = [], []
        for n in sizes:
            seed_mis, seed_accs = [], []
            for seed in range(5):
                base = SweepBase(loss=loss, n_train=n, teacher_m=10, epochs=200)
                m = fit_point(base, seed=seed)
                seed_mis.append(float(_model_scores(m, test.xs)["mi"].mean()))
                preds = np.argmax(m.forward(test.xs)[0], axis=1)
                seed_accs.append(float(np.mean(preds == test.ys)))
            accs.append(float(np.mean(seed_accs)))
            mis.append(float(np.mean(seed_mis)))
        return accs, mis

    rkl_acc, rkl_mi = run("RKL")
    assert all(a <= b + 1e-12 for a, b in zip(rkl_acc, rkl_acc[1:]))
    spread = (max(rkl_mi) - min(rkl_mi)) / max(rkl_mi)
    assert spread < 0.25

    _, dist_mi = run("BOOTSTRAP-DISTILL")
    assert all(a > b for a, b in zip(dist_mi, dist_mi[1:]))
    assert dist_mi[-1] < 0.5 * dist_mi[0]
    assert time.perf_counter() - t0 < 1800.0


# -- 5. aleatoric uncertainty vs lambda ----------------------------------------------

def test_acceptance_05_aleatoric_vs_lambda():
    t0 = time.perf_counter()
    test = make_gaussian_mixture(1000, noise_rate=0.2, seed=99)
    means = {}
    for lam in (1e-1, 1e-4):
        ds = make_gaussian_mixture(3000, noise_rate=0.2, seed=0)
        spec = LossSpec(kind="RKL", lam=lam)
        model = MetaModel(2, 3, seed=0)
        train(model, ds, make_batch_objective(spec), TrainSchedule(epochs=50),
              seed=0, eval_objective=make_eval_objective(spec))
        means[lam] = float(_model_scores(model, test.xs)["aleatoric"].mean())
    assert max(means.values()) / min(means.values()) >= 1.5
    assert time.perf_counter() - t0 < 600.0


# -- 6. OOD AUROC vs lambda ------------------------------------------------------------

def test_acceptance_06_ood_auroc_vs_lambda():
    t0 = time.perf_counter()
    box = OodSource("uniform-box")
    kinds = ("uniform-box", "ring", "shifted-gaussian")
    test = make_gaussian_mixture(1000, seed=99)
    curves = {k: [] for k in kinds}
    for lam in (1e-4, 1e-3, 1e-2, 1e-1):
        ds = make_gaussian_mixture(3000, seed=0)
        spec = LossSpec(kind="RKL", lam=lam, gamma_ood=1.0, ood=box)
        model = MetaModel(2, 3, seed=0)
        train(model, ds, make_batch_objective(spec), TrainSchedule(epochs=50),
              seed=0, eval_objective=make_eval_objective(spec))
        for kind in kinds:
            res = ood_experiment(model, test, OodSource(kind), "mi", seed=5)
            curves[kind].append(dict(res.rows)["auroc"])

    def non_increasing(vals):
        rises = [(b - a) for a, b in zip(vals, vals[1:]) if b > a]
        return len(rises) <= 1 and all(r <= 0.02 for r in rises)

    passing = sum(non_increasing(curves[k]) for k in kinds)
    assert passing >= 2, {k: np.round(v, 4).tolist() for k, v in curves.items()}
    assert time.perf_counter() - t0 < 1200.0


# -- 7. distillation superiority ----------------------------------------------------------

def test_acceptance_07_distill_superiority():
    t0 = time.perf_counter()
    src = OodSource("uniform-box")
    means = {}
    for loss in ("RKL", "BOOTSTRAP-DISTILL"):
        oods, sels = [], []
        for seed in range(5):
            base = SweepBase(loss=loss, lam=1e-2, n_train=3000, noise_rate=0.2,
                             teacher_m=10, epochs=200)
            m = fit_point(base, seed=seed)
            test = make_gaussian_mixture(1000, noise_rate=0.2, seed=seed + 777_000)
            oods.append(dict(
                ood_experiment(m, test, src, "mi", seed=seed + 555_000).rows
            )["auroc"])
            sels.append(dict(selective_experiment(m, test, "ent").rows)["auroc"])
        means[loss] = (float(np.mean(oods)), float(np.mean(sels)))
    assert means["BOOTSTRAP-DISTILL"][0] >= means["RKL"][0] - 0.02, means
    assert means["BOOTSTRAP-DISTILL"][1] >= means["RKL"][1] - 0.02, means
    assert time.perf_counter() - t0 < 2400.0


# -- 8. gradients through both heads ----------------------------------------------------

def test_acceptance_08_gradients_both_heads(rng):
    t0 = time.perf_counter()
    counts = np.array([4.0, 3.0, 5.0])
    for i in range(20):
        kind = LOSS_KINDS[i % len(LOSS_KINDS)]
        head = "direct" if i % 2 == 0 else "density"
        if head == "direct":
            model = MetaModel(2, 3, hidden=(6, 5), seed=i)
        else:
            model = MetaModel(2, 3, hidden=(6, 5), head="density",
                              class_counts=counts, latent_dim=3, seed=i)
        xs = rng.normal(scale=2.0, size=(4, 2))
        ys = rng.integers(0, 3, size=4)
        lam = float(10.0 ** rng.uniform(-2, 0))
        pis = rng.dirichlet(np.ones(3) * 3.0, size=(4, 5))

        def loss_and_grad(m):
            alpha, cache = m.forward(xs)
            if kind == "DISTILL":
                vals, dalpha = loss_distill(alpha, pis)
            else:
                spec = LossSpec(kind=kind, lam=lam)
                vals, dalpha = id_loss(spec, alpha, ys)
            return float(vals.mean()), m.backward(cache, dalpha / len(vals))

        value, grad = loss_and_grad(model)

        def f(p):
            model.set_params(p)
            return loss_and_grad(model)[0]

        approx = fd_grad(f, model.get_params(), step=1e-5)
        # central differences cannot resolve components below the roundoff
        # level eps * |f| / step; floor the denominator there
        floor = max(1e-6, 1e-4 * abs(value))
        denom = np.maximum(np.maximum(np.abs(approx), np.abs(grad)), floor)
        assert float(np.max(np.abs(approx - grad) / denom)) <= 1e-4, (kind, head)
    assert time.perf_counter() - t0 < 60.0


# -- 9. ranking metrics vs brute force -----------------------------------------------------

def _brute_auroc(pos, neg):
    total = sum(1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def _brute_aupr(pos, neg):
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(list(pos) + list(neg)), reverse=True):
        tp = sum(1 for p in pos if p >= t)
        fp = sum(1 for n in neg if n >= t)
        recall = tp / len(pos)
        ap += (recall - prev_recall) * tp / (tp + fp)
        prev_recall = recall
    return ap


def test_acceptance_09_ranking_metrics_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        pos = rng.integers(0, 4, size=int(rng.integers(1, 9))).astype(float)
        neg = rng.integers(0, 4, size=int(rng.integers(1, 9))).astype(float)
        s = ScoredBinary(pos, neg)
        assert auroc(s) == pytest.approx(_brute_auroc(pos, neg), abs=1e-12)
        assert aupr(s) == pytest.approx(_brute_aupr(pos, neg), abs=1e-12)
    assert time.perf_counter() - t0 < 5.0


# -- 10. special-function spot values ---------------------------------------------------------

def test_acceptance_10_special_values():
    t0 = time.perf_counter()
    assert abs(digamma(1.0) + EULER_GAMMA) <= 1e-10
    assert abs(digamma(2.0) - (1.0 - EULER_GAMMA)) <= 1e-10
    assert abs(trigamma(1.0) - math.pi ** 2 / 6.0) <= 1e-10
    assert abs(lgamma(0.5) - 0.5 * math.log(math.pi)) <= 1e-10
    assert abs(lgamma(1.0)) <= 1e-10
    assert abs(lgamma(5.0) - math.log(24.0)) <= 1e-10
    assert time.perf_counter() - t0 < 1.0


# -- 11. sweep determinism -----------------------------------------------------------------------

def test_acceptance_11_sweep_determinism(tmp_path):
    base = SweepBase(loss="RKL", n_train=300, n_test=100, epochs=5)
    paths = []
    for name in ("first.csv", "second.csv"):
        results = sweep("lambda", [1e-2, 1e-1], base, seeds=(0, 1))
        path = tmp_path / name
        write_sweep_csv(path, results)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
