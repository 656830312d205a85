"""Batch front-end: seeded, config-driven runs that write CSVs, checkpoints
and SVG charts plus a manifest of artifact hashes.

Exit codes: 0 success, 2 config/usage error, 3 numeric failure in training.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np
import yaml

from . import charts
from .data import (
    LabeledSet,
    OodSource,
    make_gaussian_mixture,
    read_labeled_csv,
    sample_ood,
    write_labeled_csv,
    write_unlabeled_csv,
)
from .evalmetrics import (
    SweepBase,
    ood_experiment,
    read_sweep_csv,
    selective_experiment,
    sweep,
    write_sweep_csv,
)
from .model import MetaModel, NumericalError, TrainSchedule, train
from .objectives import LOSS_KINDS, LossSpec, make_batch_objective, make_eval_objective
from .teachers import (
    AnnealSchedule,
    distill,
    load_bank,
    save_bank,
    train_teachers,
)

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    """Bad config file or usage; maps to exit code 2."""


# -- config plumbing ---------------------------------------------------------

_COMMON_KEYS = {"version": None, "seed": None, "out": None}
_DATA_KEYS = {"path": None, "n": None, "noise_rate": None}
_LOSS_KEYS = {
    "kind": None, "lambda": None, "alpha0": None, "gamma_ood": None,
    "ood_kind": None, "fkl_aux_weight": None,
}
_MODEL_KEYS = {"hidden": None, "head": None, "latent_dim": None}
_SCHED_KEYS = {
    "epochs": None, "batch_size": None, "patience": None, "lr": None,
    "val_fraction": None,
}

SCHEMAS = {
    "gen-data": {
        **_COMMON_KEYS,
        "n": None, "noise_rate": None,
        "ood": {"kind": None, "n": None},
    },
    "train": {
        **_COMMON_KEYS,
        "data": _DATA_KEYS, "loss": _LOSS_KEYS, "model": _MODEL_KEYS,
        "schedule": _SCHED_KEYS,
    },
    "distill": {
        **_COMMON_KEYS,
        "data": _DATA_KEYS,
        "teacher": {"kind": None, "m": None, "dropout_rate": None},
        "anneal": {"t0": None, "decay_epochs": None},
        "model": {"hidden": None},
        "schedule": _SCHED_KEYS,
    },
    "eval": {
        **_COMMON_KEYS,
        "model": None, "bank": None, "data": _DATA_KEYS,
        "tasks": None, "ood_kinds": None, "ood_metrics": None,
        "selective_metrics": None, "n_ood": None,
    },
    "sweep": {
        **_COMMON_KEYS,
        "kind": None, "grid": None, "seeds": None,
        "base": {
            "loss": None, "lambda": None, "n_train": None, "n_test": None,
            "noise_rate": None, "gamma_ood": None, "ood_kind": None,
            "epochs": None, "patience": None, "batch_size": None,
            "teacher_m": None,
        },
    },
}


def _check_keys(node, allowed, path=""):
    if not isinstance(node, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be a mapping")
    for key, value in node.items():
        if key not in allowed:
            loc = f"{path}.{key}" if path else key
            raise ConfigError(
                f"unknown config key '{loc}'; allowed here: {', '.join(sorted(allowed))}"
            )
        sub = allowed[key]
        if isinstance(sub, dict) and value is not None:
            _check_keys(value, sub, f"{path}.{key}" if path else key)


def load_config(path, command, overrides) -> dict:
    if path is None:
        cfg = {}
    else:
        try:
            with open(path) as fh:
                cfg = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as e:
            raise ConfigError(f"could not parse config: {e}")
    _check_keys(cfg, SCHEMAS[command])
    version = cfg.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}; expected {CONFIG_VERSION}")
    cfg["version"] = CONFIG_VERSION
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    cfg.setdefault("seed", 0)
    if not cfg.get("out"):
        raise ConfigError("an output directory is required (config 'out' or --out)")
    return cfg


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def finalize_run(cfg: dict, command: str, artifacts: list[str]) -> None:
    """Write the resolved config and a manifest with artifact hashes."""
    out = cfg["out"]
    cfg_path = os.path.join(out, "config.yaml")
    with open(cfg_path, "w") as fh:
        yaml.safe_dump({"command": command, **cfg}, fh, sort_keys=True)
    manifest = {
        "command": command,
        "artifacts": {
            os.path.relpath(a, out): _sha256(a) for a in sorted(artifacts)
        },
        "config": os.path.basename(cfg_path),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _resolve_dataset(cfg: dict, seed: int) -> LabeledSet:
    data = cfg.get("data") or {}
    if data.get("path"):
        return read_labeled_csv(data["path"])
    n = int(data.get("n", 3000))
    if n < 1:
        raise ConfigError("data.n must be >= 1")
    return make_gaussian_mixture(n, noise_rate=float(data.get("noise_rate", 0.0)), seed=seed)


def _resolve_schedule(cfg: dict) -> TrainSchedule:
    s = cfg.get("schedule") or {}
    return TrainSchedule(
        epochs=int(s.get("epochs", 50)),
        batch_size=int(s.get("batch_size", 64)),
        patience=int(s.get("patience", 10)),
        lr=float(s.get("lr", 1e-3)),
        val_fraction=float(s.get("val_fraction", 0.2)),
    )


def _resolve_loss(cfg: dict) -> LossSpec:
    loss = cfg.get("loss") or {}
    kind = str(loss.get("kind", "RKL")).upper()
    if kind not in LOSS_KINDS or kind == "DISTILL":
        valid = ", ".join(k for k in LOSS_KINDS if k != "DISTILL")
        raise ConfigError(f"unknown loss kind '{kind}'; valid kinds for train: {valid}")
    gamma = float(loss.get("gamma_ood", 0.0))
    ood = OodSource(loss["ood_kind"]) if loss.get("ood_kind") else None
    try:
        return LossSpec(
            kind=kind,
            alpha0=np.array(loss["alpha0"], float) if loss.get("alpha0") else None,
            lam=float(loss.get("lambda", 1e-2)),
            gamma_ood=gamma,
            ood=ood,
            fkl_aux_weight=float(loss.get("fkl_aux_weight", 1.0)),
        )
    except ValueError as e:
        raise ConfigError(str(e))


def _write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_loss),
                        repr(rec.val_acc)])


# -- subcommands --------------------------------------------------------------

def cmd_gen_data(cfg: dict, args) -> None:
    n = int(cfg.get("n", 3000))
    if n < 1:
        raise ConfigError("n must be >= 1")
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    ds = make_gaussian_mixture(n, noise_rate=float(cfg.get("noise_rate", 0.0)),
                               seed=cfg["seed"])
    data_path = os.path.join(out, "data.csv")
    write_labeled_csv(data_path, ds)
    artifacts = [data_path]
    if cfg.get("ood"):
        src = OodSource(cfg["ood"].get("kind", "uniform-box"))
        xs = sample_ood(src, int(cfg["ood"].get("n", n)), seed=cfg["seed"] + 1)
        ood_path = os.path.join(out, "ood.csv")
        write_unlabeled_csv(ood_path, xs)
        artifacts.append(ood_path)
    finalize_run(cfg, "gen-data", artifacts)


def cmd_train(cfg: dict, args) -> None:
    spec = _resolve_loss(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    ds = _resolve_dataset(cfg, cfg["seed"])
    mcfg = cfg.get("model") or {}
    head = mcfg.get("head", "direct")
    counts = None
    if head == "density":
        counts = np.bincount(ds.ys, minlength=ds.n_classes).astype(float)
    model = MetaModel(
        ds.xs.shape[1], ds.n_classes,
        hidden=tuple(mcfg.get("hidden", (64, 64, 64))),
        head=head,
        latent_dim=int(mcfg.get("latent_dim", 6)),
        alpha0=spec.resolved_alpha0(ds.n_classes),
        class_counts=counts,
        seed=cfg["seed"],
    )
    history = train(
        model, ds, make_batch_objective(spec), _resolve_schedule(cfg),
        seed=cfg["seed"], eval_objective=make_eval_objective(spec),
    )
    ckpt = os.path.join(out, "model.npz")
    hist = os.path.join(out, "history.csv")
    model.save(ckpt)
    _write_history_csv(hist, history)
    finalize_run(cfg, "train", [ckpt, hist])
    if history:
        print(f"trained {spec.kind}: {len(history)} epochs, "
              f"best val_loss {min(r.val_loss for r in history):.4f}")


def cmd_distill(cfg: dict, args) -> None:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    ds = _resolve_dataset(cfg, cfg["seed"])
    tcfg = cfg.get("teacher") or {}
    kind = tcfg.get("kind", "bootstrap")
    m = int(tcfg.get("m", 100))
    sched = _resolve_schedule(cfg)
    bank_dir = os.path.join(out, "bank")
    if os.path.exists(os.path.join(bank_dir, "manifest.json")):
        bank = load_bank(bank_dir)
        print(f"reusing existing bank: {bank.kind}, m={bank.m}")
    else:
        try:
            bank = train_teachers(
                kind, ds, m, seed=cfg["seed"], schedule=sched,
                dropout_rate=float(tcfg.get("dropout_rate", 0.2)),
                hidden=tuple((cfg.get("model") or {}).get("hidden", (64, 64, 64))),
            )
        except ValueError as e:
            raise ConfigError(str(e))
        save_bank(bank, bank_dir)
    acfg = cfg.get("anneal") or {}
    anneal = AnnealSchedule(
        t0=float(acfg.get("t0", 5.0)),
        decay_epochs=int(acfg.get("decay_epochs", 30)),
    )
    student = MetaModel(
        ds.xs.shape[1], ds.n_classes,
        hidden=tuple((cfg.get("model") or {}).get("hidden", (64, 64, 64))),
        seed=cfg["seed"],
    )
    history = distill(bank, student, ds, anneal, seed=cfg["seed"], schedule=sched)
    ckpt = os.path.join(out, "student.npz")
    student.save(ckpt)
    hist = os.path.join(out, "history.csv")
    with open(hist, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, vl in history:
            w.writerow([epoch, repr(tr), repr(vl)])
    artifacts = [ckpt, hist, os.path.join(bank_dir, "manifest.json")]
    finalize_run(cfg, "distill", artifacts)


def cmd_eval(cfg: dict, args) -> None:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    if bool(cfg.get("model")) == bool(cfg.get("bank")):
        raise ConfigError("eval needs exactly one of 'model' or 'bank'")
    tasks = cfg.get("tasks") or ["ood", "selective"]
    for task in tasks:
        if task not in ("ood", "selective"):
            raise ConfigError(f"unknown eval task '{task}'; valid: ood, selective")
    subject = MetaModel.load(cfg["model"]) if cfg.get("model") else load_bank(cfg["bank"])
    test = _resolve_dataset(cfg, cfg["seed"] + 777_000)
    rows = []
    for task in tasks:
        if task == "ood":
            for kind in cfg.get("ood_kinds") or ["uniform-box"]:
                src = OodSource(kind)
                for metric in cfg.get("ood_metrics") or ["mi"]:
                    res = ood_experiment(
                        subject, test, src, metric,
                        n_ood=cfg.get("n_ood"), seed=cfg["seed"],
                    )
                    for name, value in res.rows:
                        rows.append(["ood", metric, kind, name, repr(float(value))])
        elif task == "selective":
            for metric in cfg.get("selective_metrics") or ["ent"]:
                res = selective_experiment(subject, test, metric)
                for name, value in res.rows:
                    rows.append(["selective", metric, "", name, repr(float(value))])
    results = os.path.join(out, "results.csv")
    with open(results, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "metric_choice", "ood_kind", "metric", "value"])
        w.writerows(rows)
    artifacts = [results]
    if args.plot:
        svg = os.path.join(out, "results.svg")
        labels = [f"{r[0]}/{r[1]}/{r[2]}/{r[3]}".strip("/") for r in rows]
        charts.bar_chart(svg, labels, [float(r[4]) for r in rows],
                         title="evaluation metrics", ylabel="value")
        artifacts.append(svg)
    finalize_run(cfg, "eval", artifacts)


def cmd_sweep(cfg: dict, args) -> None:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    kind = cfg.get("kind", "lambda")
    if kind not in ("lambda", "samplesize"):
        raise ConfigError("sweep kind must be 'lambda' or 'samplesize'")
    default_grid = [1e-4, 1e-3, 1e-2, 1e-1] if kind == "lambda" else [300, 3000, 30000]
    grid = cfg.get("grid") or default_grid
    seeds = cfg.get("seeds") or [0, 1, 2, 3, 4]
    b = cfg.get("base") or {}
    base = SweepBase(
        loss=str(b.get("loss", "RKL")).upper(),
        lam=float(b.get("lambda", 1e-2)),
        n_train=int(b.get("n_train", 3000)),
        n_test=int(b.get("n_test", 1000)),
        noise_rate=float(b.get("noise_rate", 0.0)),
        gamma_ood=float(b.get("gamma_ood", 0.0)),
        ood=OodSource(b.get("ood_kind", "uniform-box")),
        epochs=int(b.get("epochs", 50)),
        patience=int(b.get("patience", 10)),
        batch_size=int(b.get("batch_size", 64)),
        teacher_m=int(b.get("teacher_m", 10)),
    )
    results = sweep(kind, grid, base, seeds=seeds, workers=args.workers or 1)
    csv_path = os.path.join(out, "results.csv")
    runtimes = os.path.join(out, "runtimes.csv")
    write_sweep_csv(csv_path, results, runtimes_path=runtimes)
    artifacts = [csv_path]
    if args.plot:
        svg = os.path.join(out, "sweep.svg")
        _plot_sweep(svg, csv_path, kind)
        artifacts.append(svg)
    finalize_run(cfg, "sweep", artifacts)


def _plot_sweep(svg_path, csv_path, kind) -> None:
    rows = read_sweep_csv(csv_path)
    xkey = "lambda" if kind == "lambda" else "n_train"
    xs = sorted({r[xkey] for r in rows})
    series = {}
    for metric in sorted({r["metric"] for r in rows}):
        ys = []
        for x in xs:
            vals = [r["value"] for r in rows if r[xkey] == x and r["metric"] == metric]
            ys.append(float(np.mean(vals)))
        series[metric] = ys
    charts.line_chart(
        svg_path, xs, series, title=f"{kind} sweep", xlabel=xkey,
        ylabel="seed-mean value", logx=(kind == "lambda"),
    )


# -- entry point ---------------------------------------------------------------

_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "distill": cmd_distill,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edlab",
        description="Evidential deep learning lab: data, training, distillation, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel jobs for sweeps")
        p.add_argument("--plot", action="store_true", help="emit SVG charts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, {"seed": args.seed, "out": args.out})
        _COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
