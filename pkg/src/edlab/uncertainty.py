"""Per-sample uncertainty decomposition from a predicted Dirichlet.

Total predictive entropy splits exactly into epistemic (mutual information)
plus aleatoric (expected categorical entropy) parts; dent and energy are the
two evidence-magnitude scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .dirichlet import (
    Dirichlet,
    diff_entropy,
    energy,
    expected_cat_entropy,
    mean,
    mutual_info,
    shannon_entropy,
)

UQ_COLUMNS = ("sample_id", "mi", "dent", "ent", "maxp", "aleatoric", "energy")


@dataclass(frozen=True)
class UQReport:
    """One sample's uncertainty scores.

    mi: epistemic (mutual information between label and pi)
    dent: differential entropy of the Dirichlet
    ent: Shannon entropy of the predictive mean (total uncertainty)
    maxp: max predictive-mean probability (confidence)
    aleatoric: expected categorical entropy
    energy: -log(sum alpha)
    """

    mi: float
    dent: float
    ent: float
    maxp: float
    aleatoric: float
    energy: float


def report(d: Dirichlet) -> UQReport:
    m = mean(d)
    return UQReport(
        mi=mutual_info(d),
        dent=diff_entropy(d),
        ent=shannon_entropy(m),
        maxp=float(m.max()),
        aleatoric=expected_cat_entropy(d),
        energy=energy(d),
    )


def report_batch(alphas: np.ndarray) -> list[UQReport]:
    return [report(Dirichlet(a)) for a in np.atleast_2d(alphas)]


def write_uq_csv(path, reports: list[UQReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UQ_COLUMNS)
        for i, r in enumerate(reports):
            w.writerow([i] + [repr(getattr(r, c)) for c in UQ_COLUMNS[1:]])


def read_uq_csv(path) -> list[UQReport]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != UQ_COLUMNS:
        raise ValueError("unexpected UQ CSV header")
    out = []
    for row in rows[1:]:
        vals = [float(v) for v in row[1:]]
        out.append(UQReport(*vals))
    return out


def scores_matrix(reports: list[UQReport]) -> dict[str, np.ndarray]:
    """Column arrays keyed by score name, for metric computations."""
    return {
        f.name: np.array([getattr(r, f.name) for r in reports])
        for f in fields(UQReport)
    }
