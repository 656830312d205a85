"""Synthetic 2D Gaussian-mixture data with an exact Bayes oracle, OOD sources
and bootstrap subsampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import as_prob_vector

# Toy mixture: 3 equiprobable isotropic Gaussians in 2D.
MIXTURE_MEANS = np.array([[-2.0, 3.0], [0.0, 0.0], [2.0, 3.0]])
MIXTURE_VARIANCE = 0.25


@dataclass(frozen=True)
class MixtureSpec:
    """Generating mixture: class means, shared isotropic variance, priors,
    label-noise rate.  Carries everything eta_oracle needs."""

    means: np.ndarray = field(default_factory=lambda: MIXTURE_MEANS.copy())
    variance: float = MIXTURE_VARIANCE
    priors: np.ndarray = field(default_factory=lambda: np.full(3, 1.0 / 3.0))
    noise_rate: float = 0.0

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]


@dataclass
class LabeledSet:
    xs: np.ndarray  # (N, d)
    ys: np.ndarray  # (N,) int
    n_classes: int
    generator: MixtureSpec | None = None

    def __post_init__(self):
        if len(self.xs) != len(self.ys):
            raise ValueError("xs and ys must have equal length")
        if len(self.ys) and (self.ys.min() < 0 or self.ys.max() >= self.n_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.ys)

    def subset(self, idx: np.ndarray) -> "LabeledSet":
        return LabeledSet(self.xs[idx], self.ys[idx], self.n_classes, self.generator)


@dataclass(frozen=True)
class OodSource:
    """Geometric OOD source with support well separated from the ID mixture."""

    kind: str  # uniform-box | ring | shifted-gaussian
    low: float = -8.0
    high: float = 8.0
    radius: float = 10.0
    width: float = 0.2
    offset: tuple = (20.0, 20.0)
    variance: float = 0.25

    def __post_init__(self):
        if self.kind not in ("uniform-box", "ring", "shifted-gaussian"):
            raise ValueError(f"unknown OOD source kind: {self.kind}")


def make_gaussian_mixture(
    n: int, noise_rate: float = 0.0, seed: int = 0
) -> LabeledSet:
    """Sample n points from the 3-class toy mixture; labels flipped to a
    uniformly random other class with probability noise_rate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 <= noise_rate < 1.0):
        raise ValueError("noise_rate must be in [0, 1)")
    spec = MixtureSpec(noise_rate=noise_rate)
    rng = np.random.default_rng(seed)
    ys = rng.integers(0, spec.n_classes, size=n)
    xs = spec.means[ys] + np.sqrt(spec.variance) * rng.standard_normal((n, 2))
    if noise_rate > 0.0:
        flip = rng.random(n) < noise_rate
        shift = rng.integers(1, spec.n_classes, size=n)
        ys = np.where(flip, (ys + shift) % spec.n_classes, ys)
    return LabeledSet(xs, ys.astype(np.int64), spec.n_classes, spec)


def eta_oracle(spec: MixtureSpec, x) -> np.ndarray:
    """Exact Bayes posterior p(y|x) of the noisy mixture."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum((spec.means - x) ** 2, axis=1)
    # shared isotropic variance: normalizers cancel, use stable softmax form
    logits = -0.5 * sq / spec.variance + np.log(spec.priors)
    logits -= logits.max()
    clean = np.exp(logits)
    clean /= clean.sum()
    c = spec.n_classes
    if spec.noise_rate > 0.0:
        # observed label = clean label kept w.p. 1-r, else uniform over others
        r = spec.noise_rate
        noisy = (1.0 - r) * clean + r * (1.0 - clean) / (c - 1)
        return as_prob_vector(noisy)
    return as_prob_vector(clean)


def eta_oracle_batch(spec: MixtureSpec, xs: np.ndarray) -> np.ndarray:
    return np.stack([eta_oracle(spec, x) for x in xs])


def sample_ood(src: OodSource, n: int, seed: int = 0) -> np.ndarray:
    """n i.i.d. 2D draws from the OOD source."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if src.kind == "uniform-box":
        return rng.uniform(src.low, src.high, size=(n, 2))
    if src.kind == "ring":
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r = src.radius + rng.uniform(-src.width / 2, src.width / 2, size=n)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    mu = np.asarray(src.offset, dtype=np.float64)
    return mu + np.sqrt(src.variance) * rng.standard_normal((n, 2))


def bootstrap_split(
    dataset: LabeledSet, m: int, ratio: float, seed: int = 0
) -> list[LabeledSet]:
    """m subsets of size floor(ratio*N), each sampled without replacement."""
    if not (0.0 < ratio <= 1.0):
        raise ValueError("ratio must be in (0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    size = int(ratio * len(dataset))
    if size < 1:
        raise ValueError("ratio * N must be at least 1")
    rng = np.random.default_rng(seed)
    subsets = []
    for _ in range(m):
        idx = rng.permutation(len(dataset))[:size]
        subsets.append(dataset.subset(idx))
    return subsets


def write_labeled_csv(path, dataset: LabeledSet) -> None:
    d = dataset.xs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(d)] + ["y"])
        for x, y in zip(dataset.xs, dataset.ys):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def read_labeled_csv(path, n_classes: int | None = None) -> LabeledSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "y":
        raise ValueError("labeled CSV must end with a y column")
    xs = np.array([[float(v) for v in row[:-1]] for row in body])
    ys = np.array([int(row[-1]) for row in body], dtype=np.int64)
    c = n_classes if n_classes is not None else int(ys.max()) + 1
    return LabeledSet(xs, ys, c)


def write_unlabeled_csv(path, xs: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(xs.shape[1])])
        for x in xs:
            w.writerow([repr(float(v)) for v in x])


def read_unlabeled_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row] for row in rows[1:]])
