"""Feed-forward meta model x -> Dir(alpha(x)) with hand-written backprop.

The same backbone serves three roles: a direct-head meta model (alpha =
exp(clamped logits)), a density-head meta model (alpha = alpha0 + N_y *
Gaussian density in a learned latent space), and -- since the mean of the
direct head's Dirichlet is exactly a softmax -- a plain softmax classifier
for teacher training.

Parameters live in one flat float64 vector; layer matrices are reshaped
views into it, so optimizer steps, checkpoints and finite-difference checks
all operate on the same storage.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

LOGIT_CLAMP = 15.0
DENSITY_LOGP_MAX = 20.0
DENSITY_LOGP_MIN = -700.0


class NumericalError(RuntimeError):
    """Non-finite loss or gradient encountered during training."""


def _he_uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class MetaModel:
    """MLP backbone + direct or density head mapping x to alpha(x)."""

    def __init__(
        self,
        in_dim: int,
        n_classes: int,
        hidden=(64, 64, 64),
        head: str = "direct",
        clamp: float = LOGIT_CLAMP,
        latent_dim: int = 6,
        alpha0=None,
        class_counts=None,
        seed: int = 0,
    ):
        if head not in ("direct", "density"):
            raise ValueError(f"unknown head kind: {head}")
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.hidden = tuple(int(h) for h in hidden)
        self.head = head
        self.clamp = float(clamp)
        self.latent_dim = int(latent_dim)
        self.alpha0 = (
            np.ones(n_classes) if alpha0 is None else np.asarray(alpha0, float)
        )
        if head == "density":
            if class_counts is None:
                raise ValueError("density head requires per-class training counts")
            self.class_counts = np.asarray(class_counts, dtype=np.float64)
        else:
            self.class_counts = None

        self._shapes = self._build_shapes()
        self.params = np.zeros(sum(int(np.prod(s)) for _, s in self._shapes))
        self._views = {}
        off = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            self._views[name] = self.params[off : off + size].reshape(shape)
            off += size
        self._init_params(np.random.default_rng(seed))

    # -- parameter layout -------------------------------------------------
    def _build_shapes(self):
        dims = [self.in_dim, *self.hidden]
        shapes = []
        for i in range(len(dims) - 1):
            shapes.append((f"W{i}", (dims[i], dims[i + 1])))
            shapes.append((f"b{i}", (dims[i + 1],)))
        last = dims[-1]
        if self.head == "direct":
            shapes.append(("Wh", (last, self.n_classes)))
            shapes.append(("bh", (self.n_classes,)))
        else:
            shapes.append(("Wp", (last, self.latent_dim)))
            shapes.append(("bp", (self.latent_dim,)))
            shapes.append(("mu", (self.n_classes, self.latent_dim)))
            shapes.append(("logvar", (self.n_classes, self.latent_dim)))
        return shapes

    def _init_params(self, rng):
        dims = [self.in_dim, *self.hidden]
        for i in range(len(dims) - 1):
            self._views[f"W{i}"][...] = _he_uniform(rng, dims[i], self._views[f"W{i}"].shape)
            self._views[f"b{i}"][...] = 0.0
        if self.head == "direct":
            self._views["Wh"][...] = _he_uniform(rng, dims[-1], self._views["Wh"].shape)
            self._views["bh"][...] = 0.0
        else:
            self._views["Wp"][...] = _he_uniform(rng, dims[-1], self._views["Wp"].shape)
            self._views["bp"][...] = 0.0
            self._views["mu"][...] = rng.standard_normal(self._views["mu"].shape)
            self._views["logvar"][...] = 0.0

    def get_params(self) -> np.ndarray:
        return self.params.copy()

    def set_params(self, flat: np.ndarray) -> None:
        if flat.shape != self.params.shape:
            raise ValueError("parameter vector length mismatch")
        self.params[...] = flat

    # -- forward / backward ------------------------------------------------
    def forward(self, x, dropout_rate: float = 0.0, dropout_rng=None):
        """alpha (B, C) plus a cache for backward.

        x may be a single (d,) vector or a (B, d) batch.  With dropout_rate
        > 0 and an rng, inverted-dropout masks are applied after each ReLU
        (used both for training and for stochastic teacher inference).
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {x.shape[1]}")
        acts = [x]
        masks = []
        h = x
        n_hidden = len(self.hidden)
        for i in range(n_hidden):
            z = h @ self._views[f"W{i}"] + self._views[f"b{i}"]
            h = np.maximum(z, 0.0)
            if dropout_rate > 0.0:
                if dropout_rng is None:
                    raise ValueError("dropout requires an rng")
                mask = (dropout_rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
                h = h * mask
                masks.append(mask)
            acts.append(h)
        cache = {"acts": acts, "masks": masks, "single": single}
        if self.head == "direct":
            logits = h @ self._views["Wh"] + self._views["bh"]
            clipped = np.clip(logits, -self.clamp, self.clamp)
            alpha = np.exp(clipped)
            cache["logits"] = logits
            cache["alpha"] = alpha
        else:
            z = h @ self._views["Wp"] + self._views["bp"]
            mu, lv = self._views["mu"], self._views["logvar"]
            diff = z[:, None, :] - mu[None, :, :]  # (B, C, l)
            inv_var = np.exp(-lv)[None, :, :]
            logp = (
                -0.5 * self.latent_dim * np.log(2.0 * np.pi)
                - 0.5 * lv.sum(axis=1)[None, :]
                - 0.5 * np.sum(diff * diff * inv_var, axis=2)
            )
            logp_c = np.clip(logp, DENSITY_LOGP_MIN, DENSITY_LOGP_MAX)
            dens = np.exp(logp_c)
            alpha = self.alpha0[None, :] + self.class_counts[None, :] * dens
            cache.update(z=z, diff=diff, inv_var=inv_var, logp=logp, dens=dens)
            cache["alpha"] = alpha
        return (alpha[0], cache) if single else (alpha, cache)

    def backward(self, cache, dalpha) -> np.ndarray:
        """Chain-rule gradient of sum(loss) w.r.t. the flat parameter vector,
        given d(loss)/d(alpha) of shape matching forward's alpha output."""
        dalpha = np.asarray(dalpha, dtype=np.float64)
        if cache["single"]:
            dalpha = dalpha[None, :]
        grads = {name: np.zeros(shape) for name, shape in self._shapes}
        h = cache["acts"][-1]
        if self.head == "direct":
            logits, alpha = cache["logits"], cache["alpha"]
            active = (np.abs(logits) < self.clamp).astype(np.float64)
            dz = dalpha * alpha * active
            grads["Wh"] = h.T @ dz
            grads["bh"] = dz.sum(axis=0)
            dh = dz @ self._views["Wh"].T
        else:
            dens, logp = cache["dens"], cache["logp"]
            active = (
                (logp > DENSITY_LOGP_MIN) & (logp < DENSITY_LOGP_MAX)
            ).astype(np.float64)
            dlogp = dalpha * self.class_counts[None, :] * dens * active  # (B, C)
            diff, inv_var = cache["diff"], cache["inv_var"]
            scaled = diff * inv_var  # (B, C, l)
            dz = -np.einsum("bc,bcl->bl", dlogp, scaled)
            grads["mu"] = np.einsum("bc,bcl->cl", dlogp, scaled)
            grads["logvar"] = np.einsum("bc,bcl->cl", dlogp, 0.5 * diff * scaled - 0.5)
            grads["Wp"] = h.T @ dz
            grads["bp"] = dz.sum(axis=0)
            dh = dz @ self._views["Wp"].T
        for i in range(len(self.hidden) - 1, -1, -1):
            if cache["masks"]:
                dh = dh * cache["masks"][i]
            relu_grad = (cache["acts"][i + 1] > 0.0).astype(np.float64)
            # with dropout, acts already include the mask; positive iff pre-ReLU
            # was positive and the unit was kept, which is the correct gate
            dzi = dh * relu_grad
            grads[f"W{i}"] = cache["acts"][i].T @ dzi
            grads[f"b{i}"] = dzi.sum(axis=0)
            dh = dzi @ self._views[f"W{i}"].T
        return np.concatenate([grads[name].ravel() for name, _ in self._shapes])

    def logits(self, x) -> np.ndarray:
        """Unclamped head logits (direct head only); softmax of these is the
        Dirichlet mean."""
        if self.head != "direct":
            raise ValueError("logits are defined for the direct head only")
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        h = x
        for i in range(len(self.hidden)):
            h = np.maximum(h @ self._views[f"W{i}"] + self._views[f"b{i}"], 0.0)
        out = h @ self._views["Wh"] + self._views["bh"]
        return out[0] if single else out

    # -- checkpointing -----------------------------------------------------
    def arch_descriptor(self) -> dict:
        desc = {
            "format": "edlab-checkpoint-v1",
            "in_dim": self.in_dim,
            "n_classes": self.n_classes,
            "hidden": list(self.hidden),
            "head": self.head,
            "clamp": self.clamp,
            "latent_dim": self.latent_dim,
            "alpha0": self.alpha0.tolist(),
        }
        if self.class_counts is not None:
            desc["class_counts"] = self.class_counts.tolist()
        return desc

    def save(self, path) -> None:
        buf = io.BytesIO()
        np.savez(buf, meta=json.dumps(self.arch_descriptor()), params=self.params)
        with open(path, "wb") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "MetaModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            params = z["params"]
        if meta.get("format") != "edlab-checkpoint-v1":
            raise ValueError("unrecognized checkpoint format")
        m = cls(
            in_dim=meta["in_dim"],
            n_classes=meta["n_classes"],
            hidden=meta["hidden"],
            head=meta["head"],
            clamp=meta["clamp"],
            latent_dim=meta["latent_dim"],
            alpha0=np.array(meta["alpha0"]),
            class_counts=np.array(meta["class_counts"]) if "class_counts" in meta else None,
        )
        m.set_params(params)
        return m


@dataclass
class AdamState:
    """Bias-corrected adaptive-moment optimizer state."""

    n_params: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    t: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)


def adam_step(opt: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    if params.shape != grads.shape or params.shape != opt.m.shape:
        raise ValueError("shape mismatch in optimizer step")
    opt.t += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grads
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grads * grads
    mhat = opt.m / (1.0 - opt.beta1**opt.t)
    vhat = opt.v / (1.0 - opt.beta2**opt.t)
    return params - opt.lr * mhat / (np.sqrt(vhat) + opt.eps)


@dataclass
class TrainSchedule:
    epochs: int = 50
    batch_size: int = 64
    patience: int = 10
    lr: float = 1e-3
    val_fraction: float = 0.2
    dropout_rate: float = 0.0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


def split_train_val(n: int, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle; trailing fraction is validation."""
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n))) if val_fraction > 0 else 0
    if n_val >= n:
        raise ValueError("validation split leaves no training data")
    return perm[: n - n_val], perm[n - n_val :]


def train(
    model: MetaModel,
    dataset,
    batch_objective,
    schedule: TrainSchedule,
    seed: int = 0,
    eval_objective=None,
) -> list[EpochRecord]:
    """Mini-batch training loop shared by all objectives.

    batch_objective(model, xs, ys, rng) must return (mean_loss, flat_grad);
    eval_objective(model, xs, ys) returns the per-sample mean loss used for
    validation and early stopping (defaults to batch_objective's loss with a
    throwaway rng).  Returns per-epoch history; the model ends up with the
    best-validation parameters.
    """
    rng = np.random.default_rng(seed)
    if schedule.epochs <= 0:
        return []
    tr_idx, val_idx = split_train_val(len(dataset), schedule.val_fraction, rng)
    xs_tr, ys_tr = dataset.xs[tr_idx], dataset.ys[tr_idx]
    xs_val, ys_val = dataset.xs[val_idx], dataset.ys[val_idx]

    opt = AdamState(n_params=model.params.size, lr=schedule.lr)
    history: list[EpochRecord] = []
    best_loss = np.inf
    best_params = model.get_params()
    stall = 0

    def _val_loss():
        if eval_objective is not None:
            return eval_objective(model, xs_val, ys_val)
        loss, _ = batch_objective(model, xs_val, ys_val, np.random.default_rng(0))
        return loss

    for epoch in range(schedule.epochs):
        order = rng.permutation(len(xs_tr))
        losses = []
        for start in range(0, len(order), schedule.batch_size):
            bidx = order[start : start + schedule.batch_size]
            loss, grad = batch_objective(model, xs_tr[bidx], ys_tr[bidx], rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NumericalError(
                    f"non-finite loss/gradient at epoch {epoch}, batch {start // schedule.batch_size}: loss={loss}"
                )
            model.set_params(adam_step(opt, model.params, grad))
            losses.append(loss)
        val_loss = _val_loss()
        alpha_val, _ = model.forward(xs_val)
        val_acc = float(np.mean(np.argmax(alpha_val, axis=1) == ys_val))
        history.append(EpochRecord(epoch, float(np.mean(losses)), float(val_loss), val_acc))
        if val_loss < best_loss - 1e-12:
            best_loss = val_loss
            best_params = model.get_params()
            stall = 0
        else:
            stall += 1
            if stall >= schedule.patience:
                break
    model.set_params(best_params)
    return history
