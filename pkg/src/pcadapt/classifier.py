"""A small permutation-invariant point-cloud classifier.

Per-point encoder (two tanh layers), max pooling over points, linear
softmax head. All gradients are written out by hand so they can be
checked against finite differences, and so the online consistency
update can freeze the head exactly (bitwise) while adapting the encoder.
tanh keeps the loss smooth everywhere; max-pool ties route the gradient
to the lowest point index for determinism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import as_points
from .errors import EmptyDataset, ShapeMismatch
from .rng import stream

ENCODER_KEYS = ("W1", "b1", "W2", "b2")
HEAD_KEYS = ("W3", "b3")
PROB_FLOOR = 1e-12

CHECKPOINT_FORMAT = 1


@dataclass
class PointClassifier:
    W1: np.ndarray  # (3, H)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (H, H)
    b2: np.ndarray  # (H,)
    W3: np.ndarray  # (H, C)
    b3: np.ndarray  # (C,)

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def classes(self) -> int:
        return self.W3.shape[1]

    @staticmethod
    def init(classes: int, hidden: int = 64, seed: int = 0) -> "PointClassifier":
        rng = stream(seed, "clf-init")
        return PointClassifier(
            W1=rng.standard_normal((3, hidden)) * np.sqrt(2.0 / 3.0),
            b1=np.zeros(hidden),
            W2=rng.standard_normal((hidden, hidden)) * np.sqrt(2.0 / hidden),
            b2=np.zeros(hidden),
            W3=rng.standard_normal((hidden, classes)) * np.sqrt(2.0 / hidden),
            b3=np.zeros(classes),
        )

    def params(self) -> dict:
        return {k: getattr(self, k) for k in ENCODER_KEYS + HEAD_KEYS}

    def copy(self) -> "PointClassifier":
        return PointClassifier(**{k: v.copy() for k, v in self.params().items()})

    # --- persistence ---------------------------------------------------

    def save(self, path) -> None:
        obj = {
            "format": CHECKPOINT_FORMAT,
            "hidden": self.hidden,
            "classes": self.classes,
            "weights": {
                k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
                for k, v in self.params().items()
            },
        }
        with open(path, "w") as f:
            json.dump(obj, f)

    @staticmethod
    def load(path) -> "PointClassifier":
        with open(path) as f:
            obj = json.load(f)
        if obj.get("format") != CHECKPOINT_FORMAT:
            raise ShapeMismatch(f"unsupported checkpoint format {obj.get('format')!r}")
        weights = {}
        for k, spec in obj["weights"].items():
            weights[k] = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        return PointClassifier(**weights)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_single(model: PointClassifier, pts: np.ndarray):
    z1 = np.tanh(pts @ model.W1 + model.b1)          # (N, H)
    z2 = np.tanh(z1 @ model.W2 + model.b2)           # (N, H)
    pool_idx = np.argmax(z2, axis=0)                 # lowest index on ties
    pooled = z2[pool_idx, np.arange(z2.shape[1])]    # (H,)
    logits = pooled @ model.W3 + model.b3
    probs = _softmax(logits)
    return {"pts": pts, "z1": z1, "z2": z2, "pool_idx": pool_idx,
            "pooled": pooled, "logits": logits, "probs": probs}


def predict(model: PointClassifier, pc) -> np.ndarray:
    """Class probabilities for one classifier-normalized cloud."""
    return _forward_single(model, as_points(pc))["probs"]


def _backprop_from_dlogits(model: PointClassifier, cache: dict, dlogits: np.ndarray,
                           include_head: bool) -> dict:
    grads = {}
    if include_head:
        grads["W3"] = np.outer(cache["pooled"], dlogits)
        grads["b3"] = dlogits.copy()
    dpooled = model.W3 @ dlogits                     # (H,)
    dz2 = np.zeros_like(cache["z2"])
    dz2[cache["pool_idx"], np.arange(dz2.shape[1])] = dpooled
    dpre2 = dz2 * (1.0 - cache["z2"] ** 2)
    grads["W2"] = cache["z1"].T @ dpre2
    grads["b2"] = dpre2.sum(axis=0)
    dz1 = dpre2 @ model.W2.T
    dpre1 = dz1 * (1.0 - cache["z1"] ** 2)
    grads["W1"] = cache["pts"].T @ dpre1
    grads["b1"] = dpre1.sum(axis=0)
    return grads


def cross_entropy_loss_grad(model: PointClassifier, pc, label: int) -> tuple[float, dict]:
    """Single-cloud cross-entropy and its gradient over all parameters."""
    cache = _forward_single(model, as_points(pc))
    p = cache["probs"]
    loss = -float(np.log(max(p[label], PROB_FLOOR)))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, _backprop_from_dlogits(model, cache, dlogits, include_head=True)


def train_source(model: PointClassifier, dataset: list, epochs: int, lr: float,
                 seed: int, batch_size: int = 16) -> PointClassifier:
    """Mini-batch gradient descent on cross-entropy over labeled clouds.

    Deterministic given the seed (epoch shuffles come from derived
    streams). Returns the same model object, trained in place.
    """
    if len(dataset) == 0:
        raise EmptyDataset("no training clouds")
    clouds = [as_points(c) for c in dataset]
    labels = [c.label for c in dataset]
    if any(l is None for l in labels):
        raise EmptyDataset("training clouds must carry labels")
    n_pts = clouds[0].shape[0]
    if any(c.shape[0] != n_pts for c in clouds):
        raise ShapeMismatch("training clouds must share one point count")
    X = np.stack(clouds)                             # (B, N, 3)
    y = np.asarray(labels, dtype=np.int64)

    for epoch in range(epochs):
        order = stream(seed, "train-epoch", epoch).permutation(len(dataset))
        for start in range(0, len(dataset), batch_size):
            idx = order[start:start + batch_size]
            _sgd_batch(model, X[idx], y[idx], lr)
    return model


def _sgd_batch(model: PointClassifier, X: np.ndarray, y: np.ndarray, lr: float) -> float:
    B, N, _ = X.shape
    z1 = np.tanh(X @ model.W1 + model.b1)            # (B, N, H)
    z2 = np.tanh(z1 @ model.W2 + model.b2)
    pool_idx = np.argmax(z2, axis=1)                 # (B, H)
    b_ix = np.arange(B)[:, None]
    h_ix = np.arange(z2.shape[2])[None, :]
    pooled = z2[b_ix, pool_idx, h_ix]                # (B, H)
    logits = pooled @ model.W3 + model.b3
    probs = _softmax(logits)
    loss = float(-np.log(np.maximum(probs[np.arange(B), y], PROB_FLOOR)).mean())

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    gW3 = pooled.T @ dlogits
    gb3 = dlogits.sum(axis=0)
    dpooled = dlogits @ model.W3.T                   # (B, H)
    dz2 = np.zeros_like(z2)
    dz2[b_ix, pool_idx, h_ix] = dpooled
    dpre2 = dz2 * (1.0 - z2 ** 2)
    gW2 = np.einsum("bnh,bnk->hk", z1, dpre2)
    gb2 = dpre2.sum(axis=(0, 1))
    dz1 = dpre2 @ model.W2.T
    dpre1 = dz1 * (1.0 - z1 ** 2)
    gW1 = np.einsum("bnd,bnh->dh", X, dpre1)
    gb1 = dpre1.sum(axis=(0, 1))

    model.W1 -= lr * gW1
    model.b1 -= lr * gb1
    model.W2 -= lr * gW2
    model.b2 -= lr * gb2
    model.W3 -= lr * gW3
    model.b3 -= lr * gb3
    return loss


def evaluate_accuracy(model: PointClassifier, dataset: list) -> float:
    correct = sum(
        1 for c in dataset if int(np.argmax(predict(model, c))) == c.label
    )
    return correct / len(dataset)


# --- online consistency adaptation ------------------------------------------


def kl_divergence(p, q) -> float:
    """sum_c p_c log(p_c / q_c), probabilities floored at 1e-12 inside the log."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return float((p * (np.log(np.maximum(p, PROB_FLOOR)) - np.log(np.maximum(q, PROB_FLOOR)))).sum())


def kl_consistency_loss(model: PointClassifier, x, adapted: list) -> tuple[float, dict]:
    """sum_j KL(f(x) || f(y_j)) and its gradient over the encoder.

    The gradient flows through both distributions; the head's gradient is
    intentionally not computed (frozen by contract).
    """
    cache_x = _forward_single(model, as_points(x))
    p = np.maximum(cache_x["probs"], PROB_FLOOR)
    logp = np.log(p)

    grads = {k: np.zeros_like(getattr(model, k)) for k in ENCODER_KEYS}
    loss = 0.0
    du_total = np.zeros_like(p)
    for yj in adapted:
        cache_y = _forward_single(model, as_points(yj))
        q = np.maximum(cache_y["probs"], PROB_FLOOR)
        logq = np.log(q)
        klj = kl_divergence(cache_x["probs"], cache_y["probs"])
        loss += klj
        # d KL / d logits(x): p * ((log p - log q) - KL)
        du_total += cache_x["probs"] * ((logp - logq) - klj)
        # d KL / d logits(y_j): q - p
        gy = _backprop_from_dlogits(model, cache_y, cache_y["probs"] - cache_x["probs"],
                                    include_head=False)
        for k in ENCODER_KEYS:
            grads[k] += gy[k]
    gx = _backprop_from_dlogits(model, cache_x, du_total, include_head=False)
    for k in ENCODER_KEYS:
        grads[k] += gx[k]
    return loss, grads


@dataclass
class OnlineConfig:
    """Settings for online model adaptation."""

    update_steps: int = 1            # model updates per batch
    lr: float | None = None          # None -> 1e-5 for batches > 1, else 1e-6
    votes: int = 3                   # transformations per instance for consistency
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def resolved_lr(self, batch_size: int) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-5 if batch_size > 1 else 1e-6


class AdamW:
    """Decoupled-weight-decay Adam over a dict of arrays."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
        self.beta1, self.beta2, self.eps, self.wd = beta1, beta2, eps, weight_decay
        self.step_count = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= lr * ((self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
                               + self.wd * params[k])


class OnlineAdapter:
    """Holds the evolving model + optimizer state across batches."""

    def __init__(self, model: PointClassifier, cfg: OnlineConfig):
        self.model = model
        self.cfg = cfg
        self.opt = AdamW(cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)

    def update(self, batch: list, batch_size_for_lr: int | None = None) -> float:
        """One online step: batch is a list of (x, [adapted clouds]) pairs.

        Runs cfg.update_steps AdamW steps on the summed consistency loss.
        Head parameters are never touched. Returns the last loss value.
        """
        lr = self.cfg.resolved_lr(batch_size_for_lr if batch_size_for_lr is not None else len(batch))
        last = 0.0
        for _ in range(self.cfg.update_steps):
            total = 0.0
            grads = {k: np.zeros_like(getattr(self.model, k)) for k in ENCODER_KEYS}
            for x, adapted in batch:
                loss, g = kl_consistency_loss(self.model, x, adapted)
                total += loss
                for k in ENCODER_KEYS:
                    grads[k] += g[k]
            enc_params = {k: getattr(self.model, k) for k in ENCODER_KEYS}
            self.opt.step(enc_params, grads, lr)
            last = total
        return last


def online_update(model: PointClassifier, batch: list, cfg: OnlineConfig,
                  adapter: OnlineAdapter | None = None) -> OnlineAdapter:
    """Convenience wrapper: create (or reuse) an adapter and apply one batch."""
    if adapter is None:
        adapter = OnlineAdapter(model, cfg)
    adapter.update(batch)
    return adapter
