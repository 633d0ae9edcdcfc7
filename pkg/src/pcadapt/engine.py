"""Diffusion-guided input adaptation.

Each test cloud x is aligned to the source domain by optimizing a
rotation (6D-parameterized) plus a per-point displacement so that the
transformed cloud y = (x + delta) R^T stays close, in Chamfer distance,
to the denoised estimate produced by a source-domain denoiser at a
randomly drawn small timestep. The denoised target is treated as a
constant each step (no backpropagation through the denoiser); updates
use AdaMax under a warmup/decay learning-rate ramp, and the displacement
penalty weight is cosine-annealed. Repeating the loop K times with
independent noise streams yields K candidate transformations whose
class predictions can be averaged (voting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import as_points
from .errors import ConfigError, EmptyVoteSet, ShapeMismatch
from .geometry import (
    Rotation6D,
    chamfer,
    chamfer_with_grad,
    knn,
    rotation_from_6d,
    rotation_jacobian,
    squared_l2,
    squared_l2_grad,
)
from .rng import stream
from .schedule import NoiseSchedule, TimestepRange, forward_noise, estimate_x0, sample_timestep

DUPLICATE_WEIGHT_CAP = 1e12


@dataclass
class AdaptConfig:
    """Hyperparameters of the input-adaptation loop."""

    steps: int = 30
    votes: int = 5
    knn_k: int = 5
    t_range: TimestepRange = field(default_factory=TimestepRange)
    lr_peak: float = 0.2
    lr_final: float = 0.01
    warmup_steps: int | None = None  # None -> ceil(0.2 * steps)
    lambda_init: float = 10.0
    lambda_final: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adamax_eps: float = 1e-8
    seed: int = 0
    objective: str = "chamfer"  # or "squared_l2"
    parameterization: str = "rotation"  # or "affine"
    reg_mode: str = "knn"  # "knn" | "uniform" | "none"
    optimizer: str = "adamax"  # or "gd" (plain descent)

    def __post_init__(self):
        if isinstance(self.t_range, (list, tuple)):
            self.t_range = TimestepRange(*self.t_range)
        if self.steps < 1 or self.votes < 1:
            raise ConfigError("steps and votes must be >= 1")
        if self.lr_peak <= 0 or self.lr_final <= 0:
            raise ConfigError("learning rates must be positive")
        self.warmup()  # raises if warmup_steps > steps

    def warmup(self) -> int:
        w = math.ceil(0.2 * self.steps) if self.warmup_steps is None else self.warmup_steps
        if w > self.steps:
            raise ConfigError("warmup_steps must be <= steps")
        return w

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["t_range"] = [self.t_range.t_min, self.t_range.t_max]
        return d

    @staticmethod
    def from_dict(d: dict) -> "AdaptConfig":
        known = set(AdaptConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown AdaptConfig keys: {sorted(unknown)}")
        return AdaptConfig(**d)


@dataclass
class TransformParams:
    """Optimization variables: 6D rotation seed (or affine map) + displacement."""

    delta: np.ndarray
    rot: Rotation6D | None = None
    affine: np.ndarray | None = None

    @staticmethod
    def identity(n: int, parameterization: str = "rotation") -> "TransformParams":
        delta = np.zeros((n, 3))
        if parameterization == "rotation":
            return TransformParams(delta=delta, rot=Rotation6D.identity())
        if parameterization == "affine":
            return TransformParams(delta=delta, affine=np.eye(3))
        raise ConfigError(f"unknown parameterization {parameterization!r}")

    def matrix(self) -> np.ndarray:
        return rotation_from_6d(self.rot) if self.rot is not None else self.affine


def apply_transform(x, params: TransformParams) -> np.ndarray:
    """y = (x + delta) R^T, i.e. each point mapped to R (x_j + delta_j)."""
    pts = as_points(x)
    if params.delta.shape != pts.shape:
        raise ShapeMismatch(f"delta shape {params.delta.shape} != points shape {pts.shape}")
    return (pts + params.delta) @ params.matrix().T


def compute_reg_weights(x, k: int) -> np.ndarray:
    """Per-point displacement-penalty weights, inverse kNN-distance based.

    w_i = 1 / sum of distances to the k nearest neighbors, normalized to
    sum 1; isolated points get small weight (more freedom to move).
    Duplicate points (zero distance sum) are capped before normalization.
    """
    pts = as_points(x)
    idx = knn(pts, k)
    diffs = pts[idx] - pts[:, None, :]
    d = np.sqrt((diffs * diffs).sum(axis=2))
    sums = d.sum(axis=1)
    w = np.empty_like(sums)
    nonzero = sums > 0
    w[nonzero] = 1.0 / sums[nonzero]
    w[~nonzero] = DUPLICATE_WEIGHT_CAP
    np.minimum(w, DUPLICATE_WEIGHT_CAP, out=w)
    return w / w.sum()


def uniform_reg_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass
class LossGrads:
    loss: float
    data_term: float
    reg_term: float
    grad_delta: np.ndarray
    grad_a1: np.ndarray | None = None
    grad_a2: np.ndarray | None = None
    grad_affine: np.ndarray | None = None


def adaptation_loss(x, params: TransformParams, target, w: np.ndarray, lam: float,
                    objective: str = "chamfer") -> LossGrads:
    """Loss D(stopgrad(target), y) + lam * sum_j w_j ||delta_j||^2 and its
    exact gradients with respect to the transform parameters."""
    pts = as_points(x)
    tgt = as_points(target)
    mat = params.matrix()
    moved = pts + params.delta
    y = moved @ mat.T

    if objective == "chamfer":
        data_term, g = chamfer_with_grad(tgt, y)
    elif objective == "squared_l2":
        data_term = squared_l2(tgt, y)
        g = squared_l2_grad(tgt, y)
    else:
        raise ConfigError(f"unknown objective {objective!r}")

    reg_term = float(lam * (w * (params.delta * params.delta).sum(axis=1)).sum())
    grad_delta = g @ mat + 2.0 * lam * w[:, None] * params.delta
    grad_mat = g.T @ moved  # dD/dR with y_j = R (x_j + delta_j)

    out = LossGrads(
        loss=data_term + reg_term,
        data_term=data_term,
        reg_term=reg_term,
        grad_delta=grad_delta,
    )
    if params.rot is not None:
        g6 = rotation_jacobian(params.rot).T @ grad_mat.reshape(-1)
        out.grad_a1, out.grad_a2 = g6[:3], g6[3:]
    else:
        out.grad_affine = grad_mat
    return out


class AdaMax:
    """AdaMax with first-moment bias correction.

    m <- b1 m + (1 - b1) g;  u <- max(b2 u, |g|);
    theta <- theta - lr / (1 - b1^step) * m / (u + eps).
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m: dict = {}
        self.u: dict = {}

    def step(self, params: dict, grads: dict, lr: float) -> dict:
        self.step_count += 1
        corr = 1.0 - self.beta1 ** self.step_count
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.u[key] = np.zeros_like(g)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.u[key] = np.maximum(self.beta2 * self.u[key], np.abs(g))
            params[key] -= (lr / corr) * self.m[key] / (self.u[key] + self.eps)
        return params


class PlainDescent:
    """theta <- theta - lr * g (the un-accelerated update of the base rule)."""

    def step(self, params: dict, grads: dict, lr: float) -> dict:
        for key, g in grads.items():
            params[key] -= lr * g
        return params


def lr_schedule(n: int, cfg: AdaptConfig) -> float:
    """Linear 0 -> lr_peak over the warmup, then linear down to lr_final."""
    w = cfg.warmup()
    if n < w:
        return cfg.lr_peak * n / w
    span = cfg.steps - 1 - w
    if span <= 0:
        return cfg.lr_final if n >= cfg.steps - 1 else cfg.lr_peak
    frac = (n - w) / span
    return cfg.lr_peak * (1.0 - frac) + cfg.lr_final * frac


def lambda_schedule(n: int, cfg: AdaptConfig) -> float:
    """Cosine anneal lambda_init -> lambda_final over the S steps."""
    if cfg.steps == 1:
        return cfg.lambda_init
    frac = n / (cfg.steps - 1)
    return cfg.lambda_final + (cfg.lambda_init - cfg.lambda_final) * (1.0 + math.cos(math.pi * frac)) / 2.0


@dataclass
class StepTrace:
    step: int
    loss: float
    chamfer_term: float
    reg_term: float
    lr: float
    lam: float


def write_trace_csv(path, traces: list) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("step,loss,chamfer_term,reg_term,lr,lambda\n")
        for tr in traces:
            f.write(f"{tr.step},{tr.loss!r},{tr.chamfer_term!r},{tr.reg_term!r},{tr.lr!r},{tr.lam!r}\n")


def _reg_weights_for(pts: np.ndarray, cfg: AdaptConfig) -> np.ndarray:
    if cfg.reg_mode == "knn":
        return compute_reg_weights(pts, cfg.knn_k)
    if cfg.reg_mode == "uniform":
        return uniform_reg_weights(pts.shape[0])
    if cfg.reg_mode == "none":
        return np.zeros(pts.shape[0])
    raise ConfigError(f"unknown reg_mode {cfg.reg_mode!r}")


def adapt_input(x, denoiser, sched: NoiseSchedule, cfg: AdaptConfig,
                return_trace: bool = False):
    """Run the full adaptation loop; returns the K adapted clouds.

    x must be diffusion-normalized. Votes use independent noise streams
    derived from (cfg.seed, vote index), so results are reproducible and
    independent of evaluation order. With return_trace=True also returns
    the per-step loss traces, one list per vote.
    """
    pts = as_points(x)
    w = _reg_weights_for(pts, cfg)
    lam_off = cfg.reg_mode == "none"

    adapted = []
    traces = []
    for m in range(cfg.votes):
        rng = stream(cfg.seed, "vote", m)
        params = TransformParams.identity(pts.shape[0], cfg.parameterization)
        if cfg.optimizer == "adamax":
            opt = AdaMax(cfg.beta1, cfg.beta2, cfg.adamax_eps)
        elif cfg.optimizer == "gd":
            opt = PlainDescent()
        else:
            raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
        trace = []
        for n in range(cfg.steps):
            y = apply_transform(pts, params)
            t = sample_timestep(rng, cfg.t_range, sched.T)
            eps = rng.standard_normal(pts.shape)
            y_t = forward_noise(sched, y, t, eps)
            eps_hat = denoiser.denoise(y_t, t)
            y_hat = estimate_x0(sched, y_t, eps_hat, t)
            lam = 0.0 if lam_off else lambda_schedule(n, cfg)
            res = adaptation_loss(pts, params, y_hat, w, lam, cfg.objective)
            lr = lr_schedule(n, cfg)
            grads = {"delta": res.grad_delta}
            pvals = {"delta": params.delta}
            if params.rot is not None:
                grads["a1"], grads["a2"] = res.grad_a1, res.grad_a2
                pvals["a1"], pvals["a2"] = params.rot.a1, params.rot.a2
            else:
                grads["affine"] = res.grad_affine
                pvals["affine"] = params.affine
            opt.step(pvals, grads, lr)
            if return_trace:
                trace.append(StepTrace(n, res.loss, res.data_term, res.reg_term, lr, lam))
        adapted.append(apply_transform(pts, params))
        traces.append(trace)
    if return_trace:
        return adapted, traces
    return adapted


def vote(predictions: list) -> tuple[np.ndarray, int]:
    """Average K probability vectors; argmax label, ties to the lowest class."""
    if len(predictions) == 0:
        raise EmptyVoteSet("no predictions to vote over")
    probs = [np.asarray(p, dtype=np.float64) for p in predictions]
    c = probs[0].shape[0]
    for p in probs:
        if p.shape != (c,):
            raise ShapeMismatch("prediction vectors must share one length")
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("predictions must be probability vectors")
    if all((p == probs[0]).all() for p in probs[1:]):
        mean = probs[0].copy()  # idempotent on unanimous votes
    else:
        mean = np.zeros(c)
        for p in probs:
            mean += p
        mean /= len(probs)
    return mean, int(np.argmax(mean))


__all__ = [
    "AdaptConfig",
    "TransformParams",
    "LossGrads",
    "AdaMax",
    "PlainDescent",
    "apply_transform",
    "compute_reg_weights",
    "uniform_reg_weights",
    "adaptation_loss",
    "lr_schedule",
    "lambda_schedule",
    "adapt_input",
    "vote",
    "StepTrace",
    "write_trace_csv",
]
