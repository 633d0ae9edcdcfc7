"""Diffusion forward process: the (alpha_t, sigma_t) table and its uses.

The marginal of the forward process is x_t ~ N(alpha_t * x0, sigma_t^2 I)
with alpha strictly decreasing from 1 at t = 0 to 0 at t = T and
sigma_t = sqrt(1 - alpha_t^2). The polynomial law here is
alpha_t = 1 - (t/T)^2 with a 1e-5 floor on sigma_t^2 for t > 0 (alpha
recomputed so alpha^2 + sigma^2 stays exactly 1); the schedule family is
a package choice, documented rather than inherited. For T beyond ~707
the floor flattens alpha over the first few timesteps (non-strict
decrease there); at the working default T = 500 alpha is strictly
decreasing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import as_points
from .errors import AlphaZero, EmptyRange, ShapeMismatch, TimestepOutOfRange

SIGMA2_FLOOR = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha: np.ndarray  # alpha[t] for t = 0..T
    sigma: np.ndarray

    def __post_init__(self):
        if self.alpha.shape != (self.T + 1,) or self.sigma.shape != (self.T + 1,):
            raise ShapeMismatch("alpha/sigma tables must have T + 1 entries")

    def to_json(self) -> str:
        return json.dumps(
            {"T": self.T, "alpha": self.alpha.tolist(), "sigma": self.sigma.tolist()}
        )

    @staticmethod
    def from_json(text: str) -> "NoiseSchedule":
        obj = json.loads(text)
        return NoiseSchedule(
            T=int(obj["T"]),
            alpha=np.asarray(obj["alpha"], dtype=np.float64),
            sigma=np.asarray(obj["sigma"], dtype=np.float64),
        )


def make_polynomial_schedule(T: int = 500) -> NoiseSchedule:
    if T < 2:
        raise ValueError("T must be >= 2")
    t = np.arange(T + 1, dtype=np.float64)
    alpha = 1.0 - (t / T) ** 2
    sigma2 = 1.0 - alpha * alpha
    floored = (t > 0) & (sigma2 < SIGMA2_FLOOR)
    sigma2[floored] = SIGMA2_FLOOR
    alpha[floored] = np.sqrt(1.0 - SIGMA2_FLOOR)
    return NoiseSchedule(T=T, alpha=alpha, sigma=np.sqrt(sigma2))


def _check_t(sched: NoiseSchedule, t: int) -> int:
    t = int(t)
    if not 0 <= t <= sched.T:
        raise TimestepOutOfRange(f"t={t} outside [0, {sched.T}]")
    return t


def forward_noise(sched: NoiseSchedule, x0, t: int, eps: np.ndarray) -> np.ndarray:
    """x_t = alpha_t * x0 + sigma_t * eps."""
    t = _check_t(sched, t)
    pts = as_points(x0)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != pts.shape:
        raise ShapeMismatch(f"eps shape {eps.shape} != points shape {pts.shape}")
    return sched.alpha[t] * pts + sched.sigma[t] * eps


def estimate_x0(sched: NoiseSchedule, x_t, eps_hat: np.ndarray, t: int) -> np.ndarray:
    """Denoised estimate: (x_t - sigma_t * eps_hat) / alpha_t."""
    t = _check_t(sched, t)
    if sched.alpha[t] <= 0.0:
        raise AlphaZero(f"alpha_{t} = 0; estimate undefined at t = T")
    pts = as_points(x_t)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_hat.shape != pts.shape:
        raise ShapeMismatch(f"eps_hat shape {eps_hat.shape} != points shape {pts.shape}")
    return (pts - sched.sigma[t] * eps_hat) / sched.alpha[t]


@dataclass(frozen=True)
class TimestepRange:
    """Sampling interval for the forward process, as fractions of T."""

    t_min: float = 0.02
    t_max: float = 0.12

    def __post_init__(self):
        if not 0.0 <= self.t_min < self.t_max <= 1.0:
            raise EmptyRange(f"need 0 <= t_min < t_max <= 1, got ({self.t_min}, {self.t_max})")

    def bounds(self, T: int) -> tuple[int, int]:
        lo = int(round(self.t_min * T))
        hi = int(round(self.t_max * T))
        if hi < lo:
            raise EmptyRange(f"range ({self.t_min}, {self.t_max}) empty at T={T}")
        return lo, hi


def sample_timestep(rng: np.random.Generator, trange: TimestepRange, T: int) -> int:
    """Uniform integer timestep in [round(t_min*T), round(t_max*T)]."""
    lo, hi = trange.bounds(T)
    return int(rng.integers(lo, hi + 1))
