"""The diffusion forward process and the analytic denoisers.

Run: python demos/02_schedule_and_denoisers.py
"""

import numpy as np

from pcadapt import (
    EmpiricalPosteriorDenoiser,
    EmpiricalSource,
    PointMixtureDenoiser,
    estimate_x0,
    forward_noise,
    make_polynomial_schedule,
    normalize_for_diffusion,
)
from pcadapt.rng import stream
from pcadapt.shapes import SHAPE_SAMPLERS

rng = stream(0, "demo2")
sched = make_polynomial_schedule(500)
print("alpha_t at t = 0, 50, 250, 500:", [round(float(sched.alpha[t]), 4) for t in (0, 50, 250, 500)])

# noising and exact inversion with the true noise
shapes = [normalize_for_diffusion(SHAPE_SAMPLERS[name](stream(1, name), 256))[0].points
          for name in ("sphere", "cube", "torus", "cone")]
x0 = shapes[0]
t = 40
eps = rng.standard_normal(x0.shape)
x_t = forward_noise(sched, x0, t, eps)
print(f"round trip error with the true noise: "
      f"{np.abs(estimate_x0(sched, x_t, eps, t) - x0).max():.2e}")

# the posterior-mean denoiser points back to the right source shape
den = EmpiricalPosteriorDenoiser(EmpiricalSource(shapes), sched)
eps_hat = den.denoise(x_t, t)
x0_hat = estimate_x0(sched, x_t, eps_hat, t)
dists = [float(np.linalg.norm(x0_hat - s)) for s in shapes]
print("distance of the denoised estimate to each source shape:",
      [round(d, 3) for d in dists], "-> argmin", int(np.argmin(dists)))

# the per-point mixture accepts clouds of any size
mix = PointMixtureDenoiser(EmpiricalSource(shapes), sched)
small = x_t[:100]
print("mixture denoiser on a 100-point query:", mix.denoise(small, t).shape)
