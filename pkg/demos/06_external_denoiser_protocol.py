"""Driving the adaptation loop against an out-of-process denoiser.

Spawns the reference protocol server (the separate denoiser_server
package) over stdio and verifies it agrees with the in-process oracle,
then adapts a corrupted cloud through the wire.

Run: python demos/06_external_denoiser_protocol.py
(requires `pip install -e ./denoiser_server`)
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from pcadapt import (
    AdaptConfig,
    CorruptionSpec,
    EmpiricalPosteriorDenoiser,
    EmpiricalSource,
    ExternalDenoiser,
    adapt_input,
    chamfer,
    corrupt,
    make_polynomial_schedule,
    normalize_for_classifier,
    normalize_for_diffusion,
    save_xyz,
)
from pcadapt.rng import stream
from pcadapt.shapes import SHAPE_SAMPLERS

sched = make_polynomial_schedule(500)
clean, _, _ = normalize_for_classifier(SHAPE_SAMPLERS["cone"](stream(0, "demo6"), 256))

with tempfile.TemporaryDirectory() as tmp:
    src_path = Path(tmp) / "clean.xyz"
    save_xyz(src_path, clean.points)

    cmd = [sys.executable, "-m", "denoiser_server", "--plugin", "empirical",
           "--source", str(src_path)]
    with ExternalDenoiser.spawn(cmd, expected_T=500) as remote:
        print("connected to:", remote.remote_name)

        from pcadapt import load_xyz

        oracle = EmpiricalPosteriorDenoiser(
            EmpiricalSource([normalize_for_diffusion(load_xyz(src_path))[0].points]), sched)
        x_probe = stream(1, "probe").standard_normal((256, 3))
        got, want = remote.denoise(x_probe, 30), oracle.denoise(x_probe, 30)
        print("remote vs in-process max deviation:", f"{np.abs(got - want).max():.2e}")

        corrupted = corrupt(clean, CorruptionSpec("gaussian", 5, seed=4))
        diff, _, _ = normalize_for_diffusion(corrupted)
        adapted = adapt_input(diff, remote, sched, AdaptConfig(steps=30, votes=1, seed=2))[0]
        back = normalize_for_classifier(adapted)[0]
        print("chamfer to clean:",
              f"corrupted {chamfer(normalize_for_classifier(corrupted)[0], clean):.5f}",
              f"-> adapted {chamfer(back, clean):.5f}")
