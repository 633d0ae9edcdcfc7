"""Chamfer distance, kNN queries, and 6D rotations on toy clouds.

Run: python demos/01_geometry_and_rotations.py
"""

import numpy as np

from pcadapt import Rotation6D, chamfer, chamfer_grad, knn, rotation_from_6d
from pcadapt.rng import stream

rng = stream(0, "demo1")

# two noisy samplings of the same sphere are close in Chamfer distance
a = rng.standard_normal((512, 3))
a /= np.linalg.norm(a, axis=1, keepdims=True)
b = rng.standard_normal((512, 3))
b /= np.linalg.norm(b, axis=1, keepdims=True)
cube = rng.uniform(-1, 1, (512, 3))

print("chamfer(sphere sample A, sphere sample B):", f"{chamfer(a, b):.5f}")
print("chamfer(sphere sample A, cube sample):   ", f"{chamfer(a, cube):.5f}")

# Chamfer is invariant to rigid motion
seed = Rotation6D(rng.standard_normal(3), rng.standard_normal(3))
R = rotation_from_6d(seed)
print("\nrotation matrix from a random 6D seed:")
print(np.array_str(R, precision=4, suppress_small=True))
print("R^T R - I max deviation:", f"{np.abs(R.T @ R - np.eye(3)).max():.2e}")
moved = a @ R.T + np.array([0.3, -0.1, 2.0])
moved_b = b @ R.T + np.array([0.3, -0.1, 2.0])
print("chamfer before vs after rigid motion:",
      f"{chamfer(a, b):.8f} vs {chamfer(moved, moved_b):.8f}")

# gradients point each cloud toward the other
g = chamfer_grad(a, b)
print("\ngradient shape:", g.shape, "| mean norm:", f"{np.linalg.norm(g, axis=1).mean():.4f}")
step = b - 0.05 * g
print("chamfer after one small gradient step:", f"{chamfer(a, step):.5f} (was {chamfer(a, b):.5f})")

# kNN neighborhoods
idx = knn(a, 5)
print("\nkNN(5) of point 0:", idx[0].tolist())
