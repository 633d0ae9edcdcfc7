"""Parametric surface samplers for the synthetic benchmark classes.

Each sampler draws N points uniformly (area-weighted) on the surface of a
canonical shape centered near the origin. These stand in for a curated
scan corpus so the whole benchmark is self-contained and seedable.
"""

from __future__ import annotations

import math

import numpy as np


def _unit_sphere(rng, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_sphere(rng, n: int) -> np.ndarray:
    return _unit_sphere(rng, n)


def sample_cube(rng, n: int) -> np.ndarray:
    # six faces of the cube [-1, 1]^3, equal areas
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    pts = np.empty((n, 3))
    axis = face % 3
    sign = np.where(face < 3, 1.0, -1.0)
    for a in range(3):
        sel = axis == a
        others = [i for i in range(3) if i != a]
        pts[sel, a] = sign[sel]
        pts[sel, others[0]] = uv[sel, 0]
        pts[sel, others[1]] = uv[sel, 1]
    return pts


def sample_cylinder(rng, n: int, radius: float = 0.6, height: float = 2.0) -> np.ndarray:
    lateral = 2.0 * math.pi * radius * height
    caps = 2.0 * math.pi * radius * radius
    on_side = rng.uniform(0.0, 1.0, n) < lateral / (lateral + caps)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    pts = np.empty((n, 3))
    z = rng.uniform(-height / 2.0, height / 2.0, n)
    r_cap = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    cap_sign = np.where(rng.uniform(0.0, 1.0, n) < 0.5, 1.0, -1.0)
    r = np.where(on_side, radius, r_cap)
    pts[:, 0] = r * np.cos(theta)
    pts[:, 1] = r * np.sin(theta)
    pts[:, 2] = np.where(on_side, z, cap_sign * height / 2.0)
    return pts


def sample_cone(rng, n: int, radius: float = 0.8, height: float = 1.6) -> np.ndarray:
    slant = math.hypot(radius, height)
    lateral = math.pi * radius * slant
    base = math.pi * radius * radius
    on_side = rng.uniform(0.0, 1.0, n) < lateral / (lateral + base)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    # area element on the lateral surface grows linearly from the apex
    frac = np.sqrt(rng.uniform(0.0, 1.0, n))
    r_side = radius * frac
    z_side = height * (1.0 - frac) - height / 2.0
    r_base = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    r = np.where(on_side, r_side, r_base)
    z = np.where(on_side, z_side, -height / 2.0)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def sample_torus(rng, n: int, big: float = 0.8, small: float = 0.3) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    phi = np.empty(n)
    # area element proportional to (big + small cos phi); rejection sample
    filled = 0
    while filled < n:
        cand = rng.uniform(0.0, 2.0 * math.pi, n)
        accept = rng.uniform(0.0, 1.0, n) < (big + small * np.cos(cand)) / (big + small)
        take = min(int(accept.sum()), n - filled)
        phi[filled:filled + take] = cand[accept][:take]
        filled += take
    ring = big + small * np.cos(phi)
    return np.stack([ring * np.cos(theta), ring * np.sin(theta), small * np.sin(phi)], axis=1)


def sample_table(rng, n: int) -> np.ndarray:
    # horizontal top plus a vertical support plane
    top_area = 4.0          # [-1,1]^2 at z = 0.55
    leg_area = 1.6 * 1.55   # x in [-0.8, 0.8], z in [-1, 0.55], y = 0
    on_top = rng.uniform(0.0, 1.0, n) < top_area / (top_area + leg_area)
    pts = np.empty((n, 3))
    pts[:, 0] = np.where(on_top, rng.uniform(-1.0, 1.0, n), rng.uniform(-0.8, 0.8, n))
    pts[:, 1] = np.where(on_top, rng.uniform(-1.0, 1.0, n), 0.0)
    pts[:, 2] = np.where(on_top, 0.55, rng.uniform(-1.0, 0.55, n))
    return pts


def sample_pyramid(rng, n: int, half: float = 1.0, height: float = 1.4) -> np.ndarray:
    apex = np.array([0.0, 0.0, height / 2.0])
    z0 = -height / 2.0
    corners = np.array([
        [half, half, z0], [-half, half, z0], [-half, -half, z0], [half, -half, z0],
    ])
    side_area = 4.0 * (0.5 * (2.0 * half) * math.hypot(height, half))
    base_area = (2.0 * half) ** 2
    on_side = rng.uniform(0.0, 1.0, n) < side_area / (side_area + base_area)
    # uniform in a triangle via the sqrt trick
    r1 = np.sqrt(rng.uniform(0.0, 1.0, n))
    r2 = rng.uniform(0.0, 1.0, n)
    face = rng.integers(0, 4, n)
    a = corners[face]
    b = corners[(face + 1) % 4]
    tri = (1.0 - r1)[:, None] * apex + (r1 * (1.0 - r2))[:, None] * a + (r1 * r2)[:, None] * b
    base = np.stack([
        rng.uniform(-half, half, n), rng.uniform(-half, half, n), np.full(n, z0),
    ], axis=1)
    return np.where(on_side[:, None], tri, base)


def sample_capsule(rng, n: int, radius: float = 0.5, body: float = 1.2) -> np.ndarray:
    side_area = 2.0 * math.pi * radius * body
    cap_area = 4.0 * math.pi * radius * radius  # two hemispheres
    on_side = rng.uniform(0.0, 1.0, n) < side_area / (side_area + cap_area)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    z = rng.uniform(-body / 2.0, body / 2.0, n)
    sphere = _unit_sphere(rng, n) * radius
    cap = sphere.copy()
    cap[:, 2] = np.abs(cap[:, 2]) * np.where(rng.uniform(0.0, 1.0, n) < 0.5, 1.0, -1.0)
    cap[:, 2] += np.sign(cap[:, 2]) * body / 2.0
    side = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
    return np.where(on_side[:, None], side, cap)


SHAPE_SAMPLERS = {
    "sphere": sample_sphere,
    "cube": sample_cube,
    "cylinder": sample_cylinder,
    "cone": sample_cone,
    "torus": sample_torus,
    "table": sample_table,
    "pyramid": sample_pyramid,
    "capsule": sample_capsule,
}

DEFAULT_CLASSES = tuple(SHAPE_SAMPLERS)
