"""Point-cloud container, the two normalizations, and XYZ/PLY file I/O.

Points are stored as an (N, 3) float64 array, one point per row. Two
normalizations are used by different consumers:

* classifier frame: centroid at the origin, furthest point at norm 1;
* diffusion frame: centroid at the origin, unit standard deviation over
  all 3N coordinates.

Both return the inverse-transform parameters (center, scale) with the
convention ``normalized = (points - center) * scale``, so the original
frame is recovered as ``points = normalized / scale + center``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCloud, ShapeMismatch


def as_points(x) -> np.ndarray:
    """Coerce a PointCloud or array-like to an (N, 3) float64 array."""
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeMismatch(f"expected (N, 3) points, got shape {pts.shape}")
    if pts.shape[0] < 1:
        raise ShapeMismatch("point cloud must contain at least one point")
    if not np.all(np.isfinite(pts)):
        raise ShapeMismatch("point coordinates must be finite")
    return pts


@dataclass
class PointCloud:
    """An ordered set of N 3D points with an optional class label.

    ``source_mask`` is metadata set by corruption generators: True for rows
    that descend from the original cloud, False for inserted points.
    """

    points: np.ndarray
    label: int | None = None
    source_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.source_mask is not None:
            self.source_mask = np.asarray(self.source_mask, dtype=bool)
            if self.source_mask.shape != (self.points.shape[0],):
                raise ShapeMismatch("source_mask length must equal point count")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray, source_mask=None) -> "PointCloud":
        return PointCloud(points, label=self.label, source_mask=source_mask)


def normalize_for_classifier(pc) -> tuple[PointCloud, np.ndarray, float]:
    """Zero-center and scale to the unit ball.

    Returns (normalized cloud, center, scale) with
    normalized = (points - center) * scale.
    """
    pts = as_points(pc)
    center = pts.mean(axis=0)
    centered = pts - center
    max_norm = float(np.sqrt((centered * centered).sum(axis=1).max()))
    if max_norm <= 0.0:
        raise DegenerateCloud("all points coincide; unit-ball scaling undefined")
    scale = 1.0 / max_norm
    out = centered * scale
    label = pc.label if isinstance(pc, PointCloud) else None
    return PointCloud(out, label=label), center, scale


def normalize_for_diffusion(pc) -> tuple[PointCloud, np.ndarray, float]:
    """Zero-center and standardize to unit std over all 3N coordinates."""
    pts = as_points(pc)
    center = pts.mean(axis=0)
    centered = pts - center
    std = float(np.sqrt((centered * centered).mean()))
    if std <= 0.0:
        raise DegenerateCloud("all points coincide; standardization undefined")
    scale = 1.0 / std
    out = centered * scale
    label = pc.label if isinstance(pc, PointCloud) else None
    return PointCloud(out, label=label), center, scale


def denormalize(points, center: np.ndarray, scale: float) -> np.ndarray:
    """Invert either normalization: points / scale + center."""
    return as_points(points) / scale + np.asarray(center, dtype=np.float64)


# --- file I/O ---------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def save_xyz(path, points) -> None:
    """ASCII XYZ: one "x y z" triple per line, 9 significant digits, LF."""
    pts = as_points(points)
    lines = [" ".join(_fmt(c) for c in row) for row in pts]
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_xyz(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ShapeMismatch(f"{path}:{ln}: expected 3 columns, got {len(parts)}")
            rows.append([float(p) for p in parts])
    if not rows:
        raise ShapeMismatch(f"{path}: no points")
    return np.asarray(rows, dtype=np.float64)


def save_ply(path, points) -> None:
    """ASCII PLY with a single vertex element (float x, y, z)."""
    pts = as_points(points)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pts.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    lines = header + [" ".join(_fmt(c) for c in row) for row in pts]
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_ply(path) -> np.ndarray:
    with open(path) as f:
        lines = [ln.strip() for ln in f]
    if not lines or lines[0] != "ply":
        raise ShapeMismatch(f"{path}: not a PLY file")
    n_vertex = None
    props = []
    in_vertex = False
    body_at = None
    for i, ln in enumerate(lines[1:], 1):
        if ln.startswith("element"):
            parts = ln.split()
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif ln.startswith("property") and in_vertex:
            props.append(ln.split()[-1])
        elif ln == "end_header":
            body_at = i + 1
            break
    if n_vertex is None or body_at is None:
        raise ShapeMismatch(f"{path}: missing vertex element or end_header")
    for axis in ("x", "y", "z"):
        if axis not in props:
            raise ShapeMismatch(f"{path}: vertex element lacks property {axis}")
    ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    rows = []
    for ln in lines[body_at : body_at + n_vertex]:
        parts = ln.split()
        rows.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
    if len(rows) != n_vertex:
        raise ShapeMismatch(f"{path}: expected {n_vertex} vertices, got {len(rows)}")
    return np.asarray(rows, dtype=np.float64)
