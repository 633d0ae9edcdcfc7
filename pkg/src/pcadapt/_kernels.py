"""Compiled nearest-neighbor reductions.

The loops replicate the reference numpy arithmetic exactly: per-pair
squared distance (dx*dx + dy*dy) + dz*dz, strict-< comparisons scanning
ascending indices (ties keep the lowest index). fastmath stays off so no
FMA contraction or reassociation can change bits.
"""

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

_numba_config.THREADING_LAYER = "omp"


@njit(cache=True, parallel=True)
def nn_reduce_kernel(x, y):
    """Row/column nearest neighbors of the pairwise squared distances."""
    n, m = x.shape[0], y.shape[0]
    min_x = np.empty(n)
    arg_x = np.empty(n, np.int64)
    min_y = np.empty(m)
    arg_y = np.empty(m, np.int64)
    for i in prange(n):
        best = np.inf
        bj = 0
        for j in range(m):
            dx = x[i, 0] - y[j, 0]
            dy = x[i, 1] - y[j, 1]
            dz = x[i, 2] - y[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d < best:
                best = d
                bj = j
        min_x[i] = best
        arg_x[i] = bj
    for j in prange(m):
        best = np.inf
        bi = 0
        for i in range(n):
            dx = x[i, 0] - y[j, 0]
            dy = x[i, 1] - y[j, 1]
            dz = x[i, 2] - y[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d < best:
                best = d
                bi = i
        min_y[j] = best
        arg_y[j] = bi
    return min_x, arg_x, min_y, arg_y


@njit(cache=True, parallel=True)
def mixture_posterior_kernel(pts, pool, a, s, cutoff):
    """Per-point Gaussian-mixture posterior mean over the pooled source.

    Components with log-weight below (row max - cutoff) are skipped; the
    max is subtracted inside the exp for stability.
    """
    n, p = pts.shape[0], pool.shape[0]
    out = np.empty((n, 3))
    inv = 1.0 / (2.0 * s * s)
    for i in prange(n):
        qx, qy, qz = pts[i, 0], pts[i, 1], pts[i, 2]
        best = np.inf
        for j in range(p):
            dx = qx - a * pool[j, 0]
            dy = qy - a * pool[j, 1]
            dz = qz - a * pool[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d < best:
                best = d
        thresh = best + cutoff / inv
        wsum = 0.0
        ax = ay = az = 0.0
        for j in range(p):
            dx = qx - a * pool[j, 0]
            dy = qy - a * pool[j, 1]
            dz = qz - a * pool[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d <= thresh:
                w = np.exp((best - d) * inv)
                wsum += w
                ax += w * pool[j, 0]
                ay += w * pool[j, 1]
                az += w * pool[j, 2]
        out[i, 0] = ax / wsum
        out[i, 1] = ay / wsum
        out[i, 2] = az / wsum
    return out


@njit(cache=True, parallel=True)
def knn_kernel(pts, k):
    """k smallest self-excluded neighbors per point, ties to lower index."""
    n = pts.shape[0]
    out = np.empty((n, k), np.int64)
    for i in prange(n):
        bestd = np.full(k, np.inf)
        bestj = np.zeros(k, np.int64)
        for j in range(n):
            if j == i:
                continue
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d < bestd[k - 1]:
                p = k - 1
                while p > 0 and d < bestd[p - 1]:
                    bestd[p] = bestd[p - 1]
                    bestj[p] = bestj[p - 1]
                    p -= 1
                bestd[p] = d
                bestj[p] = j
        out[i] = bestj
    return out
