"""Grid geometry kernels: ray traversal, line of sight and wavefront distances.

Conventions used across the package: a world point is ``(x, y)`` in meters,
grid cell ``(row, col)`` covers ``x in [col*cs, (col+1)*cs)`` and
``y in [row*cs, (row+1)*cs)``.  Headings are radians, counter-clockwise from +x.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)

# 8-neighbourhood, straight moves first
NEIGHBOURS = np.array(
    [[-1, 0], [1, 0], [0, -1], [0, 1], [-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=np.int64
)


def world_to_cell(x: float, y: float, cell_size: float) -> tuple[int, int]:
    return int(math.floor(y / cell_size)), int(math.floor(x / cell_size))


def cell_center(row: int, col: int, cell_size: float) -> tuple[float, float]:
    return (col + 0.5) * cell_size, (row + 0.5) * cell_size


@njit(cache=True)
def _boundary_t(pos, idx, d, cs):
    # distance along the ray to the next cell boundary on one axis
    if d > 0.0:
        return ((idx + 1) * cs - pos) / d
    elif d < 0.0:
        return (idx * cs - pos) / d
    return np.inf


@njit(cache=True)
def cast_rays(blocked, cs, x0, y0, angles, max_range, dist_out, row_out, col_out):
    """Exact grid traversal (Amanatides-Woo).  Out-of-bounds counts as blocked.

    Fills ``dist_out`` with the distance to the first blocked cell boundary
    (``max_range`` when nothing is hit) and ``row_out/col_out`` with the hit
    cell (-1 when nothing is hit).
    """
    H, W = blocked.shape
    for k in range(angles.shape[0]):
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        col = int(math.floor(x0 / cs))
        row = int(math.floor(y0 / cs))
        sc = 1 if dx > 0.0 else -1
        sr = 1 if dy > 0.0 else -1
        ci = col
        ri = row
        dist_out[k] = max_range
        row_out[k] = -1
        col_out[k] = -1
        if ri < 0 or ri >= H or ci < 0 or ci >= W or blocked[ri, ci]:
            dist_out[k] = 0.0
            row_out[k] = ri
            col_out[k] = ci
            continue
        while True:
            tx = _boundary_t(x0, ci, dx, cs)
            ty = _boundary_t(y0, ri, dy, cs)
            if tx < ty:
                t = tx
                ci += sc
            else:
                t = ty
                ri += sr
            if t >= max_range:
                break
            if ri < 0 or ri >= H or ci < 0 or ci >= W or blocked[ri, ci]:
                dist_out[k] = t
                row_out[k] = ri
                col_out[k] = ci
                break


@njit(cache=True)
def integrate_rays(state, ox, oy, cs, x0, y0, angles, dists, max_range, free_val, obst_val):
    """Mark cells crossed by each ray free and the terminating cell an obstacle.

    ``state`` is indexed relative to the map origin ``(ox, oy)``.  Obstacle
    marks are never overwritten; free marks only replace ``0`` (unknown).
    Returns the number of cells newly turned free.
    """
    H, W = state.shape
    px = x0 - ox
    py = y0 - oy
    freed = 0
    for k in range(angles.shape[0]):
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        d = dists[k]
        hit = d < max_range
        end = d if hit else max_range
        hr = -1
        hc = -1
        if hit:
            ex = px + (d + 1e-9) * dx
            ey = py + (d + 1e-9) * dy
            hr = int(math.floor(ey / cs))
            hc = int(math.floor(ex / cs))
        ci = int(math.floor(px / cs))
        ri = int(math.floor(py / cs))
        sc = 1 if dx > 0.0 else -1
        sr = 1 if dy > 0.0 else -1
        t = 0.0
        while t < end - 1e-9:
            if ri == hr and ci == hc:
                break
            if 0 <= ri < H and 0 <= ci < W and state[ri, ci] == 0:
                state[ri, ci] = free_val
                freed += 1
            tx = _boundary_t(px, ci, dx, cs)
            ty = _boundary_t(py, ri, dy, cs)
            if tx < ty:
                t = tx
                ci += sc
            else:
                t = ty
                ri += sr
        if hit and 0 <= hr < H and 0 <= hc < W:
            state[hr, hc] = obst_val
    return freed


@njit(cache=True)
def _heap_push(keys, vals, n, key, val):
    i = n
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return n + 1


@njit(cache=True)
def _heap_pop(keys, vals, n):
    key = keys[0]
    val = vals[0]
    n -= 1
    keys[0] = keys[n]
    vals[0] = vals[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        small = left
        right = left + 1
        if right < n and keys[right] < keys[left]:
            small = right
        if keys[i] <= keys[small]:
            break
        keys[small], keys[i] = keys[i], keys[small]
        vals[small], vals[i] = vals[i], vals[small]
        i = small
    return key, val, n


@njit(cache=True)
def dijkstra_grid(traversable, src_rows, src_cols, cs, stop_idx=-1):
    """Multi-source 8-connected wavefront; diagonals cost ``cs*sqrt(2)`` and
    may not cut a blocked corner.  Unreachable cells stay ``inf``.

    With ``stop_idx >= 0`` (flat index) the sweep ends once that cell is
    settled; every cell closer than it is then final.
    """
    H, W = traversable.shape
    dist = np.full((H, W), np.inf)
    done = np.zeros((H, W), dtype=np.bool_)
    # each cell is pushed at most once per neighbour improvement: 8 per cell bound
    cap = 8 * H * W + src_rows.shape[0] + 1
    keys = np.empty(cap)
    vals = np.empty(cap, dtype=np.int64)
    n = 0
    for i in range(src_rows.shape[0]):
        r = src_rows[i]
        c = src_cols[i]
        if traversable[r, c] and dist[r, c] > 0.0:
            dist[r, c] = 0.0
            n = _heap_push(keys, vals, n, 0.0, r * W + c)
    diag = cs * 1.4142135623730951
    while n > 0:
        d, idx, n = _heap_pop(keys, vals, n)
        r = idx // W
        c = idx - r * W
        if done[r, c]:
            continue
        done[r, c] = True
        if idx == stop_idx:
            break
        for k in range(8):
            dr = NEIGHBOURS[k, 0]
            dc = NEIGHBOURS[k, 1]
            nr = r + dr
            nc = c + dc
            if nr < 0 or nr >= H or nc < 0 or nc >= W:
                continue
            if not traversable[nr, nc] or done[nr, nc]:
                continue
            if k >= 4:
                if not traversable[r + dr, c] or not traversable[r, c + dc]:
                    continue
                nd = d + diag
            else:
                nd = d + cs
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                n = _heap_push(keys, vals, n, nd, nr * W + nc)
    return dist


def ray_scan(blocked: np.ndarray, cell_size: float, x: float, y: float,
             angles: np.ndarray, max_range: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(angles)
    dist = np.empty(n)
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    cast_rays(blocked, float(cell_size), float(x), float(y),
              np.asarray(angles, dtype=np.float64), float(max_range), dist, rows, cols)
    return dist, rows, cols


def first_hit(blocked: np.ndarray, cell_size: float, x0: float, y0: float,
              x1: float, y1: float) -> tuple[float, int, int]:
    """Cast one ray from ``(x0, y0)`` toward ``(x1, y1)`` (bounded by their distance)."""
    length = math.hypot(x1 - x0, y1 - y0)
    ang = np.array([math.atan2(y1 - y0, x1 - x0)])
    d, r, c = ray_scan(blocked, cell_size, x0, y0, ang, length + 1e-9)
    return float(d[0]), int(r[0]), int(c[0])


def inflate(obstacles: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation of a boolean obstacle mask by ``radius`` cells."""
    if radius <= 0:
        return obstacles.copy()
    H, W = obstacles.shape
    out = obstacles.copy()
    padded = np.pad(obstacles, radius, constant_values=False)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            out |= padded[radius + dr:radius + dr + H, radius + dc:radius + dc + W]
    return out


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
