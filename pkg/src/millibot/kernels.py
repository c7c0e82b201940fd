"""Hot numeric kernels.

Each kernel exists twice: a loop form compiled by numba (``*_jit``) and a
fallback (``*_py``) that is either vectorised numpy or the same loop run by
the interpreter.  The public names at the bottom pick one according to
``millibot._accel.USE_NUMBA``; ``benchmarks/bench_kernels.py`` times both.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from ._accel import USE_NUMBA, jit

WAVE_CONSTANT = 0
WAVE_RECTIFIED_SINE = 1

SQRT2 = math.sqrt(2.0)


# --------------------------------------------------------------------------
# pulsatile modulation and bilinear flow sampling
# --------------------------------------------------------------------------

def _modulation_py(t, freq, phase, wave):
    if wave == WAVE_CONSTANT:
        return 1.0
    return abs(math.sin(2.0 * math.pi * freq * t + phase))


_modulation_jit = jit(_modulation_py)


def _bilinear_py(vx, vy, mask, x0, y0, h, px, py):
    """Sample (vx, vy) at (px, py) in grid units of mm.

    Returns (ux, uy, inside).  ``inside`` is the domain mask at the nearest
    node; outside the grid or the mask the velocity is zero.
    """
    ny, nx = vx.shape
    fx = (px - x0) / h
    fy = (py - y0) / h
    if not (fx >= 0.0 and fy >= 0.0 and fx <= nx - 1 and fy <= ny - 1):
        return 0.0, 0.0, False
    if not mask[int(fy + 0.5), int(fx + 0.5)]:
        return 0.0, 0.0, False
    i = min(int(math.floor(fx)), nx - 2)
    j = min(int(math.floor(fy)), ny - 2)
    tx = fx - i
    ty = fy - j
    w00 = (1.0 - tx) * (1.0 - ty)
    w10 = tx * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w11 = tx * ty
    ux = w00 * vx[j, i] + w10 * vx[j, i + 1] + w01 * vx[j + 1, i] + w11 * vx[j + 1, i + 1]
    uy = w00 * vy[j, i] + w10 * vy[j, i + 1] + w01 * vy[j + 1, i] + w11 * vy[j + 1, i + 1]
    return ux, uy, True


_bilinear_jit = jit(_bilinear_py)


def bilinear_many(vx, vy, mask, x0, y0, h, px, py):
    """Vectorised bilinear sampling at arrays of points (mm)."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    ny, nx = vx.shape
    fx = (px - x0) / h
    fy = (py - y0) / h
    in_grid = (fx >= 0.0) & (fy >= 0.0) & (fx <= nx - 1) & (fy <= ny - 1)
    fxc = np.where(in_grid, fx, 0.0)
    fyc = np.where(in_grid, fy, 0.0)
    inside = in_grid & mask[(fyc + 0.5).astype(np.int64), (fxc + 0.5).astype(np.int64)]
    i = np.minimum(np.floor(fxc).astype(np.int64), nx - 2)
    j = np.minimum(np.floor(fyc).astype(np.int64), ny - 2)
    tx = fxc - i
    ty = fyc - j
    w00 = (1.0 - tx) * (1.0 - ty)
    w10 = tx * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w11 = tx * ty
    ux = w00 * vx[j, i] + w10 * vx[j, i + 1] + w01 * vx[j + 1, i] + w11 * vx[j + 1, i + 1]
    uy = w00 * vy[j, i] + w10 * vy[j, i + 1] + w01 * vy[j + 1, i] + w11 * vy[j + 1, i + 1]
    ux = np.where(inside, ux, 0.0)
    uy = np.where(inside, uy, 0.0)
    return ux, uy, inside


# --------------------------------------------------------------------------
# semi-implicit Euler substeps with flow drag
# --------------------------------------------------------------------------

def _make_integrator(bilinear, modulation):
    def integrate(x, y, vx, vy, fx, fy, mass, ct, dt, nsub, t0,
                  has_flow, gvx, gvy, gmask, gx0, gy0, gh, freq, phase, wave):
        """Advance a point mass ``nsub`` substeps of ``dt`` under a held force.

        Positions in m, flow grid coordinates in mm, velocities in m/s.
        """
        t = t0
        for k in range(nsub):
            ux = 0.0
            uy = 0.0
            if has_flow:
                ux, uy, _inside = bilinear(gvx, gvy, gmask, gx0, gy0, gh, 1000.0 * x, 1000.0 * y)
                g = modulation(t, freq, phase, wave)
                ux *= g
                uy *= g
            vx = vx + (dt / mass) * (fx + ct * (ux - vx))
            vy = vy + (dt / mass) * (fy + ct * (uy - vy))
            x = x + dt * vx
            y = y + dt * vy
            t = t0 + (k + 1) * dt
        return x, y, vx, vy

    return integrate


_integrate_py = _make_integrator(_bilinear_py, _modulation_py)
_integrate_jit = jit(_make_integrator(_bilinear_jit, _modulation_jit))


# --------------------------------------------------------------------------
# exact squared Euclidean distance transform (border pixels are obstacles)
# --------------------------------------------------------------------------

def _edt_sq_loops(free):
    """Squared EDT of a boolean image; ``free`` False pixels are obstacles.

    Column pass by two linear scans, row pass by the lower envelope of
    parabolas (Felzenszwalb & Huttenlocher).  The caller guarantees at least
    one obstacle per column.
    """
    ny, nx = free.shape
    big = ny + nx + 1
    g = np.empty((ny, nx), dtype=np.float64)
    for c in range(nx):
        d = big
        for r in range(ny):
            if free[r, c]:
                d += 1
            else:
                d = 0
            g[r, c] = d
        d = big
        for r in range(ny - 1, -1, -1):
            if free[r, c]:
                d += 1
            else:
                d = 0
            if d < g[r, c]:
                g[r, c] = d
    out = np.empty((ny, nx), dtype=np.float64)
    f = np.empty(nx, dtype=np.float64)
    v = np.empty(nx, dtype=np.int64)
    z = np.empty(nx + 1, dtype=np.float64)
    for r in range(ny):
        for c in range(nx):
            f[c] = g[r, c] * g[r, c]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, nx):
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(nx):
            while z[k + 1] < q:
                k += 1
            out[r, q] = (q - v[k]) * (q - v[k]) + f[v[k]]
    return out


_edt_sq_jit = jit(_edt_sq_loops)


def _edt_sq_numpy(free):
    """Vectorised equivalent of :func:`_edt_sq_loops`."""
    free = np.asarray(free, dtype=bool)
    ny, nx = free.shape
    big = float(ny + nx + 1)
    g = np.empty((ny, nx), dtype=np.float64)
    d = np.full(nx, big)
    for r in range(ny):
        d = np.where(free[r], d + 1.0, 0.0)
        g[r] = d
    d = np.full(nx, big)
    for r in range(ny - 1, -1, -1):
        d = np.where(free[r], d + 1.0, 0.0)
        np.minimum(g[r], d, out=g[r])
    g2 = g * g
    out = g2.copy()
    k = 1
    while k < nx and k * k < out.max():
        kk = float(k * k)
        np.minimum(out[:, k:], g2[:, :-k] + kk, out=out[:, k:])
        np.minimum(out[:, :-k], g2[:, k:] + kk, out=out[:, :-k])
        k += 1
    return out


# --------------------------------------------------------------------------
# 8-connected A*
# --------------------------------------------------------------------------

def _astar_loops(cost, sr, sc, gr, gc):
    """A* over a cost grid (np.inf marks blocked pixels).

    A step into pixel q costs (1 or sqrt 2) * cost[q].  Heuristic is the octile
    distance.  Heap entries are (f, h, row-major index) so ties resolve by the
    smaller heuristic and then by index.  Returns (parent array, g at goal);
    g is inf when the goal is unreachable.
    """
    ny, nx = cost.shape
    n = ny * nx
    gscore = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    start = sr * nx + sc
    goal = gr * nx + gc
    dr = np.array([-1, -1, -1, 0, 0, 1, 1, 1])
    dc = np.array([-1, 0, 1, -1, 1, -1, 0, 1])
    step = np.array([SQRT2, 1.0, SQRT2, 1.0, 1.0, SQRT2, 1.0, SQRT2])
    gscore[start] = 0.0
    ax = abs(gc - sc)
    ay = abs(gr - sr)
    h0 = (ax + ay) + (SQRT2 - 2.0) * min(ax, ay)
    heap = [(h0, h0, start)]
    while len(heap) > 0:
        _f, _h, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = True
        if u == goal:
            break
        ur = u // nx
        uc = u - ur * nx
        gu = gscore[u]
        for k in range(8):
            r = ur + dr[k]
            c = uc + dc[k]
            if r < 0 or r >= ny or c < 0 or c >= nx:
                continue
            cq = cost[r, c]
            if not (cq < np.inf):
                continue
            q = r * nx + c
            if closed[q]:
                continue
            cand = gu + step[k] * cq
            if cand < gscore[q]:
                gscore[q] = cand
                parent[q] = u
                ax = abs(gc - c)
                ay = abs(gr - r)
                hq = (ax + ay) + (SQRT2 - 2.0) * min(ax, ay)
                heapq.heappush(heap, (cand + hq, hq, q))
    return parent, gscore[goal]


_astar_jit = jit(_astar_loops)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

if USE_NUMBA:
    bilinear = _bilinear_jit
    modulation = _modulation_jit
    integrate = _integrate_jit
    edt_sq = _edt_sq_jit
    astar_search = _astar_jit
else:
    bilinear = _bilinear_py
    modulation = _modulation_py
    integrate = _integrate_py
    edt_sq = _edt_sq_numpy
    astar_search = _astar_loops

#: (accelerated, fallback) pairs, used by the benchmark and the parity tests.
VARIANTS = {
    "bilinear": (_bilinear_jit, _bilinear_py),
    "integrate": (_integrate_jit, _integrate_py),
    "edt_sq": (_edt_sq_jit, _edt_sq_numpy),
    "astar": (_astar_jit, _astar_loops),
}
