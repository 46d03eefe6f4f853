"""Hot numeric kernels for the physics and communication pipelines.

Every kernel exists in two flavours: a loop-style implementation compiled
with numba ``@njit`` (default) and a plain numpy/Python fallback. Set the
environment variable ``POGOSIM_NUMBA=0`` before import to force the
fallback path; ``pogosim.kernels.NUMBA_ENABLED`` reports which one is
active. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

_EMPTY_PAIRS = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))


def _numba_requested() -> bool:
    return os.environ.get("POGOSIM_NUMBA", "1").lower() not in ("0", "false", "no")


# ---------------------------------------------------------------------------
# loop-style implementations (numba-compilable as written)

def _candidate_pairs_loop(pos, cutoff):
    """All index pairs (i < j) with center distance <= cutoff, via a uniform grid."""
    n = pos.shape[0]
    out_i = np.empty(16, dtype=np.int64)
    out_j = np.empty(16, dtype=np.int64)
    count = 0
    if n < 2:
        return out_i[:0], out_j[:0]
    inv = 1.0 / cutoff
    xmin = pos[:, 0].min()
    ymin = pos[:, 1].min()
    cx = np.empty(n, dtype=np.int64)
    cy = np.empty(n, dtype=np.int64)
    for k in range(n):
        cx[k] = int((pos[k, 0] - xmin) * inv)
        cy[k] = int((pos[k, 1] - ymin) * inv)
    ncx = cx.max() + 1
    key = cy * ncx + cx
    order = np.argsort(key, kind="mergesort")
    skey = key[order]
    c2 = cutoff * cutoff
    for i in range(n):
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                gx = cx[i] + dx
                gy = cy[i] + dy
                if gx < 0 or gx >= ncx or gy < 0:
                    continue
                k = gy * ncx + gx
                lo = np.searchsorted(skey, k)
                hi = np.searchsorted(skey, k + 1)
                for idx in range(lo, hi):
                    j = order[idx]
                    if j <= i:
                        continue
                    ddx = pos[j, 0] - pos[i, 0]
                    ddy = pos[j, 1] - pos[i, 1]
                    if ddx * ddx + ddy * ddy <= c2:
                        if count == out_i.shape[0]:
                            new_i = np.empty(count * 2, dtype=np.int64)
                            new_j = np.empty(count * 2, dtype=np.int64)
                            new_i[:count] = out_i
                            new_j[:count] = out_j
                            out_i = new_i
                            out_j = new_j
                        out_i[count] = i
                        out_j[count] = j
                        count += 1
    return out_i[:count], out_j[:count]


def _disk_impulses_loop(pos, vel, radius, inv_mass, restitution, friction, pi, pj):
    """Sequential impulse resolution for overlapping disk pairs (velocities only)."""
    for k in range(pi.shape[0]):
        i = pi[k]
        j = pj[k]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist <= 1e-12 or dist >= radius[i] + radius[j]:
            continue
        nx = dx / dist
        ny = dy / dist
        inv_sum = inv_mass[i] + inv_mass[j]
        if inv_sum <= 0.0:
            continue
        rvx = vel[j, 0] - vel[i, 0]
        rvy = vel[j, 1] - vel[i, 1]
        vn = rvx * nx + rvy * ny
        if vn >= 0.0:
            continue
        e = math.sqrt(restitution[i] * restitution[j])
        jn = -(1.0 + e) * vn / inv_sum
        vel[i, 0] -= jn * nx * inv_mass[i]
        vel[i, 1] -= jn * ny * inv_mass[i]
        vel[j, 0] += jn * nx * inv_mass[j]
        vel[j, 1] += jn * ny * inv_mass[j]
        # Coulomb friction on the tangential relative velocity
        rvx = vel[j, 0] - vel[i, 0]
        rvy = vel[j, 1] - vel[i, 1]
        tx = rvx - (rvx * nx + rvy * ny) * nx
        ty = rvy - (rvx * nx + rvy * ny) * ny
        tlen = math.sqrt(tx * tx + ty * ty)
        if tlen > 1e-12:
            tx /= tlen
            ty /= tlen
            jt = -(rvx * tx + rvy * ty) / inv_sum
            mu = math.sqrt(friction[i] * friction[j])
            if jt > mu * jn:
                jt = mu * jn
            elif jt < -mu * jn:
                jt = -mu * jn
            vel[i, 0] -= jt * tx * inv_mass[i]
            vel[i, 1] -= jt * ty * inv_mass[i]
            vel[j, 0] += jt * tx * inv_mass[j]
            vel[j, 1] += jt * ty * inv_mass[j]


def _disk_corrections_loop(pos, radius, inv_mass, pi, pj, slop, factor):
    """One pass of mass-weighted positional de-penetration.

    Returns the largest penetration seen before correcting, so the caller
    can iterate until the contact set has converged.
    """
    worst = 0.0
    for k in range(pi.shape[0]):
        i = pi[k]
        j = pj[k]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dist = math.sqrt(dx * dx + dy * dy)
        pen = radius[i] + radius[j] - dist
        if pen > worst:
            worst = pen
        if pen <= slop or dist <= 1e-12:
            continue
        inv_sum = inv_mass[i] + inv_mass[j]
        if inv_sum <= 0.0:
            continue
        mag = factor * (pen - slop) / inv_sum
        nx = dx / dist
        ny = dy / dist
        pos[i, 0] -= mag * nx * inv_mass[i]
        pos[i, 1] -= mag * ny * inv_mass[i]
        pos[j, 0] += mag * nx * inv_mass[j]
        pos[j, 1] += mag * ny * inv_mass[j]
    return worst


def _wall_contact(px, py, ax, ay, bx, by):
    abx = bx - ax
    aby = by - ay
    denom = abx * abx + aby * aby
    t = 0.0
    if denom > 0.0:
        t = ((px - ax) * abx + (py - ay) * aby) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = ax + t * abx
    qy = ay + t * aby
    dx = px - qx
    dy = py - qy
    return dx, dy, math.sqrt(dx * dx + dy * dy)


def _wall_impulses_loop(pos, vel, radius, seg_a, seg_b, restitution, friction):
    n = pos.shape[0]
    m = seg_a.shape[0]
    for i in range(n):
        for s in range(m):
            dx, dy, dist = _wall_contact(pos[i, 0], pos[i, 1],
                                         seg_a[s, 0], seg_a[s, 1],
                                         seg_b[s, 0], seg_b[s, 1])
            if dist >= radius[i] or dist <= 1e-12:
                continue
            nx = dx / dist
            ny = dy / dist
            vn = vel[i, 0] * nx + vel[i, 1] * ny
            if vn >= 0.0:
                continue
            jn = -(1.0 + restitution[i]) * vn
            vel[i, 0] += jn * nx
            vel[i, 1] += jn * ny
            tx = vel[i, 0] - (vel[i, 0] * nx + vel[i, 1] * ny) * nx
            ty = vel[i, 1] - (vel[i, 0] * nx + vel[i, 1] * ny) * ny
            tlen = math.sqrt(tx * tx + ty * ty)
            if tlen > 1e-12:
                tx /= tlen
                ty /= tlen
                jt = -(vel[i, 0] * tx + vel[i, 1] * ty)
                mu = friction[i]
                if jt > mu * jn:
                    jt = mu * jn
                elif jt < -mu * jn:
                    jt = -mu * jn
                vel[i, 0] += jt * tx
                vel[i, 1] += jt * ty


def _wall_corrections_loop(pos, radius, seg_a, seg_b, slop, factor):
    """Returns the largest penetration seen, as _disk_corrections_loop."""
    n = pos.shape[0]
    m = seg_a.shape[0]
    worst = 0.0
    for i in range(n):
        for s in range(m):
            dx, dy, dist = _wall_contact(pos[i, 0], pos[i, 1],
                                         seg_a[s, 0], seg_a[s, 1],
                                         seg_b[s, 0], seg_b[s, 1])
            pen = radius[i] - dist
            if pen > worst:
                worst = pen
            if pen <= slop or dist <= 1e-12:
                continue
            mag = factor * (pen - slop) / dist
            pos[i, 0] += mag * dx
            pos[i, 1] += mag * dy
    return worst


def _distance_constraints_loop(pos, inv_mass, ci, cj, rest_len, iterations):
    """Position-based relaxation of fixed-length links (membranes)."""
    for _ in range(iterations):
        for k in range(ci.shape[0]):
            i = ci[k]
            j = cj[k]
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist <= 1e-12:
                continue
            inv_sum = inv_mass[i] + inv_mass[j]
            if inv_sum <= 0.0:
                continue
            diff = (dist - rest_len[k]) / (dist * inv_sum)
            pos[i, 0] += dx * diff * inv_mass[i]
            pos[i, 1] += dy * diff * inv_mass[i]
            pos[j, 0] -= dx * diff * inv_mass[j]
            pos[j, 1] -= dy * diff * inv_mass[j]


# ---------------------------------------------------------------------------
# numpy fallback for the pair search (the O(n^2) form is fine at test scales)

def _candidate_pairs_numpy(pos, cutoff):
    n = pos.shape[0]
    if n < 2:
        return _EMPTY_PAIRS
    delta = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", delta, delta)
    iu, ju = np.triu_indices(n, k=1)
    mask = d2[iu, ju] <= cutoff * cutoff
    return iu[mask].astype(np.int64), ju[mask].astype(np.int64)


# ---------------------------------------------------------------------------
# dispatch

NUMBA_ENABLED = False
if _numba_requested():
    try:
        import numba

        candidate_pairs = numba.njit(cache=True)(_candidate_pairs_loop)
        disk_impulses = numba.njit(cache=True)(_disk_impulses_loop)
        disk_corrections = numba.njit(cache=True)(_disk_corrections_loop)
        _wall_contact = numba.njit(cache=True, inline="always")(_wall_contact)
        wall_impulses = numba.njit(cache=True)(_wall_impulses_loop)
        wall_corrections = numba.njit(cache=True)(_wall_corrections_loop)
        distance_constraints = numba.njit(cache=True)(_distance_constraints_loop)
        NUMBA_ENABLED = True
    except ImportError:
        pass

if not NUMBA_ENABLED:
    candidate_pairs = _candidate_pairs_numpy
    disk_impulses = _disk_impulses_loop
    disk_corrections = _disk_corrections_loop
    wall_impulses = _wall_impulses_loop
    wall_corrections = _wall_corrections_loop
    distance_constraints = _distance_constraints_loop


def sorted_pairs(pos, cutoff):
    """candidate_pairs with a deterministic lexicographic (i, j) ordering."""
    pi, pj = candidate_pairs(np.ascontiguousarray(pos, dtype=np.float64), float(cutoff))
    if len(pi) == 0:
        return pi, pj
    order = np.lexsort((pj, pi))
    return pi[order], pj[order]
