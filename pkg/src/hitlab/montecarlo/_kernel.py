"""Compiled inner loops for path simulation.

Shapes are passed as a kind-code vector plus a parameter matrix so that the
loop can dispatch without Python objects:

    0 ball      params = center(d), radius
    1 box       params = lo(d), hi(d)
    2 segment   params = p(2), q(2)                      (d = 2)
    3 cylinder  params = base(3), axis(3), radius, height (d = 3)
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_BALL = 0
KIND_BOX = 1
KIND_SEGMENT = 2
KIND_CYLINDER = 3

STATUS_HIT = 0
STATUS_HORIZON = 1
STATUS_EXIT = 2


@njit(cache=True)
def _signed_distance(kind, p, y, d):
    if kind == 0:
        s = 0.0
        for i in range(d):
            s += (y[i] - p[i]) ** 2
        return math.sqrt(s) - p[d]
    if kind == 1:
        out2 = 0.0
        qmax = -1e300
        for i in range(d):
            c = 0.5 * (p[i] + p[d + i])
            b = 0.5 * (p[d + i] - p[i])
            q = abs(y[i] - c) - b
            if q > 0.0:
                out2 += q * q
            if q > qmax:
                qmax = q
        if qmax > 0.0:
            return math.sqrt(out2)
        return qmax
    if kind == 2:
        dx = p[2] - p[0]
        dy = p[3] - p[1]
        s = ((y[0] - p[0]) * dx + (y[1] - p[1]) * dy) / (dx * dx + dy * dy)
        s = min(1.0, max(0.0, s))
        return math.hypot(y[0] - p[0] - s * dx, y[1] - p[1] - s * dy)
    # cylinder
    s = 0.0
    for i in range(3):
        s += (y[i] - p[i]) * p[3 + i]
    r2 = 0.0
    for i in range(3):
        w = y[i] - p[i] - s * p[3 + i]
        r2 += w * w
    dr = math.sqrt(r2) - p[6]
    ds = max(-s, s - p[7])
    if dr > 0.0 or ds > 0.0:
        return math.hypot(max(dr, 0.0), max(ds, 0.0))
    return max(dr, ds)


@njit(cache=True)
def _closest_boundary(kind, p, y, d, out):
    if kind == 0:
        n = 0.0
        for i in range(d):
            n += (y[i] - p[i]) ** 2
        n = math.sqrt(n)
        for i in range(d):
            if n > 0.0:
                out[i] = p[i] + p[d] * (y[i] - p[i]) / n
            else:
                out[i] = p[i] + (p[d] if i == 0 else 0.0)
        return
    if kind == 1:
        inside = True
        for i in range(d):
            if y[i] < p[i] or y[i] > p[d + i]:
                inside = False
        if not inside:
            for i in range(d):
                out[i] = min(p[d + i], max(p[i], y[i]))
            return
        best = 1e300
        axis = 0
        upper = False
        for i in range(d):
            if y[i] - p[i] < best:
                best = y[i] - p[i]
                axis = i
                upper = False
            if p[d + i] - y[i] < best:
                best = p[d + i] - y[i]
                axis = i
                upper = True
        for i in range(d):
            out[i] = y[i]
        out[axis] = p[d + axis] if upper else p[axis]
        return
    if kind == 2:
        dx = p[2] - p[0]
        dy = p[3] - p[1]
        s = ((y[0] - p[0]) * dx + (y[1] - p[1]) * dy) / (dx * dx + dy * dy)
        s = min(1.0, max(0.0, s))
        out[0] = p[0] + s * dx
        out[1] = p[1] + s * dy
        return
    s = 0.0
    for i in range(3):
        s += (y[i] - p[i]) * p[3 + i]
    rv = np.empty(3)
    rn = 0.0
    for i in range(3):
        rv[i] = y[i] - p[i] - s * p[3 + i]
        rn += rv[i] * rv[i]
    rn = math.sqrt(rn)
    radius = p[6]
    height = p[7]
    if rn > radius or s < 0.0 or s > height:
        sc = min(height, max(0.0, s))
        scale = 1.0 if rn <= radius else radius / rn
        for i in range(3):
            out[i] = p[i] + sc * p[3 + i] + scale * rv[i]
        return
    side = radius - rn
    bottom = s
    top = height - s
    if side <= bottom and side <= top:
        scale = radius / rn if rn > 0.0 else 0.0
        if rn == 0.0:
            # any radial direction works at the axis; pick one orthogonal to it
            ax = p[3:6]
            tmp = np.array([1.0, 0.0, 0.0]) if abs(ax[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            dot = tmp[0] * ax[0] + tmp[1] * ax[1] + tmp[2] * ax[2]
            nrm = 0.0
            for i in range(3):
                rv[i] = tmp[i] - dot * ax[i]
                nrm += rv[i] * rv[i]
            scale = radius / math.sqrt(nrm)
        for i in range(3):
            out[i] = p[i] + s * p[3 + i] + scale * rv[i]
    elif bottom <= top:
        for i in range(3):
            out[i] = p[i] + rv[i]
    else:
        for i in range(3):
            out[i] = p[i] + height * p[3 + i] + rv[i]


@njit(cache=True)
def _segment_crossing(p, y0, y1):
    """Fraction along y0->y1 where the chord crosses segment p, or -1."""
    rx = y1[0] - y0[0]
    ry = y1[1] - y0[1]
    sx = p[2] - p[0]
    sy = p[3] - p[1]
    den = rx * sy - ry * sx
    if den == 0.0:
        return -1.0
    qx = p[0] - y0[0]
    qy = p[1] - y0[1]
    f = (qx * sy - qy * sx) / den
    u = (qx * ry - qy * rx) / den
    if 0.0 <= f <= 1.0 and 0.0 <= u <= 1.0:
        return f
    return -1.0


@njit(cache=True)
def _min_distance(kinds, params, y, d):
    best = 1e300
    idx = 0
    for j in range(kinds.shape[0]):
        sd = _signed_distance(kinds[j], params[j], y, d)
        if sd < best:
            best = sd
            idx = j
    return best, idx


@njit(cache=True)
def simulate_paths(rng, starts, drift, horizon, kinds, params, step, k_ratio,
                   outer_radius, mark_radius, status, sigma, site, prim, marked):
    """Run one path per row of ``starts`` until it hits the shape, leaves the
    ball of radius ``outer_radius`` (use inf for none) or reaches ``horizon``.

    ``marked`` records whether the path reached radius ``mark_radius`` before
    stopping (pass 0 or inf to disable).
    """
    n, d = starts.shape
    n_prim = kinds.shape[0]
    y0 = np.empty(d)
    y1 = np.empty(d)
    ym = np.empty(d)
    vnorm = 0.0
    for i in range(d):
        vnorm += drift[i] * drift[i]
    vnorm = math.sqrt(vnorm)
    use_outer = outer_radius < np.inf
    use_mark = mark_radius > 0.0 and mark_radius < np.inf
    dist0 = np.empty(n_prim)
    dist1 = np.empty(n_prim)
    for k in range(n):
        for i in range(d):
            y0[i] = starts[k, i]
        t = 0.0
        for j in range(n_prim):
            dist0[j] = _signed_distance(kinds[j], params[j], y0, d)
        r0 = 0.0
        for i in range(d):
            r0 += y0[i] * y0[i]
        r0 = math.sqrt(r0)
        is_marked = use_mark and r0 >= mark_radius
        status[k] = STATUS_HORIZON
        sigma[k] = np.nan
        prim[k] = -1
        for i in range(d):
            site[k, i] = np.nan
        while True:
            dmin = 1e300
            for j in range(n_prim):
                if dist0[j] < dmin:
                    dmin = dist0[j]
            if use_outer and outer_radius - r0 < dmin:
                dmin = outer_radius - r0
            if use_mark and not is_marked and mark_radius - r0 < dmin:
                dmin = mark_radius - r0
            h = max(step, (dmin / k_ratio) ** 2)
            if vnorm > 0.0:
                h = min(h, max(step, dmin / (k_ratio * vnorm)))
            remaining = horizon - t
            if remaining <= 0.0:
                break
            if h > remaining:
                h = remaining
            sq = math.sqrt(h)
            for i in range(d):
                y1[i] = y0[i] + sq * rng.standard_normal() + drift[i] * h
            r1 = 0.0
            for i in range(d):
                r1 += y1[i] * y1[i]
            r1 = math.sqrt(r1)
            # earliest event within this step, as a fraction of h
            best_f = 2.0
            best_j = -1
            for j in range(n_prim):
                sd = _signed_distance(kinds[j], params[j], y1, d)
                dist1[j] = sd
                f = 2.0
                if sd <= 0.0:
                    den = dist0[j] - sd
                    f = dist0[j] / den if den > 0.0 else 0.0
                else:
                    if kinds[j] == KIND_SEGMENT:
                        fc = _segment_crossing(params[j], y0, y1)
                        if fc >= 0.0:
                            f = fc
                    if f > 1.0:
                        pb = math.exp(-2.0 * dist0[j] * sd / h)
                        if pb > 1e-300 and rng.random() < pb:
                            f = dist0[j] / (dist0[j] + sd)
                if f < best_f:
                    best_f = f
                    best_j = j
            if use_mark and not is_marked:
                g0 = mark_radius - r0
                g1 = mark_radius - r1
                fm = 2.0
                if g1 <= 0.0:
                    fm = g0 / (g0 - g1)
                else:
                    pb = math.exp(-2.0 * g0 * g1 / h)
                    if pb > 1e-300 and rng.random() < pb:
                        fm = g0 / (g0 + g1)
                if fm <= 1.0 and fm <= best_f:
                    is_marked = True
            exit_f = 2.0
            if use_outer:
                g0 = outer_radius - r0
                g1 = outer_radius - r1
                if g1 <= 0.0:
                    exit_f = g0 / (g0 - g1)
                else:
                    pb = math.exp(-2.0 * g0 * g1 / h)
                    if pb > 1e-300 and rng.random() < pb:
                        exit_f = g0 / (g0 + g1)
            if best_j >= 0 and best_f <= exit_f:
                for i in range(d):
                    ym[i] = y0[i] + best_f * (y1[i] - y0[i])
                _closest_boundary(kinds[best_j], params[best_j], ym, d, y1)
                status[k] = STATUS_HIT
                sigma[k] = t + best_f * h
                prim[k] = best_j
                for i in range(d):
                    site[k, i] = y1[i]
                break
            if exit_f <= 1.0:
                status[k] = STATUS_EXIT
                sigma[k] = t + exit_f * h
                break
            t += h
            for i in range(d):
                y0[i] = y1[i]
            for j in range(n_prim):
                dist0[j] = dist1[j]
            r0 = r1
        marked[k] = is_marked


@njit(cache=True)
def mark_sausage(path, kinds, params, origin, voxel, shape, grid, offsets_lo, offsets_hi):
    """Mark every voxel whose centre z satisfies z - B_s in A for some path point.

    ``offsets_lo``/``offsets_hi`` bound, per primitive, the voxel index box
    around a path point that can contain such centres.
    """
    n_pts, d = path.shape
    z = np.empty(d)
    rel = np.empty(d)
    for k in range(n_pts):
        for j in range(kinds.shape[0]):
            lo = np.empty(d, dtype=np.int64)
            hi = np.empty(d, dtype=np.int64)
            for i in range(d):
                lo[i] = max(0, int(math.floor((path[k, i] + offsets_lo[j, i] - origin[i]) / voxel)))
                hi[i] = min(shape[i] - 1, int(math.floor((path[k, i] + offsets_hi[j, i] - origin[i]) / voxel)))
            if d == 2:
                for a in range(lo[0], hi[0] + 1):
                    z[0] = origin[0] + (a + 0.5) * voxel
                    rel[0] = z[0] - path[k, 0]
                    for b in range(lo[1], hi[1] + 1):
                        if grid[a, b, 0]:
                            continue
                        z[1] = origin[1] + (b + 0.5) * voxel
                        rel[1] = z[1] - path[k, 1]
                        if _signed_distance(kinds[j], params[j], rel, d) <= 0.0:
                            grid[a, b, 0] = True
            else:
                for a in range(lo[0], hi[0] + 1):
                    rel[0] = origin[0] + (a + 0.5) * voxel - path[k, 0]
                    for b in range(lo[1], hi[1] + 1):
                        rel[1] = origin[1] + (b + 0.5) * voxel - path[k, 1]
                        for c in range(lo[2], hi[2] + 1):
                            if grid[a, b, c]:
                                continue
                            rel[2] = origin[2] + (c + 0.5) * voxel - path[k, 2]
                            if _signed_distance(kinds[j], params[j], rel, d) <= 0.0:
                                grid[a, b, c] = True
    return grid.sum()
