"""Numba kernels for ray, distance and shading queries.

Geometry is passed as packed float64 arrays:

    walls  (W, 6): x0, y0, x1, y1, z0, z1   vertical zero-thickness panels
    boxes  (B, 6): xlo, ylo, zlo, xhi, yhi, zhi
    bounds (4,):   xmin, ymin, xmax, ymax   extent of floor and ceiling planes

Surface kinds returned by ``trace``: 0 wall, 1 box, 2 floor, 3 ceiling.
"""

import math

import numpy as np
from numba import njit

EPS = 1e-9
KIND_WALL = 0
KIND_BOX = 1
KIND_FLOOR = 2
KIND_CEILING = 3

FAMILY_SOLID = 0
FAMILY_STRIPES = 1
FAMILY_CHECKER = 2
FAMILY_NOISE = 3


@njit(cache=True)
def trace(ox, oy, oz, dx, dy, dz, tmax, walls, boxes, floor_z, ceil_z, bounds):
    best = tmax
    kind = -1
    idx = -1
    nx = 0.0
    ny = 0.0
    nz = 0.0
    for i in range(walls.shape[0]):
        x0 = walls[i, 0]
        y0 = walls[i, 1]
        ex = walls[i, 2] - x0
        ey = walls[i, 3] - y0
        den = -ey * dx + ex * dy
        if abs(den) < 1e-14:
            continue
        t = (-ey * (x0 - ox) + ex * (y0 - oy)) / den
        if t <= EPS or t > best:
            continue
        hx = ox + t * dx - x0
        hy = oy + t * dy - y0
        s = (hx * ex + hy * ey) / (ex * ex + ey * ey)
        if s < 0.0 or s > 1.0:
            continue
        hz = oz + t * dz
        if hz < walls[i, 4] or hz > walls[i, 5]:
            continue
        best = t
        kind = KIND_WALL
        idx = i
        ln = math.sqrt(ex * ex + ey * ey)
        sg = -1.0 if den > 0.0 else 1.0
        nx = sg * -ey / ln
        ny = sg * ex / ln
        nz = 0.0
    for i in range(boxes.shape[0]):
        tn = -np.inf
        tf = np.inf
        ax = -1
        asg = 0.0
        miss = False
        for a in range(3):
            if a == 0:
                o = ox
                d = dx
            elif a == 1:
                o = oy
                d = dy
            else:
                o = oz
                d = dz
            lo = boxes[i, a]
            hi = boxes[i, a + 3]
            if abs(d) < 1e-300:
                if o < lo or o > hi:
                    miss = True
                    break
                continue
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            sg = -1.0
            if t1 > t2:
                tmp = t1
                t1 = t2
                t2 = tmp
                sg = 1.0
            if t1 > tn:
                tn = t1
                ax = a
                asg = sg
            if t2 < tf:
                tf = t2
        if miss or tn > tf:
            continue
        if tn > EPS:
            if tn > best:
                continue
            best = tn
            kind = KIND_BOX
            idx = i
            nx = asg if ax == 0 else 0.0
            ny = asg if ax == 1 else 0.0
            nz = asg if ax == 2 else 0.0
        elif tf > EPS and tf <= best:
            # origin inside a solid box
            best = tf
            kind = KIND_BOX
            idx = i
            nx = -dx
            ny = -dy
            nz = -dz
    if dz < 0.0:
        t = (floor_z - oz) / dz
        if t > EPS and t <= best:
            hx = ox + t * dx
            hy = oy + t * dy
            if bounds[0] <= hx <= bounds[2] and bounds[1] <= hy <= bounds[3]:
                best = t
                kind = KIND_FLOOR
                idx = 0
                nx = 0.0
                ny = 0.0
                nz = 1.0
    elif dz > 0.0:
        t = (ceil_z - oz) / dz
        if t > EPS and t <= best:
            hx = ox + t * dx
            hy = oy + t * dy
            if bounds[0] <= hx <= bounds[2] and bounds[1] <= hy <= bounds[3]:
                best = t
                kind = KIND_CEILING
                idx = 0
                nx = 0.0
                ny = 0.0
                nz = -1.0
    if kind < 0:
        return np.inf, -1, -1, 0.0, 0.0, 0.0
    return best, kind, idx, nx, ny, nz


@njit(cache=True)
def trace_many(origin, dirs, tmax, walls, boxes, floor_z, ceil_z, bounds):
    n = dirs.shape[0]
    dist = np.empty(n)
    kinds = np.empty(n, dtype=np.int64)
    idxs = np.empty(n, dtype=np.int64)
    normals = np.empty((n, 3))
    for k in range(n):
        t, kd, ix, nx, ny, nz = trace(origin[0], origin[1], origin[2],
                                      dirs[k, 0], dirs[k, 1], dirs[k, 2],
                                      tmax, walls, boxes, floor_z, ceil_z, bounds)
        dist[k] = t
        kinds[k] = kd
        idxs[k] = ix
        normals[k, 0] = nx
        normals[k, 1] = ny
        normals[k, 2] = nz
    return dist, kinds, idxs, normals


@njit(cache=True)
def wall_distance(px, py, pz, walls, i):
    x0 = walls[i, 0]
    y0 = walls[i, 1]
    ex = walls[i, 2] - x0
    ey = walls[i, 3] - y0
    s = ((px - x0) * ex + (py - y0) * ey) / (ex * ex + ey * ey)
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    zc = pz
    if zc < walls[i, 4]:
        zc = walls[i, 4]
    elif zc > walls[i, 5]:
        zc = walls[i, 5]
    ddx = px - (x0 + s * ex)
    ddy = py - (y0 + s * ey)
    ddz = pz - zc
    return math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)


@njit(cache=True)
def box_distance(px, py, pz, boxes, i):
    acc = 0.0
    for a in range(3):
        p = px if a == 0 else (py if a == 1 else pz)
        lo = boxes[i, a]
        hi = boxes[i, a + 3]
        if p < lo:
            acc += (lo - p) * (lo - p)
        elif p > hi:
            acc += (p - hi) * (p - hi)
    return math.sqrt(acc)


@njit(cache=True)
def point_distance(px, py, pz, walls, boxes, floor_z, ceil_z):
    best = pz - floor_z
    c = ceil_z - pz
    if c < best:
        best = c
    for i in range(walls.shape[0]):
        d = wall_distance(px, py, pz, walls, i)
        if d < best:
            best = d
    for i in range(boxes.shape[0]):
        d = box_distance(px, py, pz, boxes, i)
        if d < best:
            best = d
    return best


@njit(cache=True)
def point_distance_many(points, walls, boxes, floor_z, ceil_z):
    out = np.empty(points.shape[0])
    for k in range(points.shape[0]):
        out[k] = point_distance(points[k, 0], points[k, 1], points[k, 2],
                                walls, boxes, floor_z, ceil_z)
    return out


@njit(cache=True)
def _prim_distance(kind, i, px, py, pz, walls, boxes, floor_z, ceil_z):
    if kind == KIND_WALL:
        return wall_distance(px, py, pz, walls, i)
    if kind == KIND_BOX:
        return box_distance(px, py, pz, boxes, i)
    if kind == KIND_FLOOR:
        return pz - floor_z
    return ceil_z - pz


@njit(cache=True)
def segment_min_distance(p0, p1, walls, boxes, floor_z, ceil_z, stop_below):
    """Minimum distance from the segment p0-p1 to any surface.

    Each primitive is convex so its distance along the segment is convex in
    the segment parameter; golden-section search per primitive is exact to
    ~1e-12. Returns early once a value below ``stop_below`` is found.
    """
    sx = p1[0] - p0[0]
    sy = p1[1] - p0[1]
    sz = p1[2] - p0[2]
    seg_len = math.sqrt(sx * sx + sy * sy + sz * sz)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    best = np.inf
    n_w = walls.shape[0]
    n_b = boxes.shape[0]
    for q in range(n_w + n_b + 2):
        if q < n_w:
            kind = KIND_WALL
            i = q
        elif q < n_w + n_b:
            kind = KIND_BOX
            i = q - n_w
        elif q == n_w + n_b:
            kind = KIND_FLOOR
            i = 0
        else:
            kind = KIND_CEILING
            i = 0
        d0 = _prim_distance(kind, i, p0[0], p0[1], p0[2], walls, boxes, floor_z, ceil_z)
        d1 = _prim_distance(kind, i, p1[0], p1[1], p1[2], walls, boxes, floor_z, ceil_z)
        m = d0 if d0 < d1 else d1
        if 0.5 * (d0 + d1 - seg_len) < best and seg_len > 0.0:
            a = 0.0
            b = 1.0
            c = b - invphi * (b - a)
            e = a + invphi * (b - a)
            fc = _prim_distance(kind, i, p0[0] + c * sx, p0[1] + c * sy, p0[2] + c * sz,
                                walls, boxes, floor_z, ceil_z)
            fe = _prim_distance(kind, i, p0[0] + e * sx, p0[1] + e * sy, p0[2] + e * sz,
                                walls, boxes, floor_z, ceil_z)
            for _ in range(60):
                if fc < fe:
                    b = e
                    e = c
                    fe = fc
                    c = b - invphi * (b - a)
                    fc = _prim_distance(kind, i, p0[0] + c * sx, p0[1] + c * sy,
                                        p0[2] + c * sz, walls, boxes, floor_z, ceil_z)
                else:
                    a = c
                    c = e
                    fc = fe
                    e = a + invphi * (b - a)
                    fe = _prim_distance(kind, i, p0[0] + e * sx, p0[1] + e * sy,
                                        p0[2] + e * sz, walls, boxes, floor_z, ceil_z)
                if b - a < 1e-12:
                    break
                if fc < stop_below or fe < stop_below:
                    break
            if fc < m:
                m = fc
            if fe < m:
                m = fe
        if m < best:
            best = m
        if best < stop_below:
            return best
    return best


@njit(cache=True)
def _hash01(ix, iy, iz, seed):
    h = (ix * 73856093) ^ (iy * 19349663) ^ (iz * 83492791) ^ (seed * 2654435761)
    h = h & 0xFFFFFFFF
    h = ((h >> 16) ^ h) * 0x45D9F3B
    h = h & 0xFFFFFFFF
    h = ((h >> 16) ^ h) * 0x45D9F3B
    h = h & 0xFFFFFFFF
    h = (h >> 16) ^ h
    return (h & 0xFFFFFF) / 16777216.0


@njit(cache=True)
def _smooth(t):
    return t * t * (3.0 - 2.0 * t)


@njit(cache=True)
def value_noise(x, y, z, seed):
    ix = math.floor(x)
    iy = math.floor(y)
    iz = math.floor(z)
    fx = _smooth(x - ix)
    fy = _smooth(y - iy)
    fz = _smooth(z - iz)
    ix = np.int64(ix)
    iy = np.int64(iy)
    iz = np.int64(iz)
    acc = 0.0
    for cx in range(2):
        wx = fx if cx == 1 else 1.0 - fx
        for cy in range(2):
            wy = fy if cy == 1 else 1.0 - fy
            for cz in range(2):
                wz = fz if cz == 1 else 1.0 - fz
                acc += wx * wy * wz * _hash01(ix + cx, iy + cy, iz + cz, seed)
    return acc


@njit(cache=True)
def pattern_mix(family, scale, axis, seed, hx, hy, hz):
    """Blend weight of the accent colour at a world point (0 = base)."""
    if family == FAMILY_SOLID:
        return 0.0
    if family == FAMILY_STRIPES:
        v = (hx * axis[0] + hy * axis[1] + hz * axis[2]) / scale
        return 1.0 if v - math.floor(v) >= 0.5 else 0.0
    if family == FAMILY_CHECKER:
        k = math.floor(hx / scale) + math.floor(hy / scale) + math.floor(hz / scale)
        return 1.0 if np.int64(k) % 2 != 0 else 0.0
    return value_noise(hx / scale, hy / scale, hz / scale, seed)


@njit(cache=True)
def shade_many(origin, dirs, tmax, walls, boxes, floor_z, ceil_z, bounds,
               surf_mat, mat_family, mat_base, mat_accent, mat_scale, mat_axis,
               mat_seed, lights, ambient):
    """Trace and shade every ray; returns (rgb (N, 3), range (N,)).

    ``surf_mat`` maps walls, then boxes, then floor, then ceiling to material
    indices. ``lights`` rows are x, y, z, intensity, r, g, b.
    """
    n = dirs.shape[0]
    rgb = np.zeros((n, 3))
    dist = np.empty(n)
    n_w = walls.shape[0]
    n_b = boxes.shape[0]
    for k in range(n):
        t, kd, ix, nx, ny, nz = trace(origin[0], origin[1], origin[2],
                                      dirs[k, 0], dirs[k, 1], dirs[k, 2],
                                      tmax, walls, boxes, floor_z, ceil_z, bounds)
        dist[k] = t
        if kd < 0:
            continue
        if kd == KIND_WALL:
            m = surf_mat[ix]
        elif kd == KIND_BOX:
            m = surf_mat[n_w + ix]
        elif kd == KIND_FLOOR:
            m = surf_mat[n_w + n_b]
        else:
            m = surf_mat[n_w + n_b + 1]
        hx = origin[0] + t * dirs[k, 0]
        hy = origin[1] + t * dirs[k, 1]
        hz = origin[2] + t * dirs[k, 2]
        w = pattern_mix(mat_family[m], mat_scale[m], mat_axis[m], mat_seed[m], hx, hy, hz)
        lr = ambient
        lg = ambient
        lb = ambient
        for j in range(lights.shape[0]):
            lx = lights[j, 0] - hx
            ly = lights[j, 1] - hy
            lz = lights[j, 2] - hz
            d2 = lx * lx + ly * ly + lz * lz
            dl = math.sqrt(d2)
            if dl <= 0.0:
                continue
            cosang = (nx * lx + ny * ly + nz * lz) / dl
            if cosang <= 0.0:
                continue
            s = cosang * lights[j, 3] / (1.0 + d2)
            lr += s * lights[j, 4]
            lg += s * lights[j, 5]
            lb += s * lights[j, 6]
        ar = (1.0 - w) * mat_base[m, 0] + w * mat_accent[m, 0]
        ag = (1.0 - w) * mat_base[m, 1] + w * mat_accent[m, 1]
        ab = (1.0 - w) * mat_base[m, 2] + w * mat_accent[m, 2]
        rgb[k, 0] = min(1.0, max(0.0, ar * lr))
        rgb[k, 1] = min(1.0, max(0.0, ag * lg))
        rgb[k, 2] = min(1.0, max(0.0, ab * lb))
    return rgb, dist
