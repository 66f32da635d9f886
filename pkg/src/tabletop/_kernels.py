"""Numba-compiled inner loops for the per-frame hot path.

Everything here is called with pre-validated, contiguous float64/int64
arrays; validation and all NaN handling happen in the callers.
"""

import numpy as np
from numba import njit

# Axis span (in cells) beyond which packed 63-bit keys would overflow and
# callers must use their slow fallback paths.
MAX_CELL_SPAN = 1 << 21

_HASH_MULT = np.int64(-7046029254386353131)


@njit(cache=True)
def _cell_coords(px, py, pz, leaf):
    """Per-axis cell indices (floor convention) and their min/max, fused
    into a single pass."""
    n = px.shape[0]
    cx = np.empty(n, dtype=np.int64)
    cy = np.empty(n, dtype=np.int64)
    cz = np.empty(n, dtype=np.int64)
    ox = oy = oz = np.int64(2 ** 62)
    mx = my = mz = np.int64(-2 ** 62)
    for i in range(n):
        a = np.int64(np.floor(px[i] / leaf))
        b = np.int64(np.floor(py[i] / leaf))
        c = np.int64(np.floor(pz[i] / leaf))
        cx[i] = a
        cy[i] = b
        cz[i] = c
        if a < ox:
            ox = a
        if a > mx:
            mx = a
        if b < oy:
            oy = b
        if b > my:
            my = b
        if c < oz:
            oz = c
        if c > mz:
            mz = c
    return cx, cy, cz, ox, oy, oz, mx, my, mz


@njit(cache=True)
def _pack_keys(cx, cy, cz, ox, oy, oz, mx, my, mz):
    """Pack (z, y, x) cell coords into one int64 whose ascending order is
    the canonical (cell_z, cell_y, cell_x) output order."""
    n = cx.shape[0]
    bx = 1
    while (1 << bx) <= (mx - ox):
        bx += 1
    by = 1
    while (1 << by) <= (my - oy):
        by += 1
    bz = 1
    while (1 << bz) <= (mz - oz):
        bz += 1
    keys = np.empty(n, dtype=np.int64)
    for i in range(n):
        keys[i] = (((cz[i] - oz) << (bx + by)) | ((cy[i] - oy) << bx)
                   | (cx[i] - ox))
    return keys, bx, by, bz


@njit(cache=True)
def _radix_order(keys, total_bits):
    """Stable LSD radix argsort with 16-bit digits."""
    n = keys.shape[0]
    order = np.arange(n, dtype=np.int64)
    tmp = np.empty(n, dtype=np.int64)
    hist = np.empty(1 << 16, dtype=np.int64)
    for p in range((total_bits + 15) // 16):
        shift = p * 16
        hist[:] = 0
        for i in range(n):
            hist[(keys[order[i]] >> shift) & 0xFFFF] += 1
        acc = 0
        for d in range(1 << 16):
            c = hist[d]
            hist[d] = acc
            acc += c
        for i in range(n):
            d = (keys[order[i]] >> shift) & 0xFFFF
            tmp[hist[d]] = order[i]
            hist[d] += 1
        order, tmp = tmp, order
    return order


@njit(cache=True)
def voxel_accumulate(px, py, pz, packed_rgb, leaf):
    """Bin points into leaf-sized cells and accumulate per-cell sums.

    ``packed_rgb`` holds r*65536 + g*256 + b per point. Returns
    (count, sx, sy, sz, sr, sg, sb) with one row per occupied cell,
    already in canonical (cell_z, cell_y, cell_x) ascending order, or
    all-empty arrays when an axis span overflows MAX_CELL_SPAN (the
    caller then takes its slow path). The radix passes carry coordinates
    and colors along with the keys so the final accumulation runs
    sequentially.
    """
    n = px.shape[0]
    cx, cy, cz, ox, oy, oz, mx, my, mz = _cell_coords(px, py, pz, leaf)
    if max(mx - ox, my - oy, mz - oz) + 2 >= MAX_CELL_SPAN:
        empty_f = np.empty(0, dtype=np.float64)
        empty_i = np.empty(0, dtype=np.int64)
        return empty_i, empty_f, empty_f, empty_f, empty_i, empty_i, empty_i
    keys, bx, by, bz = _pack_keys(cx, cy, cz, ox, oy, oz, mx, my, mz)
    total_bits = bx + by + bz

    kx = px.copy()
    ky = py.copy()
    kz = pz.copy()
    kc = packed_rgb.copy()
    tx = np.empty(n, dtype=np.float64)
    ty = np.empty(n, dtype=np.float64)
    tz = np.empty(n, dtype=np.float64)
    tc = np.empty(n, dtype=np.int64)
    tk = np.empty(n, dtype=np.int64)
    hist = np.empty(1 << 16, dtype=np.int64)
    for p in range((total_bits + 15) // 16):
        shift = p * 16
        hist[:] = 0
        for i in range(n):
            hist[(keys[i] >> shift) & 0xFFFF] += 1
        acc = 0
        for d in range(1 << 16):
            c = hist[d]
            hist[d] = acc
            acc += c
        for i in range(n):
            d = (keys[i] >> shift) & 0xFFFF
            t = hist[d]
            hist[d] = t + 1
            tk[t] = keys[i]
            tx[t] = kx[i]
            ty[t] = ky[i]
            tz[t] = kz[i]
            tc[t] = kc[i]
        keys, tk = tk, keys
        kx, tx = tx, kx
        ky, ty = ty, ky
        kz, tz = tz, kz
        kc, tc = tc, kc

    m = 1
    for t in range(1, n):
        if keys[t] != keys[t - 1]:
            m += 1
    count = np.zeros(m, dtype=np.int64)
    sx = np.zeros(m, dtype=np.float64)
    sy = np.zeros(m, dtype=np.float64)
    sz = np.zeros(m, dtype=np.float64)
    sr = np.zeros(m, dtype=np.int64)
    sg = np.zeros(m, dtype=np.int64)
    sb = np.zeros(m, dtype=np.int64)
    slot = -1
    prev = np.int64(-1)
    for t in range(n):
        if keys[t] != prev:
            slot += 1
            prev = keys[t]
        count[slot] += 1
        sx[slot] += kx[t]
        sy[slot] += ky[t]
        sz[slot] += kz[t]
        c = kc[t]
        sr[slot] += (c >> 16) & 0xFF
        sg[slot] += (c >> 8) & 0xFF
        sb[slot] += c & 0xFF
    return count, sx, sy, sz, sr, sg, sb


@njit(cache=True)
def lcg_triplets(n, iterations, seed):
    """RANSAC sample rows from the contract LCG (see plane.Lcg64)."""
    mult = np.uint64(6364136223846793005)
    inc = np.uint64(1442695040888963407)
    state = np.uint64(seed)
    out = np.empty((iterations, 3), dtype=np.int64)
    nn = np.uint64(n)
    for j in range(iterations):
        state = state * mult + inc
        i1 = np.int64((state >> np.uint64(33)) % nn)
        state = state * mult + inc
        i2 = np.int64((state >> np.uint64(33)) % nn)
        while i2 == i1:
            state = state * mult + inc
            i2 = np.int64((state >> np.uint64(33)) % nn)
        state = state * mult + inc
        i3 = np.int64((state >> np.uint64(33)) % nn)
        while i3 == i1 or i3 == i2:
            state = state * mult + inc
            i3 = np.int64((state >> np.uint64(33)) % nn)
        out[j, 0] = i1
        out[j, 1] = i2
        out[j, 2] = i3
    return out


@njit(cache=True)
def plane_candidates(px, py, pz, samples, thresh):
    """Fit one plane per 3-index sample row and count its inliers.

    Returns (normals, offsets, counts); a degenerate (collinear) sample
    gets count -1 and is never selected.
    """
    m = samples.shape[0]
    n = px.shape[0]
    normals = np.zeros((m, 3), dtype=np.float64)
    offsets = np.zeros(m, dtype=np.float64)
    counts = np.full(m, -1, dtype=np.int64)
    for j in range(m):
        i1, i2, i3 = samples[j, 0], samples[j, 1], samples[j, 2]
        ax = px[i2] - px[i1]
        ay = py[i2] - py[i1]
        az = pz[i2] - pz[i1]
        bx = px[i3] - px[i1]
        by = py[i3] - py[i1]
        bz = pz[i3] - pz[i1]
        nx = ay * bz - az * by
        ny = az * bx - ax * bz
        nz = ax * by - ay * bx
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        if norm < 1e-12:
            continue
        nx /= norm
        ny /= norm
        nz /= norm
        d = -(nx * px[i1] + ny * py[i1] + nz * pz[i1])
        c = 0
        for i in range(n):
            v = nx * px[i] + ny * py[i] + nz * pz[i] + d
            c += (v <= thresh) and (v >= -thresh)
        normals[j, 0] = nx
        normals[j, 1] = ny
        normals[j, 2] = nz
        offsets[j] = d
        counts[j] = c
    return normals, offsets, counts


@njit(cache=True)
def _find_root(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def grid_cluster_labels(px, py, pz, tol):
    """Connected-component root per point under closed-ball tolerance.

    Points are hashed into tol-sized cells; only the 27-cell neighborhood
    can contain neighbors, so unions over those pairs reproduce the exact
    tolerance graph. Returns an empty array when an axis span overflows
    MAX_CELL_SPAN (the caller then takes its slow path).
    """
    n = px.shape[0]
    cx, cy, cz, ox, oy, oz, mx, my, mz = _cell_coords(px, py, pz, tol)
    if max(mx - ox, my - oy, mz - oz) + 2 >= MAX_CELL_SPAN:
        return np.empty(0, dtype=np.int64)
    keys, bx, by, bz = _pack_keys(cx, cy, cz, ox, oy, oz, mx, my, mz)
    order = _radix_order(keys, bx + by + bz)
    cap = 1
    while cap < 2 * n:
        cap <<= 1
    mask = cap - 1
    tkey = np.full(cap, -1, dtype=np.int64)
    tstart = np.empty(cap, dtype=np.int64)
    tend = np.empty(cap, dtype=np.int64)
    i = 0
    while i < n:
        j = i
        k = keys[order[i]]
        while j < n and keys[order[j]] == k:
            j += 1
        h = (k * _HASH_MULT) & mask
        while tkey[h] != -1:
            h = (h + 1) & mask
        tkey[h] = k
        tstart[h] = i
        tend[h] = j
        i = j

    # Lexicographically positive half-neighborhood: each unordered cell
    # pair is visited once; within the own cell, j > i dedups point pairs.
    offsets = np.array([
        (0, 0, 0),
        (0, 0, 1), (0, 1, -1), (0, 1, 0), (0, 1, 1),
        (1, -1, -1), (1, -1, 0), (1, -1, 1),
        (1, 0, -1), (1, 0, 0), (1, 0, 1),
        (1, 1, -1), (1, 1, 0), (1, 1, 1),
    ], dtype=np.int64)

    parent = np.arange(n, dtype=np.int64)
    tol2 = tol * tol
    for i in range(n):
        for o in range(offsets.shape[0]):
            zc = cz[i] + offsets[o, 0] - oz
            yc = cy[i] + offsets[o, 1] - oy
            xc = cx[i] + offsets[o, 2] - ox
            if zc < 0 or yc < 0 or xc < 0:
                continue
            own_cell = o == 0
            k = (zc << (bx + by)) | (yc << bx) | xc
            h = (k * _HASH_MULT) & mask
            while True:
                cur = tkey[h]
                if cur == -1:
                    break
                if cur == k:
                    for t in range(tstart[h], tend[h]):
                        j = order[t]
                        if own_cell and j <= i:
                            continue
                        ddx = px[i] - px[j]
                        ddy = py[i] - py[j]
                        ddz = pz[i] - pz[j]
                        if ddx * ddx + ddy * ddy + ddz * ddz <= tol2:
                            ra = _find_root(parent, i)
                            rb = _find_root(parent, j)
                            if ra != rb:
                                parent[rb] = ra
                    break
                h = (h + 1) & mask

    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = _find_root(parent, i)
    return labels
