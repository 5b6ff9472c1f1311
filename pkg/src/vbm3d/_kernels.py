"""Compiled inner loops shared by the public search/transform/filter APIs.

Every public operation that touches pixels goes through these functions, so
the per-call Python wrappers and the full pipeline run the exact same
arithmetic. All kernels release the GIL.

Conventions
-----------
* videos are C-contiguous float64 arrays of shape (frames, height, width)
* a patch is addressed by its top-left-front corner (x, y, t)
* groups are float64 arrays of shape (n, kt, k, k)
* flows are float64 arrays of shape (frames - 1, height, width, 2) holding
  (dx, dy); ``fflow[t]`` maps frame t to t+1, ``bflow[t]`` maps t+1 to t
"""

import math

import numba as nb
import numpy as np

_jit = nb.njit(cache=True, nogil=True)

INV_SQRT2 = 1.0 / math.sqrt(2.0)


@_jit
def round_half_up(v):
    return int(math.floor(v + 0.5))


@_jit
def patch_ssd(vid, x1, y1, t1, x2, y2, t2, k, kt):
    s = 0.0
    for dt in range(kt):
        for i in range(k):
            for j in range(k):
                diff = vid[t1 + dt, y1 + i, x1 + j] - vid[t2 + dt, y2 + i, x2 + j]
                s += diff * diff
    return s


@_jit
def _before(d1, r1, t1, y1, x1, d2, r2, t2, y2, x2):
    # total order: distance, reference flag (ref first), then (t, y, x)
    if d1 != d2:
        return d1 < d2
    if r1 != r2:
        return r1 > r2
    if t1 != t2:
        return t1 < t2
    if y1 != y2:
        return y1 < y2
    return x1 < x2


@_jit
def _insert_top(xs, ys, ds, count, cap, dist, t, y, x):
    """Insert into a (dist, y, x)-ordered top-`cap` list of one frame."""
    if count == cap:
        last = cap - 1
        if not _before(dist, 0, t, y, x, ds[last], 0, t, ys[last], xs[last]):
            return count
        pos = last
    else:
        pos = count
        count += 1
    while pos > 0 and _before(dist, 0, t, y, x, ds[pos - 1], 0, t, ys[pos - 1], xs[pos - 1]):
        xs[pos] = xs[pos - 1]
        ys[pos] = ys[pos - 1]
        ds[pos] = ds[pos - 1]
        pos -= 1
    xs[pos] = x
    ys[pos] = y
    ds[pos] = dist
    return count


@_jit
def frame_search(vid, rx, ry, rt, cxs, cys, ncent, t, s, k, kt, keep, d,
                 out_x, out_y, out_d):
    """Best `keep` patches of frame `t` inside the union of s x s windows.

    Windows are centred on the given top-left positions and clipped to the
    valid patch domain. A candidate coinciding with one of the centres gets
    the correcting factor ``d`` subtracted from its squared distance to the
    reference ``(rx, ry, rt)``. Returns the number of entries written.
    """
    H = vid.shape[1]
    W = vid.shape[2]
    lo = -(s // 2)
    hi = lo + s
    count = 0
    for c in range(ncent):
        cx = cxs[c]
        cy = cys[c]
        x0 = max(cx + lo, 0)
        x1 = min(cx + hi, W - k + 1)
        y0 = max(cy + lo, 0)
        y1 = min(cy + hi, H - k + 1)
        for y in range(y0, y1):
            for x in range(x0, x1):
                seen = False
                for e in range(c):
                    if (cxs[e] + lo <= x < cxs[e] + hi
                            and cys[e] + lo <= y < cys[e] + hi):
                        seen = True
                        break
                if seen:
                    continue
                dist = patch_ssd(vid, x, y, t, rx, ry, rt, k, kt)
                for e in range(ncent):
                    if cxs[e] == x and cys[e] == y:
                        dist -= d
                        break
                count = _insert_top(out_x, out_y, out_d, count, keep, dist, t, y, x)
    return count


@_jit
def trajectory_core(fflow, bflow, rx, ry, rt, nf, k, kt, T, H, W, out_x, out_y):
    """Integrate the flow from (rx, ry, rt) over +-nf frames.

    Positions stay real-valued and are clamped to the valid patch domain;
    the flow is sampled at the rounded position. ``out_x/out_y`` (length T)
    receive the rounded window centres for every reached frame.
    """
    t_last = T - kt
    xmax = float(W - k)
    ymax = float(H - k)
    out_x[rt] = rx
    out_y[rt] = ry
    px = float(rx)
    py = float(ry)
    for h in range(rt + 1, min(rt + nf, t_last) + 1):
        ix = round_half_up(px)
        iy = round_half_up(py)
        px += fflow[h - 1, iy, ix, 0]
        py += fflow[h - 1, iy, ix, 1]
        px = min(max(px, 0.0), xmax)
        py = min(max(py, 0.0), ymax)
        out_x[h] = round_half_up(px)
        out_y[h] = round_half_up(py)
    px = float(rx)
    py = float(ry)
    for h in range(rt - 1, max(rt - nf, 0) - 1, -1):
        ix = round_half_up(px)
        iy = round_half_up(py)
        px += bflow[h, iy, ix, 0]
        py += bflow[h, iy, ix, 1]
        px = min(max(px, 0.0), xmax)
        py = min(max(py, 0.0), ymax)
        out_x[h] = round_half_up(px)
        out_y[h] = round_half_up(py)


@_jit
def search_core(vid, rx, ry, rt, k, kt, N, nf, ns, npr, nb_keep, d, tau,
                guided, fflow, bflow, out_x, out_y, out_t, out_d):
    """Predictive (or flow guided) group search around one reference patch.

    Output arrays must hold at least ``nb_keep * (2 * nf + 1) + 1`` entries.
    Returns the group size, a power of two; entry 0 is the reference.
    """
    T = vid.shape[0]
    H = vid.shape[1]
    W = vid.shape[2]
    t_last = T - kt
    cap = nb_keep * (2 * nf + 1) + 1
    all_x = np.empty(cap, np.int64)
    all_y = np.empty(cap, np.int64)
    all_t = np.empty(cap, np.int64)
    all_d = np.empty(cap, np.float64)
    fx = np.empty(nb_keep, np.int64)
    fy = np.empty(nb_keep, np.int64)
    fd = np.empty(nb_keep, np.float64)
    cx = np.empty(nb_keep, np.int64)
    cy = np.empty(nb_keep, np.int64)
    tx = np.empty(T, np.int64)
    ty = np.empty(T, np.int64)
    if guided:
        trajectory_core(fflow, bflow, rx, ry, rt, nf, k, kt, T, H, W, tx, ty)

    cx[0] = rx
    cy[0] = ry
    m = frame_search(vid, rx, ry, rt, cx, cy, 1, rt, ns, k, kt, nb_keep, d, fx, fy, fd)
    total = 0
    for i in range(m):
        all_x[total] = fx[i]
        all_y[total] = fy[i]
        all_t[total] = rt
        all_d[total] = fd[i]
        total += 1
    mref = m

    for direction in range(2):
        # restart from the reference frame's kept candidates
        nc = mref
        for i in range(mref):
            cx[i] = all_x[i]
            cy[i] = all_y[i]
        if direction == 0:
            start = rt + 1
            stop = min(rt + nf, t_last) + 1
            step = 1
        else:
            start = rt - 1
            stop = max(rt - nf, 0) - 1
            step = -1
        for tt in range(start, stop, step):
            if guided:
                cx[0] = tx[tt]
                cy[0] = ty[tt]
                nc = 1
            m = frame_search(vid, rx, ry, rt, cx, cy, nc, tt, npr, k, kt,
                             nb_keep, d, fx, fy, fd)
            for i in range(m):
                all_x[total] = fx[i]
                all_y[total] = fy[i]
                all_t[total] = tt
                all_d[total] = fd[i]
                total += 1
                cx[i] = fx[i]
                cy[i] = fy[i]
            nc = m

    has_ref = False
    for i in range(mref):
        if all_x[i] == rx and all_y[i] == ry:
            has_ref = True
    if not has_ref:
        all_x[total] = rx
        all_y[total] = ry
        all_t[total] = rt
        all_d[total] = -d
        total += 1

    # threshold then order (insertion sort, lists are short)
    n = 0
    for i in range(total):
        is_ref = all_x[i] == rx and all_y[i] == ry and all_t[i] == rt
        if not (all_d[i] <= tau or is_ref):
            continue
        dist = all_d[i]
        x = all_x[i]
        y = all_y[i]
        t = all_t[i]
        r = 1 if is_ref else 0
        pos = n
        while pos > 0:
            pr = 1 if (out_x[pos - 1] == rx and out_y[pos - 1] == ry
                       and out_t[pos - 1] == rt) else 0
            if not _before(dist, r, t, y, x, out_d[pos - 1], pr, out_t[pos - 1],
                           out_y[pos - 1], out_x[pos - 1]):
                break
            out_x[pos] = out_x[pos - 1]
            out_y[pos] = out_y[pos - 1]
            out_t[pos] = out_t[pos - 1]
            out_d[pos] = out_d[pos - 1]
            pos -= 1
        out_x[pos] = x
        out_y[pos] = y
        out_t[pos] = t
        out_d[pos] = dist
        n += 1

    lim = min(n, N)
    p2 = 1
    while p2 * 2 <= lim:
        p2 *= 2
    return p2


# --------------------------------------------------------------------------
# separable transforms


@_jit
def haar_forward_axis0(a):
    """Full dyadic orthonormal Haar along axis 0 of a 2D array, in place."""
    n = a.shape[0]
    m = a.shape[1]
    tmp = np.empty_like(a)
    length = n
    while length > 1:
        half = length // 2
        for i in range(half):
            for j in range(m):
                p = a[2 * i, j]
                q = a[2 * i + 1, j]
                tmp[i, j] = (p + q) * INV_SQRT2
                tmp[half + i, j] = (p - q) * INV_SQRT2
        for i in range(length):
            for j in range(m):
                a[i, j] = tmp[i, j]
        length = half


@_jit
def haar_inverse_axis0(a):
    n = a.shape[0]
    m = a.shape[1]
    tmp = np.empty_like(a)
    length = 2
    while length <= n:
        half = length // 2
        for i in range(half):
            for j in range(m):
                p = a[i, j]
                q = a[half + i, j]
                tmp[2 * i, j] = (p + q) * INV_SQRT2
                tmp[2 * i + 1, j] = (p - q) * INV_SQRT2
        for i in range(length):
            for j in range(m):
                a[i, j] = tmp[i, j]
        length *= 2


@_jit
def _sandwich(M, P, out, tmp):
    # out = M @ P @ M.T for square k x k blocks
    k = P.shape[0]
    for i in range(k):
        for j in range(k):
            s = 0.0
            for l in range(k):
                s += M[i, l] * P[l, j]
            tmp[i, j] = s
    for i in range(k):
        for j in range(k):
            s = 0.0
            for l in range(k):
                s += tmp[i, l] * M[j, l]
            out[i, j] = s


@_jit
def _pair_haar(g):
    n = g.shape[0]
    k = g.shape[2]
    for s in range(n):
        for i in range(k):
            for j in range(k):
                p = g[s, 0, i, j]
                q = g[s, 1, i, j]
                g[s, 0, i, j] = (p + q) * INV_SQRT2
                g[s, 1, i, j] = (p - q) * INV_SQRT2


@_jit
def forward_group(group, A):
    """Spatial 2D transform per slice, temporal Haar pair, Haar across slices."""
    n, kt, k, _ = group.shape
    out = np.empty_like(group)
    tmp = np.empty((k, k))
    for s in range(n):
        for q in range(kt):
            _sandwich(A, group[s, q], out[s, q], tmp)
    if kt == 2:
        _pair_haar(out)
    haar_forward_axis0(out.reshape((n, kt * k * k)))
    return out


@_jit
def inverse_group(coeffs, S):
    n, kt, k, _ = coeffs.shape
    work = coeffs.copy()
    haar_inverse_axis0(work.reshape((n, kt * k * k)))
    if kt == 2:
        # the 2-point orthonormal Haar is its own inverse
        _pair_haar(work)
    out = np.empty_like(work)
    tmp = np.empty((k, k))
    for s in range(n):
        for q in range(kt):
            _sandwich(S, work[s, q], out[s, q], tmp)
    return out


# --------------------------------------------------------------------------
# shrinkage


@_jit
def is_dc(flat_index, slice_size, dc_mode):
    if dc_mode == 0:
        return flat_index == 0
    return flat_index % slice_size == 0


@_jit
def hard_threshold(coeffs, thr, dc_mode):
    """Zero |c| <= thr outside the DC mask, in place. Returns kept count."""
    n, kt, k, _ = coeffs.shape
    flat = coeffs.reshape(n * kt * k * k)
    slice_size = kt * k * k
    kept = 0
    for i in range(flat.shape[0]):
        if is_dc(i, slice_size, dc_mode) or abs(flat[i]) > thr:
            kept += 1
        else:
            flat[i] = 0.0
    return kept


@_jit
def wiener_attenuate(coeffs, oracle, sigma2):
    """Scale coeffs by oracle^2 / (oracle^2 + sigma2) in place; returns sum alpha^2."""
    flat = coeffs.reshape(coeffs.size)
    ref = oracle.reshape(oracle.size)
    acc = 0.0
    for i in range(flat.shape[0]):
        o2 = ref[i] * ref[i]
        alpha = o2 / (o2 + sigma2)
        flat[i] *= alpha
        acc += alpha * alpha
    return acc


# --------------------------------------------------------------------------
# aggregation


@_jit
def aggregate_group(num, den, t_off, est, xs, ys, ts, n, weight, K):
    kt = est.shape[1]
    k = est.shape[2]
    for s in range(n):
        x0 = xs[s]
        y0 = ys[s]
        for q in range(kt):
            t = ts[s] + q - t_off
            for i in range(k):
                for j in range(k):
                    w = weight * K[i, j]
                    num[t, y0 + i, x0 + j] += w * est[s, q, i, j]
                    den[t, y0 + i, x0 + j] += w


@_jit
def extract_group(vid, xs, ys, ts, n, k, kt):
    g = np.empty((n, kt, k, k))
    for s in range(n):
        for q in range(kt):
            for i in range(k):
                for j in range(k):
                    g[s, q, i, j] = vid[ts[s] + q, ys[s] + i, xs[s] + j]
    return g


@_jit
def filter_frame(search_vid, noisy, basic, wiener, t, grid_x, grid_y,
                 k, kt, N, nf, ns, npr, nb_keep, d, tau,
                 guided, fflow, bflow, A, S, K, thr, sigma2, eps, dc_mode):
    """Denoise every reference patch of frame `t` into a private buffer.

    The buffer spans frames [t0, t0 + depth) where t0 = max(0, t - nf).
    Step 1 (``wiener=False``) hard-thresholds groups of ``noisy``; step 2
    uses ``basic`` as the Wiener oracle. Returns (num, den, t0).
    """
    T = noisy.shape[0]
    H = noisy.shape[1]
    W = noisy.shape[2]
    t0 = max(0, t - nf)
    t1 = min(T, t + nf + kt)
    num = np.zeros((t1 - t0, H, W))
    den = np.zeros((t1 - t0, H, W))
    cap = nb_keep * (2 * nf + 1) + 1
    mx = np.empty(cap, np.int64)
    my = np.empty(cap, np.int64)
    mt = np.empty(cap, np.int64)
    md = np.empty(cap, np.float64)
    s2 = max(sigma2, eps)
    for gy in grid_y:
        for gx in grid_x:
            n = search_core(search_vid, gx, gy, t, k, kt, N, nf, ns, npr, nb_keep,
                            d, tau, guided, fflow, bflow, mx, my, mt, md)
            group = extract_group(noisy, mx, my, mt, n, k, kt)
            coeffs = forward_group(group, A)
            if wiener:
                oracle = forward_group(extract_group(basic, mx, my, mt, n, k, kt), A)
                acc = wiener_attenuate(coeffs, oracle, s2)
                weight = 1.0 / (s2 * max(acc, eps))
            else:
                kept = hard_threshold(coeffs, thr, dc_mode)
                weight = 1.0 / (s2 * kept)
            est = inverse_group(coeffs, S)
            aggregate_group(num, den, t0, est, mx, my, mt, n, weight, K)
    return num, den, t0


@_jit
def _block_ssd(a, b, by, bx, bh, bw, dy, dx):
    # candidate samples are read with edge clamping so border blocks are unbiased
    H = a.shape[0]
    W = a.shape[1]
    s = 0.0
    for i in range(bh):
        yy = min(max(by + dy + i, 0), H - 1)
        for j in range(bw):
            xx = min(max(bx + dx + j, 0), W - 1)
            diff = a[by + i, bx + j] - b[yy, xx]
            s += diff * diff
    return s


@_jit
def _parabola(sm, s0, sp):
    den = sm - 2.0 * s0 + sp
    if den <= 0.0:
        return 0.0
    off = 0.5 * (sm - sp) / den
    return min(max(off, -0.5), 0.5)


@_jit
def block_matching(a, b, block, radius, subpixel):
    """Block displacement of `a` into `b` minimising the SSD.

    Ties prefer the smaller displacement, then smaller (dy, dx). With
    `subpixel` the integer optimum is refined per axis by a parabola through
    the neighbouring SSD values.
    """
    H = a.shape[0]
    W = a.shape[1]
    out = np.zeros((H, W, 2))
    for by in range(0, H, block):
        for bx in range(0, W, block):
            bh = min(block, H - by)
            bw = min(block, W - bx)
            best = np.inf
            best_mag = 0
            best_dx = 0
            best_dy = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    s = _block_ssd(a, b, by, bx, bh, bw, dy, dx)
                    mag = dx * dx + dy * dy
                    better = False
                    if s < best:
                        better = True
                    elif s == best:
                        if mag < best_mag:
                            better = True
                        elif mag == best_mag and (dy < best_dy or (dy == best_dy and dx < best_dx)):
                            better = True
                    if better:
                        best = s
                        best_mag = mag
                        best_dx = dx
                        best_dy = dy
            fx = float(best_dx)
            fy = float(best_dy)
            if subpixel:
                fx += _parabola(_block_ssd(a, b, by, bx, bh, bw, best_dy, best_dx - 1), best,
                                _block_ssd(a, b, by, bx, bh, bw, best_dy, best_dx + 1))
                fy += _parabola(_block_ssd(a, b, by, bx, bh, bw, best_dy - 1, best_dx), best,
                                _block_ssd(a, b, by, bx, bh, bw, best_dy + 1, best_dx))
            for i in range(bh):
                for j in range(bw):
                    out[by + i, bx + j, 0] = fx
                    out[by + i, bx + j, 1] = fy
    return out
