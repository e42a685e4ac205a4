"""Pure NumPy implementations of the numeric kernels.

These mirror ``_ckernels.pyx`` function for function and are used when the
compiled extension is unavailable or ``SPHEREFIELD_PURE_PYTHON=1`` is set.
"""
import numpy as np

_LOG_RESCALE = 575.0 * np.log(2.0)
_BIG = 2.0 ** 575
_LOG_TINY = -650.0


def legendre_series(coef, x):
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if coef.size == 0:
        return out
    p_prev = np.ones_like(x)
    out += coef[0] * p_prev
    if coef.size == 1:
        return out
    p_cur = x.copy()
    out += coef[1] * p_cur
    for ell in range(2, coef.size):
        p_next = ((2 * ell - 1) * x * p_cur - (ell - 1) * p_prev) / ell
        p_prev, p_cur = p_cur, p_next
        out += coef[ell] * p_cur
    return out


def legendre_gap_series(coef, theta):
    """Sum of coef[l] * (1 - P_l(cos theta)) without cancellation at small theta."""
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    x = np.cos(theta)
    omx = 2.0 * np.sin(0.5 * theta) ** 2
    out = np.zeros_like(theta)
    if coef.size < 2:
        return out
    q_prev = np.zeros_like(theta)
    q_cur = omx.copy()
    out += coef[1] * q_cur
    for ell in range(2, coef.size):
        q_next = ((2 * ell - 1) * omx + (2 * ell - 1) * x * q_cur - (ell - 1) * q_prev) / ell
        q_prev, q_cur = q_cur, q_next
        out += coef[ell] * q_cur
    return out


def _recurrence_tables(lmax):
    ell = np.arange(lmax + 1, dtype=np.float64)[:, None]
    m = np.arange(lmax + 1, dtype=np.float64)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
        b = np.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
    a[~np.isfinite(a)] = 0.0
    b[~np.isfinite(b)] = 0.0
    return a, b


def _log_lambda_mm(lmax, sin_t):
    """log|lambda_mm| for m = 0..lmax at each abscissa, shape (lmax+1, n)."""
    m = np.arange(1, lmax + 1, dtype=np.float64)
    steps = 0.5 * np.log((2.0 * m + 1.0) / (2.0 * m))
    with np.errstate(divide="ignore"):
        log_s = np.log(sin_t)
    base = np.concatenate(([0.0], np.cumsum(steps))) + 0.5 * np.log(1.0 / (4.0 * np.pi))
    mm = np.arange(lmax + 1, dtype=np.float64)[:, None]
    with np.errstate(invalid="ignore"):
        powers = np.where(mm == 0, 0.0, mm * log_s[None, :])
    return base[:, None] + powers


def alm_rows(alm, lmin, lmax, theta):
    """g[i, m] = sum_{l=max(lmin,m)}^{lmax} alm[l, m] * lambda_lm(theta_i)."""
    alm = np.ascontiguousarray(alm, dtype=np.complex128)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    n = theta.size
    x = np.cos(theta)
    s = np.sin(theta)
    g = np.zeros((n, lmax + 1), dtype=np.complex128)
    a, b = _recurrence_tables(lmax)
    log_mm = _log_lambda_mm(lmax, s)
    for m in range(lmax + 1):
        lg = log_mm[m]
        dead = ~np.isfinite(lg)
        expo = np.where(lg < _LOG_TINY, lg, 0.0)
        expo[dead] = 0.0
        sign = -1.0 if m % 2 else 1.0
        with np.errstate(invalid="ignore"):
            p_cur = np.where(dead, 0.0, sign * np.exp(lg - expo))
        p_prev = np.zeros(n)
        for ell in range(m, lmax + 1):
            if ell > m:
                p_next = a[ell, m] * (x * p_cur - b[ell, m] * p_prev)
                p_prev, p_cur = p_cur, p_next
                big = np.abs(p_cur) > _BIG
                if big.any():
                    p_cur = np.where(big, p_cur / _BIG, p_cur)
                    p_prev = np.where(big, p_prev / _BIG, p_prev)
                    expo = np.where(big, expo + _LOG_RESCALE, expo)
            if ell >= lmin:
                c = alm[ell, m]
                if c != 0:
                    g[:, m] += c * (p_cur * np.exp(expo))
    return g


def max_pairwise_distance(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    if n < 2:
        return 0.0
    if values.shape[1] == 1:
        return float(values.max() - values.min())
    best = 0.0
    chunk = 512
    for start in range(0, n, chunk):
        block = values[start:start + chunk]
        d2 = ((block[:, None, :] - values[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def _dots(pts, c):
    # same summation order as the compiled kernels, so both backends round alike
    return pts[:, 0] * c[0] + pts[:, 1] * c[1] + pts[:, 2] * c[2]


def fps_pack(xyz, order, offsets, parent_xyz, cos_sep):
    """Greedy farthest-point packing inside each parent group.

    Returns (center point indices, parent index of each center).
    """
    centers = []
    parents = []
    for p in range(offsets.size - 1):
        idx = order[offsets[p]:offsets[p + 1]]
        if idx.size == 0:
            continue
        pts = xyz[idx]
        dots = _dots(pts, parent_xyz[p])
        first = int(np.argmax(dots))
        chosen = [first]
        maxdot = _dots(pts, pts[first])
        while True:
            j = int(np.argmin(maxdot))
            if maxdot[j] > cos_sep:
                break
            chosen.append(j)
            np.maximum(maxdot, _dots(pts, pts[j]), out=maxdot)
        centers.extend(idx[chosen].tolist())
        parents.extend([p] * len(chosen))
    return np.asarray(centers, dtype=np.int64), np.asarray(parents, dtype=np.int64)


def assign_children(xyz, order, offsets, child_offsets, child_xyz):
    """Nearest child center (within the point's parent) for every point."""
    out = np.empty(xyz.shape[0], dtype=np.int64)
    for p in range(offsets.size - 1):
        idx = order[offsets[p]:offsets[p + 1]]
        if idx.size == 0:
            continue
        c0, c1 = child_offsets[p], child_offsets[p + 1]
        pts = xyz[idx]
        kids = child_xyz[c0:c1]
        dots = (pts[:, 0:1] * kids[None, :, 0] + pts[:, 1:2] * kids[None, :, 1]
                + pts[:, 2:3] * kids[None, :, 2])
        out[idx] = c0 + np.argmax(dots, axis=1)
    return out
