# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels (Legendre recurrences, row synthesis, packing)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, exp, cos, sin, fabs

cnp.import_array()

cdef double _LOG_RESCALE = 575.0 * 0.6931471805599453
cdef double _BIG = 2.0 ** 575
cdef double _INV_BIG = 2.0 ** -575
cdef double _LOG_TINY = -650.0


def legendre_series(coef, x):
    cdef const double[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    xa = np.ascontiguousarray(x, dtype=np.float64)
    out = np.zeros_like(xa)
    cdef const double[::1] xv = xa.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t n = xv.shape[0], nl = c.shape[0], i, ell
    if nl == 0 or n == 0:
        return out
    # degree-outer order: the inner loop runs over independent points, so the
    # recurrence pipelines instead of waiting on one division per step
    cdef double[::1] pp = np.ones(n)
    cdef double[::1] pc = np.array(xv, copy=True)
    cdef double p_next
    with nogil:
        for i in range(n):
            ov[i] = c[0]
        if nl > 1:
            for i in range(n):
                ov[i] = ov[i] + c[1] * pc[i]
        for ell in range(2, nl):
            for i in range(n):
                p_next = ((2 * ell - 1) * xv[i] * pc[i] - (ell - 1) * pp[i]) / ell
                pp[i] = pc[i]
                pc[i] = p_next
                ov[i] = ov[i] + c[ell] * p_next
    return out


def legendre_gap_series(coef, theta):
    cdef const double[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    ta = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.zeros_like(ta)
    cdef const double[::1] tv = ta.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t n = tv.shape[0], nl = c.shape[0], i, ell
    if nl < 2 or n == 0:
        return out
    cdef double[::1] xs = np.cos(ta.reshape(-1))
    cdef double[::1] om = 2.0 * np.sin(0.5 * ta.reshape(-1)) ** 2
    cdef double[::1] qp = np.zeros(n)
    cdef double[::1] qc = np.array(om, copy=True)
    cdef double q_next
    with nogil:
        for i in range(n):
            ov[i] = c[1] * qc[i]
        for ell in range(2, nl):
            for i in range(n):
                q_next = ((2 * ell - 1) * om[i] + (2 * ell - 1) * xs[i] * qc[i]
                          - (ell - 1) * qp[i]) / ell
                qp[i] = qc[i]
                qc[i] = q_next
                ov[i] = ov[i] + c[ell] * q_next
    return out


def alm_rows(alm, Py_ssize_t lmin, Py_ssize_t lmax, theta):
    cdef const double complex[:, ::1] a_lm = np.ascontiguousarray(alm, dtype=np.complex128)
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = th.shape[0]
    g_arr = np.zeros((n, lmax + 1), dtype=np.complex128)
    cdef double complex[:, ::1] g = g_arr
    ra = np.zeros((lmax + 1, lmax + 1))
    rb = np.zeros((lmax + 1, lmax + 1))
    cdef double[:, ::1] A = ra
    cdef double[:, ::1] B = rb
    cdef double[::1] steps = np.zeros(lmax + 1)
    cdef Py_ssize_t i, m, ell
    cdef double x, s, log_s, lg, expo, p_prev, p_cur, p_next, val, fl, fm
    cdef double gre, gim
    cdef double log_norm0 = 0.5 * log(1.0 / (4.0 * 3.141592653589793))
    for ell in range(lmax + 1):
        for m in range(ell):
            fl = <double>ell
            fm = <double>m
            A[ell, m] = sqrt((4.0 * fl * fl - 1.0) / (fl * fl - fm * fm))
            if ell - 1 > m:
                B[ell, m] = sqrt(((fl - 1.0) * (fl - 1.0) - fm * fm) / (4.0 * (fl - 1.0) * (fl - 1.0) - 1.0))
    for m in range(1, lmax + 1):
        steps[m] = steps[m - 1] + 0.5 * log((2.0 * m + 1.0) / (2.0 * m))
    with nogil:
        for i in range(n):
            x = cos(th[i])
            s = sin(th[i])
            if s > 0:
                log_s = log(s)
            else:
                log_s = -1e300
            for m in range(lmax + 1):
                if m > 0 and s <= 0:
                    break
                lg = log_norm0 + steps[m] + m * log_s
                if lg < _LOG_TINY:
                    expo = lg
                    p_cur = 1.0
                else:
                    expo = 0.0
                    p_cur = exp(lg)
                if m % 2 == 1:
                    p_cur = -p_cur
                p_prev = 0.0
                gre = 0.0
                gim = 0.0
                for ell in range(m, lmax + 1):
                    if ell > m:
                        p_next = A[ell, m] * (x * p_cur - B[ell, m] * p_prev)
                        p_prev = p_cur
                        p_cur = p_next
                        if fabs(p_cur) > _BIG:
                            p_cur = p_cur * _INV_BIG
                            p_prev = p_prev * _INV_BIG
                            expo = expo + _LOG_RESCALE
                    if ell >= lmin:
                        if expo == 0.0:
                            val = p_cur
                        else:
                            val = p_cur * exp(expo)
                        gre = gre + a_lm[ell, m].real * val
                        gim = gim + a_lm[ell, m].imag * val
                g[i, m] = gre + 1j * gim
    return g_arr


def max_pairwise_distance(values):
    va = np.ascontiguousarray(values, dtype=np.float64)
    if va.ndim == 1:
        va = va[:, None]
    cdef const double[:, ::1] v = va
    cdef Py_ssize_t n = v.shape[0], d = v.shape[1], i, j, k
    cdef double best = 0.0, acc, diff
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    diff = v[i, k] - v[j, k]
                    acc = acc + diff * diff
                if acc > best:
                    best = acc
    return sqrt(best)


def fps_pack(xyz, order, offsets, parent_xyz, double cos_sep):
    cdef const double[:, ::1] P = np.ascontiguousarray(xyz, dtype=np.float64)
    cdef const long long[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[:, ::1] C = np.ascontiguousarray(parent_xyz, dtype=np.float64)
    cdef Py_ssize_t npar = off.shape[0] - 1, p, k, m, start, stop, best_k, nc = 0
    cdef double dot, best, cx, cy, cz
    cdef Py_ssize_t n = od.shape[0]
    cdef double[::1] maxdot = np.empty(n)
    # coordinates gathered per parent so the sweeps read contiguous memory
    cdef double[::1] gx = np.empty(n)
    cdef double[::1] gy = np.empty(n)
    cdef double[::1] gz = np.empty(n)
    centers_arr = np.empty(n, dtype=np.int64)
    parents_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] centers = centers_arr
    cdef long long[::1] parents = parents_arr
    with nogil:
        for k in range(n):
            gx[k] = P[od[k], 0]
            gy[k] = P[od[k], 1]
            gz[k] = P[od[k], 2]
        for p in range(npar):
            start = off[p]
            stop = off[p + 1]
            if stop <= start:
                continue
            best = -2.0
            best_k = start
            for k in range(start, stop):
                dot = gx[k] * C[p, 0] + gy[k] * C[p, 1] + gz[k] * C[p, 2]
                if dot > best:
                    best = dot
                    best_k = k
            for k in range(start, stop):
                maxdot[k] = -2.0
            while True:
                centers[nc] = od[best_k]
                parents[nc] = p
                nc = nc + 1
                cx = gx[best_k]
                cy = gy[best_k]
                cz = gz[best_k]
                for k in range(start, stop):
                    dot = gx[k] * cx + gy[k] * cy + gz[k] * cz
                    maxdot[k] = dot if dot > maxdot[k] else maxdot[k]
                best = 2.0
                for k in range(start, stop):
                    if maxdot[k] < best:
                        best = maxdot[k]
                        best_k = k
                if best > cos_sep:
                    break
    return centers_arr[:nc].copy(), parents_arr[:nc].copy()


def assign_children(xyz, order, offsets, child_offsets, child_xyz):
    cdef const double[:, ::1] P = np.ascontiguousarray(xyz, dtype=np.float64)
    cdef const long long[::1] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef const long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const long long[::1] coff = np.ascontiguousarray(child_offsets, dtype=np.int64)
    cdef const double[:, ::1] C = np.ascontiguousarray(child_xyz, dtype=np.float64)
    out_arr = np.empty(P.shape[0], dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t npar = off.shape[0] - 1, p, k, c, best_c, pt
    cdef double dot, best
    with nogil:
        for p in range(npar):
            for k in range(off[p], off[p + 1]):
                pt = od[k]
                best = -2.0
                best_c = coff[p]
                for c in range(coff[p], coff[p + 1]):
                    dot = P[pt, 0] * C[c, 0] + P[pt, 1] * C[c, 1] + P[pt, 2] * C[c, 2]
                    if dot > best:
                        best = dot
                        best_c = c
                out[pt] = best_c
    return out_arr
