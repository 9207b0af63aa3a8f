# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair loops: cell-list neighbour search, renormalisation, rates.

Signatures match :mod:`adaptsph._fallback`.  Supports dim 1 and 2.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isnan, isinf, M_PI

cnp.import_array()

from adaptsph._cells import cell_table

NAME = "cython"

cdef enum:
    MAXD = 2


cdef inline void _shape(int family, double a, double b, double q,
                        double* w, double* dw) noexcept nogil:
    cdef double s, c_in, c_out
    if family == 0:
        if q < 1.0:
            w[0] = 1.0 - 1.5 * q * q + 0.75 * q * q * q
            dw[0] = -3.0 * q + 2.25 * q * q
        elif q < 2.0:
            s = 2.0 - q
            w[0] = 0.25 * s * s * s
            dw[0] = -0.75 * s * s
        else:
            w[0] = 0.0
            dw[0] = 0.0
    elif family == 2:
        if q < a:
            c_in = a * a * b * (a + b)
            w[0] = ((a + b) * q * q * q - 3.0 * a * b * q * q + a * a * b * b) / c_in
            dw[0] = (3.0 * (a + b) * q * q - 6.0 * a * b * q) / c_in
        elif q < b:
            c_out = b * (b * b - a * a)
            s = b - q
            w[0] = s * s * s / c_out
            dw[0] = -3.0 * s * s / c_out
        else:
            w[0] = 0.0
            dw[0] = 0.0
    else:
        if q < a:
            c_in = a * (a + b)
            w[0] = (a * b - q * q) / c_in
            dw[0] = -2.0 * q / c_in
        elif q < b:
            c_out = b * b - a * a
            s = b - q
            w[0] = s * s / c_out
            dw[0] = -2.0 * s / c_out
        else:
            w[0] = 0.0
            dw[0] = 0.0


cdef inline double _alpha(int family, double a, double b, double h, int dim) noexcept nogil:
    cdef double integral
    if family == 0:
        if dim == 1:
            integral = 1.5
        else:
            integral = 0.7 * M_PI
    elif family == 2:
        if dim == 1:
            integral = 0.5 * b
        else:
            integral = M_PI * b * (a * a + a * b + b * b) / (10.0 * (a + b))
    else:
        if dim == 1:
            integral = 2.0 * b / 3.0
        else:
            integral = M_PI * b * (a * a + a * b + b * b) / (6.0 * (a + b))
    if dim == 1:
        return 1.0 / (integral * h)
    return 1.0 / (integral * h * h)


cdef void _sort_row(long long* idx, double* dist, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k, m
    cdef long long key
    cdef double dk
    for k in range(1, n):
        key = idx[k]
        dk = dist[k]
        m = k - 1
        while m >= 0 and idx[m] > key:
            idx[m + 1] = idx[m]
            dist[m + 1] = dist[m]
            m -= 1
        idx[m + 1] = key
        dist[m + 1] = dk


def build_pairs(pos_in, double radius):
    cdef double[:, ::1] pos = np.ascontiguousarray(pos_in, dtype=np.float64)
    cdef Py_ssize_t n = pos.shape[0]
    cdef int dim = pos.shape[1]
    if n == 0:
        return np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0)
    if dim > MAXD:
        raise ValueError("compiled core supports dim <= 2")
    cell_of_arr, order_arr, start_arr, stencil_arr = cell_table(np.asarray(pos), radius)
    cdef long long[::1] cell_of = cell_of_arr
    cdef long long[::1] order = order_arr
    cdef long long[::1] start = start_arr
    cdef long long[:, ::1] stencil = stencil_arr
    cdef int nst = stencil.shape[1]

    cdef double r2 = radius * radius
    cdef long long[::1] row_count = np.zeros(n, np.int64)
    cdef Py_ssize_t i, k
    cdef long long j, cid
    cdef int t, d
    cdef double dd, diff
    cdef long long total = 0

    # pass 1: count
    with nogil:
        for i in range(n):
            for t in range(nst):
                cid = stencil[cell_of[i], t]
                if cid < 0:
                    continue
                for k in range(start[cid], start[cid + 1]):
                    j = order[k]
                    if j == i:
                        continue
                    dd = 0.0
                    for d in range(dim):
                        diff = pos[i, d] - pos[j, d]
                        dd = dd + diff * diff
                    if dd < r2:
                        row_count[i] += 1
            total += row_count[i]

    offsets_arr = np.zeros(n + 1, np.int64)
    offsets_arr[1:] = np.cumsum(np.asarray(row_count))
    cdef long long[::1] offsets = offsets_arr
    idx_arr = np.empty(total, np.int64)
    dist_arr = np.empty(total, np.float64)
    cdef long long[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr
    cdef long long slot

    # pass 2: fill and sort rows
    with nogil:
        for i in range(n):
            slot = offsets[i]
            for t in range(nst):
                cid = stencil[cell_of[i], t]
                if cid < 0:
                    continue
                for k in range(start[cid], start[cid + 1]):
                    j = order[k]
                    if j == i:
                        continue
                    dd = 0.0
                    for d in range(dim):
                        diff = pos[i, d] - pos[j, d]
                        dd = dd + diff * diff
                    if dd < r2:
                        idx[slot] = j
                        dist[slot] = sqrt(dd)
                        slot += 1
            if offsets[i + 1] > offsets[i]:
                _sort_row(&idx[offsets[i]], &dist[offsets[i]], offsets[i + 1] - offsets[i])
    return offsets_arr, idx_arr, dist_arr


cdef void _pair_geometry(double[:, ::1] pos, double[::1] knots, long long[::1] offsets,
                         long long[::1] nbr, int family, double b, double h,
                         double[::1] w_out, double[:, ::1] g_out) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef int dim = pos.shape[1]
    cdef Py_ssize_t i, k
    cdef long long j
    cdef int d
    cdef double r, rr, xij[MAXD], aij, alpha, w, dw, scale
    for i in range(n):
        for k in range(offsets[i], offsets[i + 1]):
            j = nbr[k]
            rr = 0.0
            for d in range(dim):
                xij[d] = pos[i, d] - pos[j, d]
                rr = rr + xij[d] * xij[d]
            r = sqrt(rr)
            aij = 0.5 * (knots[i] + knots[j])
            _shape(family, aij, b, r / h, &w, &dw)
            alpha = _alpha(family, aij, b, h, dim)
            w_out[k] = alpha * w
            if r > 0.0:
                scale = alpha * dw / h / r
            else:
                scale = 0.0
            for d in range(dim):
                g_out[k, d] = xij[d] * scale


cdef int _renorm(double[:, ::1] pos, double[::1] rho, double[::1] mass, long long[::1] offsets,
                 long long[::1] nbr, double[:, ::1] grad, double cond_max,
                 double[:, :, ::1] bmat, unsigned char[::1] bad) noexcept nogil:
    cdef Py_ssize_t n = pos.shape[0]
    cdef int dim = pos.shape[1]
    cdef Py_ssize_t i, k
    cdef long long j
    cdef double vol, p, q, s, det, htr, disc, l1, l2, big, small
    cdef double x0, x1
    cdef int nbad = 0
    for i in range(n):
        p = 0.0
        q = 0.0
        s = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = nbr[k]
            vol = mass[j] / rho[j]
            x0 = pos[i, 0] - pos[j, 0]
            p = p - vol * x0 * grad[k, 0]
            if dim == 2:
                x1 = pos[i, 1] - pos[j, 1]
                q = q - vol * x0 * grad[k, 1]
                s = s - vol * x1 * grad[k, 1]
        bad[i] = 0
        if dim == 1:
            if p == 0.0 or isnan(p) or isinf(p):
                bad[i] = 1
                bmat[i, 0, 0] = 1.0
            else:
                bmat[i, 0, 0] = 1.0 / p
        else:
            det = p * s - q * q
            htr = 0.5 * (p + s)
            disc = htr * htr - det
            if disc < 0.0:
                disc = 0.0
            disc = sqrt(disc)
            l1 = fabs(htr + disc)
            l2 = fabs(htr - disc)
            big = l1 if l1 > l2 else l2
            small = l2 if l1 > l2 else l1
            if isnan(det) or isinf(det) or det == 0.0 or small == 0.0 or big > cond_max * small:
                bad[i] = 1
                bmat[i, 0, 0] = 1.0
                bmat[i, 1, 1] = 1.0
                bmat[i, 0, 1] = 0.0
                bmat[i, 1, 0] = 0.0
            else:
                bmat[i, 0, 0] = s / det
                bmat[i, 1, 1] = p / det
                bmat[i, 0, 1] = -q / det
                bmat[i, 1, 0] = -q / det
        nbad += bad[i]
    return nbad


def renormalization(pos_in, rho_in, mass_in, knots_in, offsets_in, nbr_in,
                    int family, double b, double h, double cond_max):
    cdef double[:, ::1] pos = np.ascontiguousarray(pos_in, dtype=np.float64)
    cdef Py_ssize_t n = pos.shape[0]
    cdef int dim = pos.shape[1]
    if dim > MAXD:
        raise ValueError("compiled core supports dim <= 2")
    cdef long long[::1] offsets = np.ascontiguousarray(offsets_in, dtype=np.int64)
    cdef long long[::1] nbr = np.ascontiguousarray(nbr_in, dtype=np.int64)
    m = nbr.shape[0]
    w_arr = np.empty(m)
    g_arr = np.empty((m, dim))
    _pair_geometry(pos, np.ascontiguousarray(knots_in, dtype=np.float64), offsets, nbr,
                   family, b, h, w_arr, g_arr)
    bmat = np.zeros((n, dim, dim))
    bad = np.zeros(n, np.uint8)
    _renorm(pos, np.ascontiguousarray(rho_in, dtype=np.float64),
            np.ascontiguousarray(mass_in, dtype=np.float64), offsets, nbr, g_arr,
            cond_max, bmat, bad)
    return bmat, bad


def compute_rates(pos_in, vel_in, rho_in, mass_in, S_in, knots_in, fixed_in,
                  offsets_in, nbr_in, int family, double b, double h,
                  double K, double G, double E, double rho0,
                  double gamma1, double gamma2, double eta, double eps_xsph,
                  bint renormalize, double cond_max):
    cdef double[:, ::1] pos = np.ascontiguousarray(pos_in, dtype=np.float64)
    cdef double[:, ::1] vel = np.ascontiguousarray(vel_in, dtype=np.float64)
    cdef double[::1] rho = np.ascontiguousarray(rho_in, dtype=np.float64)
    cdef double[::1] mass = np.ascontiguousarray(mass_in, dtype=np.float64)
    cdef double[:, :, ::1] S = np.ascontiguousarray(S_in, dtype=np.float64)
    cdef double[::1] knots = np.ascontiguousarray(knots_in, dtype=np.float64)
    cdef unsigned char[::1] fixed = np.ascontiguousarray(fixed_in, dtype=np.uint8)
    cdef long long[::1] offsets = np.ascontiguousarray(offsets_in, dtype=np.int64)
    cdef long long[::1] nbr = np.ascontiguousarray(nbr_in, dtype=np.int64)
    cdef Py_ssize_t n = pos.shape[0]
    cdef int dim = pos.shape[1]
    if dim > MAXD:
        raise ValueError("compiled core supports dim <= 2")
    cdef Py_ssize_t m = nbr.shape[0]

    w_arr = np.empty(m)
    g_arr = np.empty((m, dim))
    cdef double[::1] wv = w_arr
    cdef double[:, ::1] grad = g_arr
    bmat_arr = np.zeros((n, dim, dim))
    bad_arr = np.zeros(n, np.uint8)
    cdef double[:, :, ::1] bmat = bmat_arr
    cdef unsigned char[::1] bad = bad_arr

    drho_arr = np.zeros(n)
    dv_arr = np.zeros((n, dim))
    de_arr = np.zeros(n)
    dS_arr = np.zeros((n, dim, dim))
    dSo_arr = np.zeros(n)
    dx_arr = np.zeros((n, dim))
    cdef double[::1] drho = drho_arr
    cdef double[:, ::1] dv = dv_arr
    cdef double[::1] de = de_arr
    cdef double[:, :, ::1] dS = dS_arr
    cdef double[::1] dSo = dSo_arr
    cdef double[:, ::1] dx = dx_arr

    cdef Py_ssize_t i, k
    cdef long long j
    cdef int a, c, g
    cdef double xij[MAXD]
    cdef double vij[MAXD]
    cdef double gh[MAXD]
    cdef double ti[MAXD][MAXD]
    cdef double tj[MAXD][MAXD]
    cdef double A[MAXD][MAXD]
    cdef double vw[MAXD][MAXD]
    cdef double skew[MAXD][MAXD]
    cdef double f[MAXD]
    cdef double xs[MAXD]
    cdef double pi_ij, vx, r2, mu, cbar, rbar, pi_, pj, mj, vol, tr, acc, rot, strain
    cdef double drho_i, de_i, dso_i
    cdef double dS_i[MAXD][MAXD]
    cdef double dv_i[MAXD]
    cdef double inv_ri2, inv_rj2
    cdef int nbad = 0

    with nogil:
        _pair_geometry(pos, knots, offsets, nbr, family, b, h, wv, grad)
        if renormalize:
            nbad = _renorm(pos, rho, mass, offsets, nbr, grad, cond_max, bmat, bad)
        else:
            for i in range(n):
                for a in range(dim):
                    for c in range(dim):
                        bmat[i, a, c] = 1.0 if a == c else 0.0

        for i in range(n):
            if fixed[i]:
                continue
            pi_ = K * (rho[i] / rho0 - 1.0)
            inv_ri2 = 1.0 / (rho[i] * rho[i])
            for a in range(dim):
                for c in range(dim):
                    ti[a][c] = S[i, a, c] * inv_ri2
                ti[a][a] = ti[a][a] - pi_ * inv_ri2
            drho_i = 0.0
            de_i = 0.0
            dso_i = 0.0
            for a in range(dim):
                dv_i[a] = 0.0
                xs[a] = 0.0
                for c in range(dim):
                    dS_i[a][c] = 0.0
            for k in range(offsets[i], offsets[i + 1]):
                j = nbr[k]
                vx = 0.0
                r2 = 0.0
                for a in range(dim):
                    xij[a] = pos[i, a] - pos[j, a]
                    vij[a] = vel[i, a] - vel[j, a]
                    vx = vx + vij[a] * xij[a]
                    r2 = r2 + xij[a] * xij[a]
                    acc = 0.0
                    for c in range(dim):
                        acc = acc + bmat[i, a, c] * grad[k, c]
                    gh[a] = acc
                rbar = 0.5 * (rho[i] + rho[j])
                if vx < 0.0:
                    mu = h * vx / (r2 + eta * h * h)
                    cbar = 0.5 * (sqrt(E / rho[i]) + sqrt(E / rho[j]))
                    pi_ij = (-gamma1 * cbar * mu + gamma2 * mu * mu) / rbar
                else:
                    pi_ij = 0.0
                pj = K * (rho[j] / rho0 - 1.0)
                inv_rj2 = 1.0 / (rho[j] * rho[j])
                mj = mass[j]
                vol = mj / rho[j]
                for a in range(dim):
                    for c in range(dim):
                        tj[a][c] = S[j, a, c] * inv_rj2
                    tj[a][a] = tj[a][a] - pj * inv_rj2
                for a in range(dim):
                    for c in range(dim):
                        A[a][c] = ti[a][c] + tj[a][c]
                    A[a][a] = A[a][a] - pi_ij

                acc = 0.0
                for a in range(dim):
                    acc = acc + vij[a] * gh[a]
                drho_i = drho_i + mj * acc

                acc = 0.0
                for a in range(dim):
                    f[a] = 0.0
                    for c in range(dim):
                        f[a] = f[a] + A[a][c] * gh[c]
                    dv_i[a] = dv_i[a] + mj * f[a]
                    acc = acc + vij[a] * f[a]
                de_i = de_i + mj * acc

                tr = 0.0
                for a in range(dim):
                    for c in range(dim):
                        vw[a][c] = vij[a] * gh[c]
                    tr = tr + vw[a][a]
                for a in range(dim):
                    for c in range(dim):
                        skew[a][c] = vw[a][c] - vw[c][a]
                for a in range(dim):
                    for c in range(dim):
                        strain = vw[a][c] + vw[c][a]
                        if a == c:
                            strain = strain - (2.0 / 3.0) * tr
                        rot = 0.0
                        for g in range(dim):
                            rot = rot + S[i, a, g] * skew[c][g] + S[i, g, c] * skew[a][g]
                        dS_i[a][c] = dS_i[a][c] - vol * (G * strain + 0.5 * rot)
                dso_i = dso_i + vol * (2.0 / 3.0) * G * tr

                for a in range(dim):
                    xs[a] = xs[a] + (mj / rbar) * vij[a] * wv[k]

            drho[i] = drho_i
            de[i] = -0.5 * de_i
            dSo[i] = dso_i
            for a in range(dim):
                dv[i, a] = dv_i[a]
                dx[i, a] = vel[i, a] - eps_xsph * xs[a]
                for c in range(dim):
                    dS[i, a, c] = dS_i[a][c]

    if renormalize:
        nbad = int(np.count_nonzero(bad_arr[np.asarray(fixed_in, dtype=bool) == False]))
    return drho_arr, dv_arr, de_arr, dS_arr, dSo_arr, dx_arr, nbad
