"""Pure numpy implementation of the hot loops.

Mirrors the signatures of the compiled ``_core`` module exactly.  Pair sums
are accumulated with ``np.bincount`` which adds in pair order, so results
match the compiled core to rounding.
"""
from __future__ import annotations

import numpy as np

from ._cells import cell_table
from .kernel import KernelFamily, radial_profile

NAME = "python"

_FAMILIES = {0: KernelFamily.STANDARD_CUBIC, 1: KernelFamily.QUADRATIC, 2: KernelFamily.CUBIC}


def build_pairs(pos, radius):
    """Fixed-radius neighbour lists via a uniform cell grid.

    Returns CSR ``(offsets, indices, distances)``; each row is sorted by
    neighbour index and only pairs with ``|x_i - x_j| < radius`` are kept.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    n, dim = pos.shape
    if n == 0:
        return np.zeros(1, np.int64), np.zeros(0, np.int64), np.zeros(0)
    cell_of, order, start, stencil = cell_table(pos, radius)
    counts = np.diff(start)

    ii_parts, jj_parts = [], []
    idx = np.arange(n)
    for t in range(stencil.shape[1]):
        nid = stencil[cell_of, t]
        ok = nid >= 0
        src = idx[ok]
        nid = nid[ok]
        cnt = counts[nid]
        if cnt.sum() == 0:
            continue
        rep_i = np.repeat(src, cnt)
        first = np.repeat(start[nid], cnt)
        within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        ii_parts.append(rep_i)
        jj_parts.append(order[first + within])
    ii = np.concatenate(ii_parts)
    jj = np.concatenate(jj_parts)
    d2 = np.sum((pos[ii] - pos[jj]) ** 2, axis=1)
    keep = (ii != jj) & (d2 < radius * radius)
    ii, jj, d2 = ii[keep], jj[keep], d2[keep]
    srt = np.lexsort((jj, ii))
    ii, jj, d2 = ii[srt], jj[srt], d2[srt]
    offsets = np.zeros(n + 1, np.int64)
    offsets[1:] = np.cumsum(np.bincount(ii, minlength=n))
    return offsets, jj.astype(np.int64), np.sqrt(d2)


def _pairs(offsets):
    n = len(offsets) - 1
    return np.repeat(np.arange(n), np.diff(offsets))


def _pair_geometry(pos, knots, offsets, nbr, family, b, h):
    i = _pairs(offsets)
    j = nbr
    xij = pos[i] - pos[j]
    r = np.sqrt(np.sum(xij * xij, axis=1))
    fam = _FAMILIES[int(family)]
    a_ij = 0.5 * (knots[i] + knots[j])
    w, dwdr = radial_profile(fam, a_ij, b, h, pos.shape[1], r)
    scale = np.where(r > 0.0, dwdr / np.where(r > 0.0, r, 1.0), 0.0)
    grad = xij * scale[:, None]
    return i, j, xij, w, grad


def _segsum(i, values, n):
    return np.bincount(i, weights=values, minlength=n)


def _invert(binv, cond_max):
    n, dim, _ = binv.shape
    out = np.empty_like(binv)
    bad = np.zeros(n, bool)
    if dim == 1:
        m = binv[:, 0, 0]
        bad = ~np.isfinite(m) | (m == 0.0)
        out[:, 0, 0] = np.where(bad, 1.0, 1.0 / np.where(bad, 1.0, m))
        return out, bad
    p, q, s = binv[:, 0, 0], binv[:, 0, 1], binv[:, 1, 1]
    det = p * s - q * q
    half_tr = 0.5 * (p + s)
    disc = np.sqrt(np.maximum(half_tr * half_tr - det, 0.0))
    lam1 = np.abs(half_tr + disc)
    lam2 = np.abs(half_tr - disc)
    big = np.maximum(lam1, lam2)
    small = np.minimum(lam1, lam2)
    bad = ~np.isfinite(det) | (det == 0.0) | (small == 0.0) | (big > cond_max * small)
    safe = np.where(bad, 1.0, det)
    out[:, 0, 0] = s / safe
    out[:, 1, 1] = p / safe
    out[:, 0, 1] = -q / safe
    out[:, 1, 0] = -q / safe
    out[bad] = np.eye(2)
    return out, bad


def renormalization(pos, rho, mass, knots, offsets, nbr, family, b, h, cond_max):
    """Per-particle correction matrices ``B_i`` and the fallback mask."""
    pos = np.asarray(pos, dtype=float)
    n, dim = pos.shape
    i, j, xij, _, grad = _pair_geometry(pos, knots, offsets, nbr, family, b, h)
    vol = mass[j] / rho[j]
    binv = np.empty((n, dim, dim))
    for p in range(dim):
        for q in range(dim):
            binv[:, p, q] = -_segsum(i, vol * xij[:, p] * grad[:, q], n)
    out, bad = _invert(binv, cond_max)
    return out, bad.astype(np.uint8)


def compute_rates(pos, vel, rho, mass, S, knots, fixed, offsets, nbr,
                  family, b, h, K, G, E, rho0, gamma1, gamma2, eta, eps_xsph,
                  renormalize, cond_max):
    pos = np.asarray(pos, dtype=float)
    n, dim = pos.shape
    i, j, xij, w, grad = _pair_geometry(pos, knots, offsets, nbr, family, b, h)
    if renormalize:
        bmat, bad = renormalization(pos, rho, mass, knots, offsets, nbr, family, b, h, cond_max)
    else:
        bmat = np.broadcast_to(np.eye(dim), (n, dim, dim))
        bad = np.zeros(n, np.uint8)
    gh = np.einsum("kab,kb->ka", bmat[i], grad)

    vij = vel[i] - vel[j]
    rbar = 0.5 * (rho[i] + rho[j])
    vx = np.sum(vij * xij, axis=1)
    r2 = np.sum(xij * xij, axis=1)
    mu = h * vx / (r2 + eta * h * h)
    cbar = 0.5 * (np.sqrt(E / rho[i]) + np.sqrt(E / rho[j]))
    pi_ij = np.where(vx < 0.0, (-gamma1 * cbar * mu + gamma2 * mu * mu) / rbar, 0.0)

    p = K * (rho / rho0 - 1.0)
    sig = S - p[:, None, None] * np.eye(dim)
    tens = sig / (rho * rho)[:, None, None]
    A = tens[i] + tens[j] - pi_ij[:, None, None] * np.eye(dim)
    mj = mass[j]
    vol = mj / rho[j]

    drho = _segsum(i, mj * np.sum(vij * gh, axis=1), n)
    force = np.einsum("kab,kb->ka", A, gh)
    dv = np.stack([_segsum(i, mj * force[:, a], n) for a in range(dim)], axis=1)
    de = -0.5 * _segsum(i, mj * np.sum(vij * force, axis=1), n)

    vw = vij[:, :, None] * gh[:, None, :]          # v^a W_b
    tr = np.trace(vw, axis1=1, axis2=2)
    eye = np.eye(dim)
    strain = vw + vw.transpose(0, 2, 1) - (2.0 / 3.0) * tr[:, None, None] * eye
    skew = vw - vw.transpose(0, 2, 1)              # v^a W_b - v^b W_a
    Si = S[i]
    # S^{ag}(v^b W_g - v^g W_b) + S^{gb}(v^a W_g - v^g W_a)
    rot = np.einsum("kag,kbg->kab", Si, skew) + np.einsum("kgb,kag->kab", Si, skew)
    contrib = -vol[:, None, None] * (G * strain + 0.5 * rot)
    dS = np.empty((n, dim, dim))
    for a in range(dim):
        for c in range(dim):
            dS[:, a, c] = _segsum(i, contrib[:, a, c], n)
    dS_out = _segsum(i, vol * (2.0 / 3.0) * G * tr, n)

    xs = (mj / rbar)[:, None] * vij * w[:, None]
    dx = vel - eps_xsph * np.stack([_segsum(i, xs[:, a], n) for a in range(dim)], axis=1)

    fx = np.asarray(fixed, bool)
    drho[fx] = 0.0
    dv[fx] = 0.0
    de[fx] = 0.0
    dS[fx] = 0.0
    dS_out[fx] = 0.0
    dx[fx] = 0.0
    return drho, dv, de, dS, dS_out, dx, int(np.count_nonzero(np.asarray(bad)[~fx]))
