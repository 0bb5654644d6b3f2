"""numba implementations of the hot kernels (default backend).

Same signatures as _impl_numpy; scalar inner loops instead of vectorized
blocks.  Only imported when numba is available and not disabled via
CARNOT_SIO_BACKEND=numpy.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ._structure import (K_CONST, K_INVDIST, K_INVDIST_SQ, K_QUASI,
                         K_VRIESZ, MET_SMOOTH, WIN_NONE)


@njit(cache=True, inline="always")
def _psi(r):
    if r <= 0.5:
        return 1.0
    if r >= 2.0:
        return 0.0
    gu = np.exp(-1.0 / (2.0 - r))
    gd = np.exp(-1.0 / (r - 0.5))
    return gu / (gu + gd)


@njit(cache=True)
def bump_psi(r):
    out = np.empty(r.shape[0])
    for i in range(r.shape[0]):
        out[i] = _psi(r[i])
    return out


@njit(cache=True)
def _mult_into(gt, x, y, out):
    for k in range(gt.dim):
        out[k] = x[k] + y[k]
    for t in range(gt.q_out.shape[0]):
        v = gt.q_coeff[t]
        for f in range(gt.q_nfac[t]):
            vid = gt.q_var[t, f]
            if vid < gt.dim:
                v *= x[vid]
            else:
                v *= y[vid - gt.dim]
        out[gt.q_out[t]] += v


@njit(cache=True, inline="always")
def _ipow(b, e):
    r = 1.0
    while e > 0:
        if e & 1:
            r *= b
        b *= b
        e >>= 1
    return r


@njit(cache=True, inline="always")
def _norm_cmp(gt, z, which):
    """Monotone surrogate for _norm1: skips the final root for the smooth
    gauge so hot comparison loops avoid a pow call per pair."""
    if which == MET_SMOOTH:
        acc = 0.0
        for i in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[i], gt.lay_end[i]):
                ss += z[k] * z[k]
            acc += _ipow(gt.lam[i], gt.root // (i + 1)) \
                * _ipow(ss, gt.root // (2 * (i + 1)))
        return acc
    best = 0.0
    for i in range(gt.step):
        ss = 0.0
        for k in range(gt.lay_start[i], gt.lay_end[i]):
            ss += z[k] * z[k]
        v = gt.lam[i] * ss ** (0.5 / (i + 1))
        if v > best:
            best = v
    return best


@njit(cache=True, inline="always")
def _cmp_val(gt, v, which):
    if which == MET_SMOOTH:
        return v ** (1.0 / gt.root)
    return v


@njit(cache=True, inline="always")
def _norm1(gt, z, which):
    return _cmp_val(gt, _norm_cmp(gt, z, which), which)


@njit(cache=True, inline="always")
def _nonhorizontal_into(gt, z, out):
    # A row with no coordinates beyond the first layer equals its own
    # projection, so NH is exactly zero; letting the monomials cancel in
    # floating point would leave step >= 3 residues that the gauge's
    # fractional powers inflate.
    horizontal = True
    for k in range(gt.n, gt.dim):
        if z[k] != 0.0:
            horizontal = False
            break
    if horizontal:
        for k in range(gt.dim):
            out[k] = 0.0
        return
    for k in range(gt.n):
        out[k] = 0.0
    for k in range(gt.n, gt.dim):
        out[k] = z[k]
    for t in range(gt.q_out.shape[0]):
        v = gt.q_coeff[t]
        ok = True
        for f in range(gt.q_nfac[t]):
            vid = gt.q_var[t, f]
            if vid < gt.dim:
                if vid < gt.n:
                    v *= -z[vid]
                else:
                    ok = False
                    break
            else:
                v *= z[vid - gt.dim]
        if ok:
            out[gt.q_out[t]] += v


@njit(cache=True)
def _kernel_point(gt, kt, z, d, scratch, nh):
    out = 0.0
    for c in range(kt.kind.shape[0]):
        sgn = -1.0 if kt.adjoint[c] else 1.0
        if kt.win_lo[c] != WIN_NONE:
            win = _psi(2.0 ** kt.win_lo[c] * d) - _psi(2.0 ** kt.win_hi[c] * d)
            if win == 0.0:
                continue
        else:
            win = 1.0
        kind = kt.kind[c]
        if kind == K_VRIESZ:
            for k in range(gt.dim):
                scratch[k] = sgn * z[k]
            _nonhorizontal_into(gt, scratch, nh)
            dn = _norm1(gt, nh, kt.metric)
            val = dn ** kt.param[c] / d ** (kt.param[c] + 1)
        elif kind == K_QUASI:
            j = kt.param[c]
            val = sgn * z[j] / d ** (gt.degrees[j] + 1)
        elif kind == K_INVDIST:
            val = 1.0 / d
        elif kind == K_INVDIST_SQ:
            val = 1.0 / (d * d)
        else:
            val = 1.0
        out += kt.scale[c] * win * val
    return out


@njit(cache=True)
def batch_multiply(gt, X, Y):
    Z = np.empty((X.shape[0], gt.dim))
    for i in range(X.shape[0]):
        _mult_into(gt, X[i], Y[i], Z[i])
    return Z


@njit(cache=True)
def batch_qbar(gt, X, H):
    out = np.zeros((X.shape[0], gt.dim))
    for i in range(X.shape[0]):
        for t in range(gt.qb_out.shape[0]):
            v = gt.qb_coeff[t] * H[i, gt.qb_hvar[t]]
            for f in range(gt.qb_nfac[t]):
                v *= X[i, gt.qb_xvar[t, f]]
            out[i, gt.qb_out[t]] += v
    return out


@njit(cache=True)
def batch_norm(gt, X, which):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        out[i] = _norm1(gt, X[i], which)
    return out


@njit(cache=True)
def kernel_eval_with_d(gt, kt, Z, d):
    out = np.empty(Z.shape[0])
    scratch = np.empty(gt.dim)
    nh = np.empty(gt.dim)
    for i in range(Z.shape[0]):
        out[i] = _kernel_point(gt, kt, Z[i], d[i], scratch, nh)
    return out


@njit(cache=True)
def kernel_eval(gt, kt, Z):
    return kernel_eval_with_d(gt, kt, Z, batch_norm(gt, Z, kt.metric))


@njit(cache=True)
def _kernel_dist_row(gt, kt, pts, x, krow, drow):
    """One row against the whole point set: drow[j] = d(x, pts[j]) and
    krow[j] = K(pts[j]^{-1} x), with 0.0 where the distance vanishes.

    Spliced closures for the same reason as the gauge loops below: behind
    njit helpers the same body runs ~8x slower.  Every N^2 kernel sum in
    this backend funnels through this one row; the drivers only mask and
    accumulate, so the duplication stays contained.
    """
    q = np.empty(gt.dim)
    scratch = np.empty(gt.dim)
    nh = np.empty(gt.dim)

    def diff_norm(jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            for k in range(gt.dim):
                q[k] = 0.0
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for fz in range(gt.q_nfac[t]):
                vid = gt.q_var[t, fz]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if kt.metric == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc ** (1.0 / gt.root)
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    def kernel_val(d):
        out = 0.0
        for c in range(kt.kind.shape[0]):
            sgn = -1.0 if kt.adjoint[c] else 1.0
            if kt.win_lo[c] != WIN_NONE:
                win = _psi(2.0 ** kt.win_lo[c] * d) - _psi(2.0 ** kt.win_hi[c] * d)
                if win == 0.0:
                    continue
            else:
                win = 1.0
            kind = kt.kind[c]
            if kind == K_VRIESZ:
                for k in range(gt.dim):
                    scratch[k] = sgn * q[k]
                # same horizontal snap as _nonhorizontal_into: a row with
                # nothing beyond layer one projects to exactly zero
                horizontal = True
                for k in range(gt.n, gt.dim):
                    if scratch[k] != 0.0:
                        horizontal = False
                        break
                for k in range(gt.n):
                    nh[k] = 0.0
                for k in range(gt.n, gt.dim):
                    nh[k] = 0.0 if horizontal else scratch[k]
                if not horizontal:
                    for t in range(gt.q_out.shape[0]):
                        v = gt.q_coeff[t]
                        ok = True
                        for fz in range(gt.q_nfac[t]):
                            vid = gt.q_var[t, fz]
                            if vid < gt.dim:
                                if vid < gt.n:
                                    v *= -scratch[vid]
                                else:
                                    ok = False
                                    break
                            else:
                                v *= scratch[vid - gt.dim]
                        if ok:
                            nh[gt.q_out[t]] += v
                if kt.metric == MET_SMOOTH:
                    acc = 0.0
                    for li in range(gt.step):
                        ss = 0.0
                        for k in range(gt.lay_start[li], gt.lay_end[li]):
                            ss += nh[k] * nh[k]
                        acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                            * _ipow(ss, gt.root // (2 * (li + 1)))
                    dn = acc ** (1.0 / gt.root)
                else:
                    dn = 0.0
                    for li in range(gt.step):
                        ss = 0.0
                        for k in range(gt.lay_start[li], gt.lay_end[li]):
                            ss += nh[k] * nh[k]
                        hv = gt.lam[li] * ss ** (0.5 / (li + 1))
                        if hv > dn:
                            dn = hv
                val = dn ** kt.param[c] / d ** (kt.param[c] + 1)
            elif kind == K_QUASI:
                jj = kt.param[c]
                val = sgn * q[jj] / d ** (gt.degrees[jj] + 1)
            elif kind == K_INVDIST:
                val = 1.0 / d
            elif kind == K_INVDIST_SQ:
                val = 1.0 / (d * d)
            else:
                val = 1.0
            out += kt.scale[c] * win * val
        return out

    for j in range(pts.shape[0]):
        d = diff_norm(j)
        drow[j] = d
        krow[j] = kernel_val(d) if d > 0.0 else 0.0


@njit(cache=True)
def sio_apply(gt, kt, pts, w, f, eps, quer):
    out = np.zeros(quer.shape[0])
    krow = np.empty(pts.shape[0])
    drow = np.empty(pts.shape[0])
    for i in range(quer.shape[0]):
        _kernel_dist_row(gt, kt, pts, quer[i], krow, drow)
        acc = 0.0
        for j in range(pts.shape[0]):
            if drow[j] > eps:
                acc += krow[j] * f[j] * w[j]
        out[i] = acc
    return out


@njit(cache=True)
def sio_apply_multi_eps(gt, kt, pts, w, f, eps_grid):
    E = eps_grid.shape[0]
    N = pts.shape[0]
    out = np.zeros((E, N))
    krow = np.empty(N)
    drow = np.empty(N)
    for i in range(N):
        _kernel_dist_row(gt, kt, pts, pts[i], krow, drow)
        for j in range(N):
            d = drow[j]
            if d <= eps_grid[0]:
                continue
            v = krow[j] * f[j] * w[j]
            for m in range(E):
                if d > eps_grid[m]:
                    out[m, i] += v
                else:
                    break
    return out


# The pairwise loops below (dist_one_to_many, greedy_net, nearest_center,
# cross_min_dist, max_pairwise_dist) each splice the "group-subtract then
# gauge" body in as a closure instead of composing njit helpers.  numba
# inlines closures during lowering with no call ABI, which keeps the
# difference vector in registers: ~20 ns/pair versus ~200 ns/pair for the
# same body behind njit helpers (numba 0.66; inline="always" and
# forceinline=True both measured, neither recovers the cost).  The closure
# returns the comparison surrogate: the smooth gauge raised to gt.root, or
# the max-form gauge as is.  The bitwise-equal shortcut returns exactly
# 0.0; without it the correction monomials cancel only to rounding and
# step >= 3 gauges inflate the residue to ~1e-6.  The five copies are
# deliberately identical; edit them together.


@njit(cache=True)
def dist_one_to_many(gt, x, pts, which):
    out = np.empty(pts.shape[0])
    q = np.empty(gt.dim)

    def gauge_cmp(x, jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for f in range(gt.q_nfac[t]):
                vid = gt.q_var[t, f]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if which == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    inv_root = 1.0 / gt.root
    for j in range(pts.shape[0]):
        d = gauge_cmp(x, j)
        out[j] = d ** inv_root if which == MET_SMOOTH else d
    return out


@njit(cache=True)
def build_kernel_and_dist(gt, kt, pts):
    N = pts.shape[0]
    K = np.zeros((N, N))
    D = np.zeros((N, N))
    for i in range(N):
        _kernel_dist_row(gt, kt, pts, pts[i], K[i], D[i])
    return K, D


@njit(cache=True)
def rk4_lift(gt, base, H0, Hm, dt):
    M = Hm.shape[0]
    out = np.zeros((M + 1, gt.dim))
    out[0] = base
    k1 = np.empty(gt.dim)
    k2 = np.empty(gt.dim)
    k3 = np.empty(gt.dim)
    k4 = np.empty(gt.dim)
    gtmp = np.empty(gt.dim)

    for k in range(M):
        g = out[k]
        _deriv_into(gt, g, H0[k], k1)
        for c in range(gt.dim):
            gtmp[c] = g[c] + 0.5 * dt * k1[c]
        _deriv_into(gt, gtmp, Hm[k], k2)
        for c in range(gt.dim):
            gtmp[c] = g[c] + 0.5 * dt * k2[c]
        _deriv_into(gt, gtmp, Hm[k], k3)
        for c in range(gt.dim):
            gtmp[c] = g[c] + dt * k3[c]
        _deriv_into(gt, gtmp, H0[k + 1], k4)
        for c in range(gt.dim):
            out[k + 1, c] = g[c] + (dt / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
    return out


@njit(cache=True)
def _deriv_into(gt, g, h, out):
    for c in range(gt.n):
        out[c] = h[c]
    for c in range(gt.n, gt.dim):
        out[c] = 0.0
    for t in range(gt.qb_out.shape[0]):
        v = gt.qb_coeff[t] * h[gt.qb_hvar[t]]
        for f in range(gt.qb_nfac[t]):
            v *= g[gt.qb_xvar[t, f]]
        out[gt.qb_out[t]] += v


@njit(cache=True)
def greedy_net(gt, pts, cand, sep, which):
    buf = np.empty(cand.shape[0], dtype=np.int64)
    cnt = 0
    q = np.empty(gt.dim)

    def gauge_cmp(x, jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for f in range(gt.q_nfac[t]):
                vid = gt.q_var[t, f]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if which == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    thr = sep ** gt.root if which == MET_SMOOTH else sep
    for a in range(cand.shape[0]):
        idx = cand[a]
        x = pts[idx]
        ok = True
        for c in range(cnt):
            if gauge_cmp(x, buf[c]) <= thr:
                ok = False
                break
        if ok:
            buf[cnt] = idx
            cnt += 1
    return buf[:cnt].copy()


@njit(cache=True)
def nearest_center(gt, pts, members, center_idx, which):
    out = np.zeros(members.shape[0], dtype=np.int64)
    q = np.empty(gt.dim)

    def gauge_cmp(x, jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for f in range(gt.q_nfac[t]):
                vid = gt.q_var[t, f]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if which == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    for a in range(members.shape[0]):
        best = np.inf
        besti = 0
        x = pts[members[a]]
        for c in range(center_idx.shape[0]):
            d = gauge_cmp(x, center_idx[c])
            if d < best:
                best = d
                besti = c
        out[a] = besti
    return out


@njit(cache=True)
def cross_min_dist(gt, pts, A, B, which):
    out = np.empty(A.shape[0])
    q = np.empty(gt.dim)

    def gauge_cmp(x, jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for f in range(gt.q_nfac[t]):
                vid = gt.q_var[t, f]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if which == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    inv_root = 1.0 / gt.root
    for i in range(A.shape[0]):
        best = np.inf
        x = pts[A[i]]
        for j in range(B.shape[0]):
            d = gauge_cmp(x, B[j])
            if d < best:
                best = d
        out[i] = best ** inv_root if which == MET_SMOOTH else best
    return out


@njit(cache=True)
def max_pairwise_dist(gt, pts, which):
    best = 0.0
    q = np.empty(gt.dim)

    def gauge_cmp(x, jb):
        same = True
        for k in range(gt.dim):
            if x[k] != pts[jb, k]:
                same = False
                break
        if same:
            return 0.0
        for k in range(gt.dim):
            q[k] = x[k] - pts[jb, k]
        for t in range(gt.q_out.shape[0]):
            v = gt.q_coeff[t]
            for f in range(gt.q_nfac[t]):
                vid = gt.q_var[t, f]
                if vid < gt.dim:
                    v *= -pts[jb, vid]
                else:
                    v *= x[vid - gt.dim]
            q[gt.q_out[t]] += v
        if which == MET_SMOOTH:
            acc = 0.0
            for li in range(gt.step):
                ss = 0.0
                for k in range(gt.lay_start[li], gt.lay_end[li]):
                    ss += q[k] * q[k]
                acc += _ipow(gt.lam[li], gt.root // (li + 1)) \
                    * _ipow(ss, gt.root // (2 * (li + 1)))
            return acc
        hb = 0.0
        for li in range(gt.step):
            ss = 0.0
            for k in range(gt.lay_start[li], gt.lay_end[li]):
                ss += q[k] * q[k]
            hv = gt.lam[li] * ss ** (0.5 / (li + 1))
            if hv > hb:
                hb = hv
        return hb

    for i in range(1, pts.shape[0]):
        x = pts[i]
        for j in range(i):
            d = gauge_cmp(x, j)
            if d > best:
                best = d
    return best ** (1.0 / gt.root) if which == MET_SMOOTH else best


@njit(cache=True)
def maximal_function_all(gt, pts, w, fvals, which):
    N = pts.shape[0]
    out = np.zeros(N)
    for i in range(N):
        d = dist_one_to_many(gt, pts[i], pts, which)
        order = np.argsort(d)
        cw = 0.0
        cf = 0.0
        best = 0.0
        for k in range(N):
            j = order[k]
            cw += w[j]
            cf += abs(fvals[j]) * w[j]
            if k == N - 1 or d[order[k + 1]] > d[j]:
                v = cf / cw
                if v > best:
                    best = v
        out[i] = best
    return out
