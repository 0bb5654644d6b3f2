"""Pure numpy implementations of the hot kernels.

This is the fallback backend (CARNOT_SIO_BACKEND=numpy) and the reference
the numba twin in _impl_numba.py is tested against.  All functions take a
GroupTables first and plain arrays after; nothing here imports the rest of
the package.
"""
from __future__ import annotations

import numpy as np

from ._structure import (GroupTables, KernelTable, K_CONST, K_INVDIST,
                         K_INVDIST_SQ, K_QUASI, K_VRIESZ, MET_HOM,
                         MET_SMOOTH, WIN_NONE)

_BLOCK_ELEMS = 2 ** 21


def bump_psi(r):
    """Smooth cutoff: 1 on (-inf, 1/2], 0 on [2, inf), C-infinity between."""
    r = np.asarray(r, dtype=np.float64)
    up = np.clip(2.0 - r, 0.0, None)
    dn = np.clip(r - 0.5, 0.0, None)
    with np.errstate(divide="ignore", over="ignore"):
        gu = np.where(up > 0, np.exp(-1.0 / np.where(up > 0, up, 1.0)), 0.0)
        gd = np.where(dn > 0, np.exp(-1.0 / np.where(dn > 0, dn, 1.0)), 0.0)
    out = np.where(r <= 0.5, 1.0, np.where(r >= 2.0, 0.0, gu / np.where(gu + gd > 0, gu + gd, 1.0)))
    return out if out.ndim else float(out)


def batch_multiply(gt: GroupTables, X, Y):
    Z = X + Y
    for t in range(gt.q_out.shape[0]):
        v = np.full(X.shape[0], gt.q_coeff[t])
        for f in range(gt.q_nfac[t]):
            vid = gt.q_var[t, f]
            v = v * (X[:, vid] if vid < gt.dim else Y[:, vid - gt.dim])
        Z[:, gt.q_out[t]] += v
    return Z


def batch_qbar(gt: GroupTables, X, H):
    out = np.zeros((X.shape[0], gt.dim))
    for t in range(gt.qb_out.shape[0]):
        v = gt.qb_coeff[t] * H[:, gt.qb_hvar[t]]
        for f in range(gt.qb_nfac[t]):
            v = v * X[:, gt.qb_xvar[t, f]]
        out[:, gt.qb_out[t]] += v
    return out


def batch_norm(gt: GroupTables, X, which):
    if which == MET_SMOOTH:
        acc = np.zeros(X.shape[0])
        for i in range(gt.step):
            ss = np.einsum("ij,ij->i", X[:, gt.lay_start[i]:gt.lay_end[i]],
                           X[:, gt.lay_start[i]:gt.lay_end[i]])
            e = gt.root // (2 * (i + 1))
            acc += gt.lam[i] ** (gt.root // (i + 1)) * ss ** e
        return acc ** (1.0 / gt.root)
    best = np.zeros(X.shape[0])
    for i in range(gt.step):
        ss = np.einsum("ij,ij->i", X[:, gt.lay_start[i]:gt.lay_end[i]],
                       X[:, gt.lay_start[i]:gt.lay_end[i]])
        np.maximum(best, gt.lam[i] * ss ** (0.5 / (i + 1)), out=best)
    return best


def _nonhorizontal(gt: GroupTables, Z):
    """NH(z) = proj(z)^{-1} z for a batch, via the product polynomial.

    Rows whose coordinates beyond the first layer are exactly zero map to
    exactly zero: they equal their own projection, and letting the
    monomials cancel in floating point instead would leave step >= 3
    residues that the gauge's fractional powers inflate.
    """
    NH = Z.copy()
    NH[:, :gt.n] = 0.0
    if gt.dim > gt.n:
        horizontal = np.all(Z[:, gt.n:] == 0.0, axis=1)
    for t in range(gt.q_out.shape[0]):
        v = np.full(Z.shape[0], gt.q_coeff[t])
        alive = True
        for f in range(gt.q_nfac[t]):
            vid = gt.q_var[t, f]
            if vid < gt.dim:
                if vid < gt.n:
                    v = v * (-Z[:, vid])
                else:
                    alive = False
                    break
            else:
                v = v * Z[:, vid - gt.dim]
        if alive:
            NH[:, gt.q_out[t]] += v
    if gt.dim > gt.n:
        NH[horizontal] = 0.0
    return NH


def kernel_eval_with_d(gt: GroupTables, kt: KernelTable, Z, d):
    """Evaluate the kernel table at rows Z with precomputed gauges d."""
    out = np.zeros(Z.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        for c in range(kt.kind.shape[0]):
            Zc = -Z if kt.adjoint[c] else Z
            windowed = kt.win_lo[c] != WIN_NONE
            if windowed:
                win = bump_psi(2.0 ** kt.win_lo[c] * d) - bump_psi(2.0 ** kt.win_hi[c] * d)
            else:
                win = np.ones(Z.shape[0])
            kind = kt.kind[c]
            if kind == K_VRIESZ:
                dn = batch_norm(gt, _nonhorizontal(gt, Zc), kt.metric)
                val = dn ** kt.param[c] / d ** (kt.param[c] + 1)
            elif kind == K_QUASI:
                j = kt.param[c]
                val = Zc[:, j] / d ** (gt.degrees[j] + 1)
            elif kind == K_INVDIST:
                val = 1.0 / d
            elif kind == K_INVDIST_SQ:
                val = 1.0 / (d * d)
            else:  # K_CONST
                val = np.ones(Z.shape[0])
            # a vanished window kills the term even where val overflowed
            out += kt.scale[c] * np.where(win == 0.0, 0.0, win * val)
    return out


def kernel_eval(gt: GroupTables, kt: KernelTable, Z):
    return kernel_eval_with_d(gt, kt, Z, batch_norm(gt, Z, kt.metric))


def _row_blocks(nrows, npts):
    b = max(1, min(nrows, _BLOCK_ELEMS // max(npts, 1)))
    for lo in range(0, nrows, b):
        yield lo, min(lo + b, nrows)


def left_diff(gt, Y, X):
    """Rows y_i^{-1} x_i, snapped to exact zero for identical inputs.

    Without the snap the correction monomials cancel only to rounding,
    and step >= 3 gauges turn the ~1e-18 residue into d ~ 1e-6.
    """
    Z = batch_multiply(gt, -Y, X)
    Z[np.all(X == Y, axis=1)] = 0.0
    return Z


def _pair_block(gt, quer, pts, lo, hi):
    B = hi - lo
    N = pts.shape[0]
    Xr = np.repeat(quer[lo:hi], N, axis=0)
    Yr = np.tile(pts, (B, 1))
    return left_diff(gt, Yr, Xr)


def sio_apply(gt: GroupTables, kt: KernelTable, pts, w, f, eps, quer=None):
    """(T f)(q_i) = sum_{d(q_i, p_j) > eps} K(p_j^{-1} q_i) f_j w_j."""
    quer = pts if quer is None else quer
    fw = f * w
    out = np.zeros(quer.shape[0])
    N = pts.shape[0]
    for lo, hi in _row_blocks(quer.shape[0], N):
        Z = _pair_block(gt, quer, pts, lo, hi)
        d = batch_norm(gt, Z, kt.metric)
        vals = kernel_eval_with_d(gt, kt, Z, d)
        vals = np.where(d > eps, vals, 0.0).reshape(hi - lo, N)
        out[lo:hi] = vals @ fw
    return out


def sio_apply_multi_eps(gt: GroupTables, kt: KernelTable, pts, w, f, eps_grid):
    """One O(N^2) pass giving (T_eps f) for every eps in ascending eps_grid."""
    fw = f * w
    E = eps_grid.shape[0]
    N = pts.shape[0]
    out = np.zeros((E, pts.shape[0]))
    for lo, hi in _row_blocks(pts.shape[0], N):
        B = hi - lo
        Z = _pair_block(gt, pts, pts, lo, hi)
        d = batch_norm(gt, Z, kt.metric)
        vals = kernel_eval_with_d(gt, kt, Z, d)
        # self-pairs land in the excluded bucket below every positive eps;
        # zero them first so a singular value at the origin cannot poison
        # the product against f
        vals = np.where(d == 0.0, 0.0, vals) * np.tile(fw, B)
        bins = np.searchsorted(eps_grid, d, side="left")
        bins += np.repeat(np.arange(B), N) * (E + 1)
        sums = np.bincount(bins, weights=vals, minlength=B * (E + 1))
        sums = sums.reshape(B, E + 1)
        # pair contributes to eps_m iff d > eps_m, i.e. bin index > m
        suff = np.cumsum(sums[:, ::-1], axis=1)[:, ::-1]
        out[:, lo:hi] = suff[:, 1:].T
    return out


def dist_one_to_many(gt: GroupTables, x, pts, which):
    Z = left_diff(gt, pts, np.broadcast_to(x, pts.shape).copy())
    return batch_norm(gt, Z, which)


def build_kernel_and_dist(gt: GroupTables, kt: KernelTable, pts):
    """Dense K_ij = kernel(p_j^{-1} p_i) and D_ij = d(p_i, p_j) matrices."""
    N = pts.shape[0]
    K = np.zeros((N, N))
    D = np.zeros((N, N))
    for lo, hi in _row_blocks(N, N):
        Z = _pair_block(gt, pts, pts, lo, hi)
        d = batch_norm(gt, Z, kt.metric)
        vals = kernel_eval_with_d(gt, kt, Z, d)
        vals[d == 0.0] = 0.0
        K[lo:hi] = vals.reshape(hi - lo, N)
        D[lo:hi] = d.reshape(hi - lo, N)
    return K, D


def rk4_lift(gt: GroupTables, base, H0, Hm, dt):
    """Lift a horizontal velocity to a group trajectory with RK4 steps.

    H0 holds the velocity at the M+1 grid points, Hm at the M midpoints.
    """
    M = Hm.shape[0]
    out = np.zeros((M + 1, gt.dim))
    out[0] = base

    def deriv(g, h):
        dg = np.zeros(gt.dim)
        dg[:gt.n] = h
        for t in range(gt.qb_out.shape[0]):
            v = gt.qb_coeff[t] * h[gt.qb_hvar[t]]
            for f in range(gt.qb_nfac[t]):
                v *= g[gt.qb_xvar[t, f]]
            dg[gt.qb_out[t]] += v
        return dg

    for k in range(M):
        g = out[k]
        k1 = deriv(g, H0[k])
        k2 = deriv(g + 0.5 * dt * k1, Hm[k])
        k3 = deriv(g + 0.5 * dt * k2, Hm[k])
        k4 = deriv(g + dt * k3, H0[k + 1])
        out[k + 1] = g + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out


def greedy_net(gt: GroupTables, pts, cand, sep, which):
    """Greedy maximal sep-separated subset of pts[cand], in cand order."""
    centers = []
    for idx in cand:
        if not centers:
            centers.append(idx)
            continue
        d = dist_one_to_many(gt, pts[idx], pts[np.asarray(centers)], which)
        if np.all(d > sep):
            centers.append(idx)
    return np.asarray(centers, dtype=np.int64)


def nearest_center(gt: GroupTables, pts, members, center_idx, which):
    """Index into center_idx of the closest center for each member point.

    Ties go to the smallest position in center_idx (argmin convention).
    """
    centers = pts[center_idx]
    out = np.zeros(members.shape[0], dtype=np.int64)
    for a, idx in enumerate(members):
        d = dist_one_to_many(gt, pts[idx], centers, which)
        out[a] = int(np.argmin(d))
    return out


def cross_min_dist(gt: GroupTables, pts, A, B, which):
    """min_{b in B} d(pts[a], pts[b]) for each a in A."""
    out = np.zeros(A.shape[0])
    ptsB = pts[B]
    for i, a in enumerate(A):
        out[i] = dist_one_to_many(gt, pts[a], ptsB, which).min()
    return out


def max_pairwise_dist(gt: GroupTables, pts, which):
    best = 0.0
    for i in range(1, pts.shape[0]):
        d = dist_one_to_many(gt, pts[i], pts[:i], which)
        m = d.max()
        if m > best:
            best = float(m)
    return best


def maximal_function_all(gt: GroupTables, pts, w, fvals, which):
    """Hardy-Littlewood maximal function of f d(mu) at every point.

    Radii range over the distances actually hit, so the sup is exact for
    the discrete measure; balls are closed and always contain the center.
    """
    N = pts.shape[0]
    out = np.zeros(N)
    afw = np.abs(fvals) * w
    for i in range(N):
        d = dist_one_to_many(gt, pts[i], pts, which)
        order = np.argsort(d, kind="stable")
        ds = d[order]
        cw = np.cumsum(w[order])
        cf = np.cumsum(afw[order])
        last = np.ones(N, dtype=bool)
        last[:-1] = ds[1:] > ds[:-1]
        out[i] = np.max(cf[last] / cw[last])
    return out
