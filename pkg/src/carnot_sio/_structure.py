"""Plain-array containers shared by the numba and numpy backends.

Everything the hot loops need about a group or a kernel is flattened into
NamedTuples of scalars and numpy arrays so the same objects can be passed
to jitted and plain functions alike.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

# kernel kinds understood by the fast backends
K_VRIESZ = 0      # vertical Riesz: d(NH(p),0)^n / d(p,0)^(n+1)
K_QUASI = 1       # quasi Riesz component: p_i / d(p,0)^(deg_i + 1)
K_INVDIST = 2     # 1 / d(p,0)
K_INVDIST_SQ = 3  # 1 / d(p,0)^2
K_CONST = 4       # constant value (stored in scale)

# metric selectors
MET_SMOOTH = 0
MET_HOM = 1

# sentinel for "no dyadic bump window attached"
WIN_NONE = 2 ** 30


class GroupTables(NamedTuple):
    """Structure of a Carnot group flattened for kernel code.

    The group product is x*y = x + y + Q(x,y) where Q is a polynomial with
    one monomial per row of the q_* tables: q_out[t] is the output
    coordinate, q_coeff[t] the coefficient and q_var[t, :q_nfac[t]] the
    factor variable ids (ids < dim refer to x coordinates, ids >= dim to
    y coordinates, shifted by dim).

    The qb_* tables hold the y-directional derivative of Q at y = 0 along
    horizontal directions: row t contributes qb_coeff[t] * prod(x[qb_xvar])
    * h[qb_hvar] to coordinate qb_out[t].
    """

    n: int                 # first-layer dimension
    dim: int               # total number of coordinates
    step: int
    degrees: np.ndarray    # int64[dim]
    lay_start: np.ndarray  # int64[step]
    lay_end: np.ndarray    # int64[step]
    lam: np.ndarray        # float64[step] homogeneous-norm layer weights
    root: int              # 2 * step!, the smooth-norm root power
    q_out: np.ndarray      # int64[T]
    q_coeff: np.ndarray    # float64[T]
    q_nfac: np.ndarray     # int64[T]
    q_var: np.ndarray      # int64[T, 4]
    qb_out: np.ndarray     # int64[Tb]
    qb_coeff: np.ndarray   # float64[Tb]
    qb_nfac: np.ndarray    # int64[Tb] number of x factors
    qb_xvar: np.ndarray    # int64[Tb, 3]
    qb_hvar: np.ndarray    # int64[Tb]


class KernelTable(NamedTuple):
    """A sum of built-in kernel components, flattened for the backends.

    Component c evaluates as
        scale[c] * window(d) * base(kind[c], param[c]; z)
    at z = p (or z = p^{-1} when adjoint[c]), where window(d) is
    psi(2^win_lo * d) - psi(2^win_hi * d) for the standard bump psi, or 1
    when win_lo == WIN_NONE.  All components share one metric selector.
    """

    kind: np.ndarray      # int64[C]
    param: np.ndarray     # int64[C]
    adjoint: np.ndarray   # int64[C]
    win_lo: np.ndarray    # int64[C]
    win_hi: np.ndarray    # int64[C]
    scale: np.ndarray     # float64[C]
    metric: int


def single_kernel_table(kind, param=0, adjoint=0, win_lo=WIN_NONE,
                        win_hi=WIN_NONE, scale=1.0, metric=MET_SMOOTH):
    return KernelTable(
        kind=np.array([kind], dtype=np.int64),
        param=np.array([param], dtype=np.int64),
        adjoint=np.array([adjoint], dtype=np.int64),
        win_lo=np.array([win_lo], dtype=np.int64),
        win_hi=np.array([win_hi], dtype=np.int64),
        scale=np.array([scale], dtype=np.float64),
        metric=metric,
    )


def concat_kernel_tables(tables):
    metrics = {t.metric for t in tables}
    if len(metrics) != 1:
        raise ValueError("cannot sum kernels with different metric selectors")
    return KernelTable(
        kind=np.concatenate([t.kind for t in tables]),
        param=np.concatenate([t.param for t in tables]),
        adjoint=np.concatenate([t.adjoint for t in tables]),
        win_lo=np.concatenate([t.win_lo for t in tables]),
        win_hi=np.concatenate([t.win_hi for t in tables]),
        scale=np.concatenate([t.scale for t in tables]),
        metric=metrics.pop(),
    )
