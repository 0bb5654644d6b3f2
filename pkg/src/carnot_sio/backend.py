"""Hot-kernel backend selection.

The numerical inner loops (pairwise operator application, net
construction, maximal functions, curve lifting) exist twice: jitted in
_impl_numba and vectorized in _impl_numpy.  The active module is chosen
once at import from the CARNOT_SIO_BACKEND environment variable:

    CARNOT_SIO_BACKEND=numpy   force the pure numpy fallback
    CARNOT_SIO_BACKEND=numba   require numba (ImportError if missing)
    unset                      numba when available, else numpy

`ops` is the selected module; everything downstream calls through it.
"""
from __future__ import annotations

import os

import numpy as np

from . import _impl_numpy
from ._structure import K_INVDIST, single_kernel_table

_requested = os.environ.get("CARNOT_SIO_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"CARNOT_SIO_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    ops = _impl_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _impl_numba as _impl_nb
        ops = _impl_nb
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        ops = _impl_numpy
        BACKEND = "numpy"


def backend_name():
    return BACKEND


def set_num_threads(k):
    """Set the numba thread count; ignored on the numpy backend."""
    if BACKEND == "numba":
        import numba
        numba.set_num_threads(max(1, int(k)))


_warmed = set()


def warmup(group):
    """Trigger jit compilation of every hot kernel on tiny inputs.

    Compilation is per-signature, so one warmup covers all groups; calling
    this before timed sections keeps compile time out of measurements.
    No-op on the numpy backend and on repeat calls.
    """
    key = BACKEND
    if key in _warmed:
        return
    gt = group.tables
    pts = np.zeros((3, gt.dim))
    pts[1, 0] = 0.5
    pts[2, min(gt.dim - 1, 1)] = 0.25
    w = np.full(3, 1.0 / 3)
    f = np.ones(3)
    kt = single_kernel_table(K_INVDIST)
    idx = np.arange(3, dtype=np.int64)
    ops.batch_multiply(gt, pts, pts)
    ops.batch_qbar(gt, pts, pts[:, :gt.n].copy())
    ops.batch_norm(gt, pts, 0)
    ops.batch_norm(gt, pts, 1)
    ops.bump_psi(np.linspace(0.0, 3.0, 7))
    ops.kernel_eval(gt, kt, pts[1:])
    ops.sio_apply(gt, kt, pts, w, f, 1e-3, pts)
    ops.sio_apply_multi_eps(gt, kt, pts, w, f, np.array([1e-3, 1e-2]))
    ops.dist_one_to_many(gt, pts[0], pts, 0)
    ops.build_kernel_and_dist(gt, kt, pts)
    ops.rk4_lift(gt, pts[0], pts[:, :gt.n].copy(), pts[:2, :gt.n].copy(), 0.1)
    ops.greedy_net(gt, pts, idx, 0.1, 0)
    ops.nearest_center(gt, pts, idx, idx[:2], 0)
    ops.cross_min_dist(gt, pts, idx[:1], idx[1:], 0)
    ops.max_pairwise_dist(gt, pts, 0)
    ops.maximal_function_all(gt, pts, w, f, 0)
    _warmed.add(key)
