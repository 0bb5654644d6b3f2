"""Singular-integral kernels on Carnot groups as immutable values.

A Kernel evaluates off the origin and carries the metadata the operator
machinery needs: a declared growth constant (|K(p)| <= B / d(p,0) on
samples), a declared smoothness exponent, a homogeneity flag, and the
metric its gauge d(.,0) uses.  Built-in kernels are backed by flat
component tables the fast backends consume directly; kernel algebra
(sums, scalar multiples, adjoints, dyadic localization) stays in that
representation whenever possible and falls back to a vectorized closure
otherwise.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace

import numpy as np

from . import _impl_numpy as _npy
from . import _structure as st
from .backend import ops
from .groups import CarnotGroup

_METRIC_CODE = {"smooth": st.MET_SMOOTH, "hom": st.MET_HOM}
_METRIC_NAME = {v: k for k, v in _METRIC_CODE.items()}

_CALIBRATION_SEED = 7
_CALIBRATION_SAMPLES = 2048


class KernelDomainError(ValueError):
    """Raised when a kernel is evaluated at the group origin."""


class BumpProfileError(ValueError):
    """Raised when a cutoff profile violates the sandwich or smoothness."""


def _validate_profile(fn, grid):
    r = np.linspace(0.0, 3.0, grid + 1)
    v = np.asarray(fn(r), dtype=float)
    if v.shape != r.shape or not np.all(np.isfinite(v)):
        raise BumpProfileError("profile must map a grid to finite values")
    if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
        raise BumpProfileError("profile values must stay within [0, 1]")
    if np.any(np.abs(v[r <= 0.5] - 1.0) > 1e-12):
        raise BumpProfileError("profile must equal 1 on [0, 1/2]")
    if np.any(np.abs(v[r >= 2.0]) > 1e-12):
        raise BumpProfileError("profile must vanish on [2, oo)")
    mid = (r >= 0.5) & (r <= 2.0)
    if np.any(np.diff(v[mid]) > 1e-12):
        raise BumpProfileError("profile must be nonincreasing on [1/2, 2]")
    h = r[1] - r[0]
    dv = np.diff(v) / h
    if np.max(np.abs(dv)) > 10.0:
        raise BumpProfileError("profile jump exceeds a C^1 slope bound")
    if np.max(np.abs(np.diff(dv))) > 100.0 * h:
        raise BumpProfileError("profile derivative is not continuous")


class BumpProfile:
    """Smooth radial cutoff: 1 on [0, 1/2], 0 on [2, oo), monotone between.

    The default is psi(r) = g(2-r) / (g(2-r) + g(r-1/2)) with
    g(u) = exp(-1/u) for u > 0 and 0 otherwise, which meets the sandwich
    bounds exactly.  A custom profile must accept and return numpy arrays;
    it is validated on a grid at construction.
    """

    def __init__(self, fn=None, name="standard", grid=4096):
        self.fn = _npy.bump_psi if fn is None else fn
        self.name = name
        self.is_standard = fn is None
        _validate_profile(self.fn, grid)

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))

    def __repr__(self):
        return f"BumpProfile({self.name!r})"


STANDARD_BUMP = BumpProfile()


def _calibrated_growth(group, table):
    """Max of |K| over the gauge unit sphere, with 5% headroom.

    For -1-homogeneous kernels |K(p)| d(p,0) is constant along dilation
    rays, so the unit sphere determines the growth constant.
    """
    rng = np.random.default_rng(_CALIBRATION_SEED)
    pts = group.unit_sphere_points(rng, _CALIBRATION_SAMPLES,
                                   _METRIC_NAME[table.metric])
    vals = _npy.kernel_eval(group.tables, table, pts)
    return 1.05 * float(np.max(np.abs(vals)))


@dataclass(frozen=True)
class Kernel:
    """A scalar kernel on a Carnot group, defined off the origin.

    growth_constant bounds |K(p)| * d(p,0) on samples, holder_exponent is
    the declared off-diagonal smoothness order, and homogeneous means
    K(dilate(r, p)) = K(p) / r.  Sums, scalar multiples, adjoints and
    dyadic windows of table-backed kernels stay table-backed (and fast);
    anything custom evaluates through a plain numpy closure.
    """

    group: CarnotGroup
    name: str
    growth_constant: float
    holder_exponent: float = 1.0
    homogeneous: bool = False
    metric: str = "smooth"
    table: st.KernelTable | None = dataclasses.field(default=None, repr=False)
    rows_fn: object = dataclasses.field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.metric not in _METRIC_CODE:
            raise ValueError(f"unknown metric {self.metric!r}")
        if (self.table is None) == (self.rows_fn is None):
            raise ValueError("exactly one of table/rows_fn must be set")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder_exponent must lie in (0, 1]")

    @property
    def metric_code(self):
        return _METRIC_CODE[self.metric]

    # -- evaluation ----------------------------------------------------------
    def eval_rows(self, Z, d):
        """Values at precomputed difference rows Z with gauges d.

        The building block the operator module loops over; d == 0 rows are
        the caller's responsibility.
        """
        if self.table is not None:
            return ops.kernel_eval_with_d(self.group.tables, self.table, Z, d)
        return self.rows_fn(Z, d)

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        P = np.atleast_2d(p)
        if P.shape[1] != self.group.dim:
            raise ValueError(f"points must have {self.group.dim} coordinates")
        d = _npy.batch_norm(self.group.tables, P, self.metric_code)
        if np.any(d == 0.0):
            raise KernelDomainError(
                f"kernel {self.name!r} is undefined at the origin")
        vals = self.eval_rows(P, d)
        return float(vals[0]) if single else vals

    __call__ = evaluate

    # -- algebra -------------------------------------------------------------
    def _combine_meta(self, other):
        if self.group != other.group:
            raise ValueError("kernels live on different groups")
        if self.metric != other.metric:
            raise ValueError("kernels use different metrics")

    def __add__(self, other):
        if not isinstance(other, Kernel):
            return NotImplemented
        self._combine_meta(other)
        name = f"{self.name}+{other.name}"
        meta = dict(
            growth_constant=self.growth_constant + other.growth_constant,
            holder_exponent=min(self.holder_exponent, other.holder_exponent),
            homogeneous=self.homogeneous and other.homogeneous,
        )
        if self.table is not None and other.table is not None:
            table = st.concat_kernel_tables([self.table, other.table])
            return replace(self, name=name, table=table, **meta)
        a, b = self.eval_rows, other.eval_rows
        return replace(self, name=name, table=None,
                       rows_fn=lambda Z, d: a(Z, d) + b(Z, d), **meta)

    def __mul__(self, c):
        c = float(c)
        name = f"{c:g}*{self.name}"
        B = abs(c) * self.growth_constant
        if self.table is not None:
            table = self.table._replace(scale=self.table.scale * c)
            return replace(self, name=name, table=table, growth_constant=B)
        base = self.eval_rows
        return replace(self, name=name, growth_constant=B,
                       rows_fn=lambda Z, d: c * base(Z, d))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def adjoint(self):
        """The kernel p -> K(p^{-1}) of the adjoint operator."""
        name = f"adj({self.name})"
        if self.table is not None:
            table = self.table._replace(adjoint=1 - self.table.adjoint)
            return replace(self, name=name, table=table)
        base = self.eval_rows
        return replace(self, name=name, rows_fn=lambda Z, d: base(-Z, d))


# -- built-in kernels --------------------------------------------------------

def vertical_riesz(group, n, metric="smooth"):
    """d(NH(p),0)^n / d(p,0)^(n+1): nonnegative, -1-homogeneous, and zero
    along horizontal directions, where NH(p) is the remainder after
    splitting off the horizontal projection."""
    n = int(n)
    if n < 1:
        raise ValueError("order n must be >= 1")
    table = st.single_kernel_table(st.K_VRIESZ, param=n,
                                   metric=_METRIC_CODE[metric])
    return Kernel(group, f"vriesz:{n}", _calibrated_growth(group, table),
                  homogeneous=True, metric=metric, table=table)


def quasi_riesz(group, metric="smooth"):
    """All coordinate kernels p_i / d(p,0)^(deg_i + 1), one per coordinate.

    Each component is antisymmetric and -1-homogeneous; they are exposed
    as independent scalar kernels.
    """
    return tuple(quasi_riesz_component(group, i + 1, metric)
                 for i in range(group.dim))


def quasi_riesz_component(group, i, metric="smooth"):
    """Component i (1-based, matching report column names) of quasi_riesz."""
    if not 1 <= i <= group.dim:
        raise ValueError(f"component must lie in 1..{group.dim}")
    table = st.single_kernel_table(st.K_QUASI, param=i - 1,
                                   metric=_METRIC_CODE[metric])
    return Kernel(group, f"quasi:{i}", _calibrated_growth(group, table),
                  homogeneous=True, metric=metric, table=table)


def inv_dist(group, metric="smooth"):
    """1 / d(p,0): the positive control kernel with unit growth constant.

    It has the right size and smoothness but no cancellation, so operator
    norms on curves grow as the truncation shrinks; used to show the
    diagnostics can tell boundedness from divergence.
    """
    table = st.single_kernel_table(st.K_INVDIST, metric=_METRIC_CODE[metric])
    return Kernel(group, "inv-dist", 1.0, homogeneous=True, metric=metric,
                  table=table)


def inv_dist_sq(group, metric="smooth"):
    """1 / d(p,0)^2: the control kernel that violates the size condition."""
    table = st.single_kernel_table(st.K_INVDIST_SQ,
                                   metric=_METRIC_CODE[metric])
    return Kernel(group, "inv-dist-sq", 1.0, metric=metric, table=table)


def constant_kernel(group, value=1.0, metric="smooth"):
    """K identically equal to value; rank-one test control."""
    table = st.single_kernel_table(st.K_CONST, scale=float(value),
                                   metric=_METRIC_CODE[metric])
    return Kernel(group, f"const:{value:g}", abs(float(value)), metric=metric,
                  table=table)


def from_spec(group, spec, metric="smooth"):
    """Resolve a kernel specification string.

    Accepted forms: "vriesz:<n>", "quasi:<i>" (1-based component),
    "inv-dist", "inv-dist-sq", and "zero" (test control).
    """
    spec = spec.strip()
    if spec == "inv-dist":
        return inv_dist(group, metric)
    if spec == "inv-dist-sq":
        return inv_dist_sq(group, metric)
    if spec == "zero":
        return constant_kernel(group, 0.0, metric)
    head, sep, arg = spec.partition(":")
    if sep and head == "vriesz":
        return vertical_riesz(group, int(arg), metric)
    if sep and head == "quasi":
        return quasi_riesz_component(group, int(arg), metric)
    raise ValueError(f"unknown kernel spec {spec!r}")


# -- dyadic localization -----------------------------------------------------

def lp_band(kernel, j_lo, j_hi, psi=None):
    """kernel times the window psi(2^j_lo d) - psi(2^(j_hi+1) d).

    This is the telescoped sum of the dyadic pieces j_lo..j_hi inclusive;
    lp_piece is the band of width one.
    """
    j_lo, j_hi = int(j_lo), int(j_hi)
    if j_hi < j_lo:
        raise ValueError("empty dyadic band")
    psi = STANDARD_BUMP if psi is None else psi
    name = f"band[{j_lo}..{j_hi}]({kernel.name})"
    if (psi.is_standard and kernel.table is not None
            and np.all(kernel.table.win_lo == st.WIN_NONE)):
        table = kernel.table._replace(
            win_lo=np.full_like(kernel.table.win_lo, j_lo),
            win_hi=np.full_like(kernel.table.win_hi, j_hi + 1))
        return replace(kernel, name=name, table=table, homogeneous=False)
    base = kernel.eval_rows

    def rows(Z, d):
        win = psi(d * 2.0 ** j_lo) - psi(d * 2.0 ** (j_hi + 1))
        return np.where(win == 0.0, 0.0, win * base(Z, d))

    return replace(kernel, name=name, table=None, rows_fn=rows,
                   homogeneous=False)


def lp_piece(kernel, j, psi=None):
    """The dyadic piece eta_j * K with eta_j = psi(2^j d) - psi(2^(j+1) d).

    Its support lies in the closed annulus 2^-(j+2) <= d <= 2^-(j-1), and
    summing pieces over j telescopes back to the kernel.
    """
    return lp_band(kernel, j, j, psi)


# -- empirical constants -----------------------------------------------------

@dataclass(frozen=True)
class CZEstimate:
    """Monte-Carlo constants for the size and smoothness conditions."""

    b_hat: float            # max |K(p)| d(p,0) over the shell sample
    beta_hat: float         # fitted smoothness exponent
    holder_hat: float       # fitted constant in front of the Holder bound
    diverged: bool
    shell_slope: float      # log-log trend of per-shell max |K| d vs radius
    b_by_budget: tuple      # running max after each budget doubling


_SHELL_LOG2 = np.linspace(-10.0, 10.0, 41)


def _shell_sample(group, metric, count, rng):
    """Points stratified log-uniformly over gauge shells [2^-10, 2^10]."""
    lo, hi = _SHELL_LOG2[:-1], _SHELL_LOG2[1:]
    per = max(1, count // lo.size)
    u = rng.uniform(np.repeat(lo, per), np.repeat(hi, per))
    radii = 2.0 ** u
    dirs = group.unit_sphere_points(rng, radii.size, metric)
    return dirs * radii[:, None] ** group.degrees, radii


def estimate_cz_constants(kernel, budget=4096, seed=20260819):
    """Estimate the size constant, smoothness exponent, and divergence flag.

    The size constant is the max of |K(p)| d(p,0) over shells spanning
    [2^-10, 2^10]; it is recomputed at budget, 2x, 4x, and 8x samples and
    flagged divergent if the running max keeps growing, or if the
    per-shell maxima trend with the shell radius (a scale-covariant
    kernel keeps them flat).  The smoothness exponent comes from an
    envelope fit of |K(a) - K(b)| d(a,0) against d(a,b)/d(a,0) over
    dyadic separation ratios <= 1/2, using both the kernel and its
    adjoint differences.
    """
    if budget < 10 ** 3:
        raise ValueError("sample budget must be at least 1000")
    g = kernel.group
    metric = kernel.metric
    code = kernel.metric_code

    b_by_budget = []
    running = 0.0
    shell_max = np.zeros(_SHELL_LOG2.size - 1)
    for k in range(4):
        rng = np.random.default_rng(seed + k)
        pts, _ = _shell_sample(g, metric, budget * 2 ** k, rng)
        d = _npy.batch_norm(g.tables, pts, code)
        vals = np.abs(kernel.eval_rows(pts, d)) * d
        running = max(running, float(vals.max()))
        b_by_budget.append(running)
        per = pts.shape[0] // (_SHELL_LOG2.size - 1)
        shell_max = np.maximum(
            shell_max, vals.reshape(_SHELL_LOG2.size - 1, per).max(axis=1))
    centers = 0.5 * (_SHELL_LOG2[:-1] + _SHELL_LOG2[1:])
    keep = shell_max > 0
    if keep.sum() >= 4:
        shell_slope = float(np.polyfit(centers[keep],
                                       np.log2(shell_max[keep]), 1)[0])
    else:
        shell_slope = 0.0
    grew = b_by_budget[-1] > 1.1 * b_by_budget[0]
    diverged = grew or abs(shell_slope) > 0.2

    # envelope of the Holder ratio over dyadic separation ratios
    rng = np.random.default_rng(seed + 17)
    ratios = 2.0 ** -np.arange(1, 9)
    env = np.zeros(ratios.size)
    m = max(256, budget // 8)
    for b, rho in enumerate(ratios):
        base, radii = _shell_sample(g, metric, m, rng)
        step_dirs = g.unit_sphere_points(rng, base.shape[0], metric)
        steps = step_dirs * (rho * radii)[:, None] ** g.degrees
        moved = _npy.batch_multiply(g.tables, base, steps)
        d0 = _npy.batch_norm(g.tables, base, code)
        d1 = _npy.batch_norm(g.tables, moved, code)
        diff = np.abs(kernel.eval_rows(base, d0) - kernel.eval_rows(moved, d1))
        adiff = np.abs(kernel.eval_rows(-base, d0) - kernel.eval_rows(-moved, d1))
        env[b] = float((np.maximum(diff, adiff) * d0).max())
    good = env > 0
    if good.sum() >= 4:
        slope, icept = np.polyfit(np.log2(ratios[good]), np.log2(env[good]), 1)
        beta_hat, holder_hat = float(slope), float(2.0 ** icept)
    else:
        beta_hat, holder_hat = float("inf"), 0.0

    return CZEstimate(float(running), beta_hat, holder_hat, bool(diverged),
                      shell_slope, tuple(b_by_budget))
