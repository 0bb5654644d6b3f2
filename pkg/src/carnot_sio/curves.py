"""Horizontal curves: lifting first-layer velocities, quadrature, tangents.

A velocity t -> h(t) in the first layer determines a group trajectory by
integrating gamma' = (h, correction terms); the correction is the
directional derivative of the product polynomial, so the lifted curve is
horizontal by construction.  Discrete curves carry trapezoid quadrature
weights |h(t_k)| dt, which makes integration along the curve agree with
arc-length measure.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .backend import ops
from .groups import CarnotGroup


class NumericsError(RuntimeError):
    """A numeric computation produced non-finite values."""


@dataclass(frozen=True)
class HorizontalVelocity:
    """A first-layer velocity field with declared Holder regularity.

    fn maps a parameter array (m,) to velocities (m, n); it must be
    vectorized.  alpha and c_alpha declare |h(x)-h(y)| <= c_alpha
    |x-y|^alpha, which lift() verifies on its grid along with a positive
    speed floor.
    """

    fn: object
    alpha: float
    c_alpha: float
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.c_alpha < 0.0:
            raise ValueError("c_alpha must be nonnegative")

    def __call__(self, t):
        return np.asarray(self.fn(np.asarray(t, dtype=float)), dtype=float)


@dataclass(frozen=True)
class HorizontalLine:
    """L(t) = base * ((t - t0) v, 0): the horizontal line through base."""

    group: CarnotGroup
    base: np.ndarray
    direction: np.ndarray
    t0: float = 0.0

    def at(self, t):
        t = np.asarray(t, dtype=float)
        single = t.ndim == 0
        s = np.atleast_1d(t) - self.t0
        lift_vec = np.zeros((s.size, self.group.dim))
        lift_vec[:, :self.group.n] = s[:, None] * self.direction
        out = self.group.multiply(self.base, lift_vec)
        return out[0] if single else out


@dataclass(frozen=True)
class DiscreteCurve:
    """A lifted horizontal curve sampled on a uniform parameter grid.

    weights are composite-trapezoid arc-length weights |h(t_k)| dt (halved
    at the ends), so summing eta(points) * weights integrates eta against
    the curve's length measure.  c_r is the measured 1-regularity constant
    (None when the grid is too small to estimate it).
    """

    group: CarnotGroup
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    alpha: float
    c_alpha: float
    name: str = "curve"
    c_r: float | None = None

    @property
    def a(self):
        return float(self.t[0])

    @property
    def b(self):
        return float(self.t[-1])

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def length(self):
        return float(self.weights.sum())

    def grid_index(self, t0):
        """Index of the grid point equal to t0, or a usage error."""
        if not self.a <= t0 <= self.b:
            raise ValueError(f"t0={t0} outside [{self.a}, {self.b}]")
        k = int(round((t0 - self.t[0]) / self.dt))
        k = min(max(k, 0), self.t.size - 1)
        if abs(self.t[k] - t0) > 1e-9 * max(1.0, abs(self.b - self.a)):
            raise ValueError(f"t0={t0} is not a grid point")
        return k


def _check_velocity(hv, tgrid, H):
    speeds = np.linalg.norm(H, axis=1)
    floor = float(speeds.min())
    if not np.all(np.isfinite(H)):
        raise NumericsError(f"velocity {hv.name!r} is non-finite on the grid")
    if floor <= 0.0:
        raise ValueError(f"velocity {hv.name!r} has zero speed on the grid")
    # Holder modulus on adjacent and strided grid pairs
    for stride in (1, 7, 61):
        if stride >= tgrid.size:
            break
        gap = tgrid[stride:] - tgrid[:-stride]
        diff = np.linalg.norm(H[stride:] - H[:-stride], axis=1)
        bound = hv.c_alpha * gap ** hv.alpha * (1.0 + 1e-9) + 1e-12
        if np.any(diff > bound):
            worst = float((diff - bound).max())
            raise ValueError(
                f"velocity {hv.name!r} violates its declared Holder bound "
                f"(excess {worst:.3e})")
    return floor


def lift(group, hv, M, a=0.0, b=1.0, base=None):
    """Integrate the velocity into a horizontal curve with RK4 on M steps.

    The non-horizontal coordinates satisfy gamma_i' = qbar_i(gamma, h); the
    velocities are evaluated at the grid and at midpoints so every RK4
    stage uses exact velocity values.
    """
    M = int(M)
    if M < 16:
        raise ValueError("grid size M must be at least 16")
    if not b > a:
        raise ValueError("empty parameter interval")
    base = group.identity() if base is None else np.asarray(base, dtype=float)
    if base.shape != (group.dim,):
        raise ValueError(f"base point must have {group.dim} coordinates")
    tgrid = a + (b - a) * np.arange(M + 1) / M
    dt = (b - a) / M
    H0 = hv(tgrid)
    if H0.shape != (M + 1, group.n):
        raise ValueError(
            f"velocity must map (m,) to (m, {group.n}), got {H0.shape}")
    Hm = hv(tgrid[:-1] + 0.5 * dt)
    _check_velocity(hv, tgrid, H0)
    pts = ops.rk4_lift(group.tables, base, H0, Hm, dt)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        raise NumericsError(f"lift diverged at t={tgrid[k]:.6g}")
    w = np.linalg.norm(H0, axis=1) * dt
    w[0] *= 0.5
    w[-1] *= 0.5
    c_r = None
    if M + 1 >= 64:
        c_r = regularity_constant(group, pts, w)
    return DiscreteCurve(group, tgrid, pts, H0, w, hv.alpha, hv.c_alpha,
                         name=hv.name, c_r=c_r)


def integrate(curve, eta):
    """Trapezoid integral of eta along the curve's length measure."""
    vals = eta(curve.points)
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (curve.points.shape[0],):
        vals = np.array([float(eta(p)) for p in curve.points])
    if not np.all(np.isfinite(vals)):
        k = int(np.argmax(~np.isfinite(vals)))
        raise NumericsError(f"integrand non-finite at t={curve.t[k]:.6g}")
    return float(vals @ curve.weights)


def tangent_line(curve, t0):
    """The horizontal tangent line of the curve at grid point t0."""
    k = curve.grid_index(t0)
    return HorizontalLine(curve.group, curve.points[k].copy(),
                          curve.velocities[k].copy(), float(curve.t[k]))


@dataclass(frozen=True)
class FlatnessProfile:
    """Per-scale sup distances to the tangent line and their log-log slope.

    slope is +inf when the curve coincides with its tangent line at every
    requested scale (the straight-line case).
    """

    t0: float
    scales: np.ndarray
    sups: np.ndarray
    slope: float

    def pairs(self):
        return list(zip(self.scales.tolist(), self.sups.tolist()))


_FLAT_FLOOR = 1e-13


def flatness_profile(curve, t0, scales, which="smooth"):
    """sup over grid points |t - t0| <= delta of d(gamma(t), L(t)) per scale.

    Scales whose window leaves [a, b], or finer than 8 grid steps, are
    dropped; fewer than 4 surviving scales is an error.  The fitted slope
    uses scales whose sup exceeds the floating-point floor.
    """
    k0 = curve.grid_index(t0)
    line = tangent_line(curve, t0)
    scales = np.sort(np.asarray(scales, dtype=float))
    tiny = 1e-12 * (curve.b - curve.a)
    good = [(d, True) for d in scales
            if curve.dt <= d / 8.0 + tiny
            and t0 - d >= curve.a - tiny and t0 + d <= curve.b + tiny]
    if len(good) < 4:
        raise ValueError(
            f"only {len(good)} usable scales (need 4): grid too coarse or "
            f"window leaves the parameter interval")
    kept = np.array([d for d, _ in good])
    sups = np.zeros(kept.size)
    for i, delta in enumerate(kept):
        r = int(np.floor(delta / curve.dt + tiny))
        lo, hi = max(0, k0 - r), min(curve.t.size, k0 + r + 1)
        seg = curve.points[lo:hi]
        lpts = line.at(curve.t[lo:hi])
        sups[i] = float(curve.group.dist(seg, lpts, which).max())
    fit = sups > _FLAT_FLOOR
    if fit.sum() >= 2:
        slope = float(np.polyfit(np.log2(kept[fit]), np.log2(sups[fit]), 1)[0])
    else:
        slope = float("inf")
    return FlatnessProfile(float(curve.t[k0]), kept, sups, slope)


def regularity_constant(group, points, weights, n_centers=64, which="smooth"):
    """Two-sided 1-regularity constant of a weighted point set.

    Over evenly spaced centers and dyadic radii between 4x the median
    neighbor gap and the diameter, returns the largest of mass/radius and
    radius/mass for the closed metric balls.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    N = points.shape[0]
    if N < 64:
        raise ValueError("need at least 64 points to estimate regularity")
    gt = group.tables
    code = 0 if which == "smooth" else 1
    # median consecutive gap from a stride sample, cheap and adequate
    idx = np.arange(0, N - 1, max(1, N // 512))
    gaps = np.array([ops.dist_one_to_many(gt, points[i], points[i + 1:i + 2],
                                          code)[0] for i in idx])
    mesh = float(np.median(gaps))
    diam = ops.max_pairwise_dist(gt, points[:: max(1, N // 256)].copy(), code)
    if not mesh > 0.0:
        raise ValueError("duplicate consecutive points")
    k_max = max(1, int(np.floor(np.log2(diam / (4.0 * mesh)))) + 1)
    radii = diam * 2.0 ** -np.arange(k_max, dtype=float)
    centers = np.unique(np.linspace(0, N - 1, n_centers).round().astype(int))
    worst = 1.0
    for c in centers:
        dists = ops.dist_one_to_many(gt, points[c], points, code)
        order = np.argsort(dists, kind="stable")
        d = dists[order]
        cw = np.cumsum(weights[order])
        pos = np.searchsorted(d, radii, side="right") - 1
        mass = cw[np.clip(pos, 0, N - 1)]
        ratio = np.maximum(mass / radii, radii / np.maximum(mass, 1e-300))
        worst = max(worst, float(ratio.max()))
    return worst


def estimate_regularity(curve, n_centers=64, which="smooth"):
    """The curve's measured 1-regularity constant."""
    return regularity_constant(curve.group, curve.points, curve.weights,
                               n_centers, which)


# -- named velocity generators -----------------------------------------------

def velocity_from_spec(group, spec):
    """Resolve a velocity specification string.

    Forms: "hline" (constant unit first-coordinate velocity),
    "circle-lift" (h = (cos t, sin t, 0, ...)), "holder:<alpha>:<c>"
    (h = (1, c |t|^alpha, 0, ...)), "perturbed-line:<amp>:<freq>"
    (h = (1, amp sin(2 pi freq t), 0, ...)).
    """
    n = group.n
    spec = spec.strip()

    def pad(cols):
        def fn(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            out = np.zeros((t.size, n))
            for j, col in enumerate(cols):
                out[:, j] = col(t)
            return out
        return fn

    if spec == "hline":
        return HorizontalVelocity(pad([lambda t: np.ones_like(t)]),
                                  alpha=1.0, c_alpha=0.0, name="hline")
    if spec == "circle-lift":
        if n < 2:
            raise ValueError("circle-lift needs a first layer of dim >= 2")
        return HorizontalVelocity(pad([np.cos, np.sin]), alpha=1.0,
                                  c_alpha=1.0, name="circle-lift")
    head, _, rest = spec.partition(":")
    if head == "holder" and rest:
        s_alpha, _, s_c = rest.partition(":")
        alpha, c = float(s_alpha), float(s_c or 1.0)
        if n < 2:
            raise ValueError("holder curve needs a first layer of dim >= 2")
        fn = pad([lambda t: np.ones_like(t),
                  lambda t: c * np.abs(t) ** alpha])
        return HorizontalVelocity(fn, alpha=alpha, c_alpha=c,
                                  name=f"holder:{alpha:g}:{c:g}")
    if head == "perturbed-line" and rest:
        s_amp, _, s_freq = rest.partition(":")
        amp, freq = float(s_amp), float(s_freq or 1.0)
        if n < 2:
            raise ValueError("perturbed line needs a first layer of dim >= 2")
        fn = pad([lambda t: np.ones_like(t),
                  lambda t: amp * np.sin(2.0 * np.pi * freq * t)])
        return HorizontalVelocity(fn, alpha=1.0,
                                  c_alpha=abs(amp) * 2.0 * np.pi * freq,
                                  name=f"perturbed-line:{amp:g}:{freq:g}")
    raise ValueError(f"unknown curve spec {spec!r}")


def curve_from_spec(group, spec, M, a=0.0, b=1.0, base=None):
    return lift(group, velocity_from_spec(group, spec), M, a, b, base)


# -- CSV round trip ----------------------------------------------------------

def write_csv(curve, path):
    """Columns t, x1..xN, w with round-trip float formatting."""
    dim = curve.group.dim
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t"] + [f"x{i + 1}" for i in range(dim)] + ["w"])
        for k in range(curve.t.size):
            row = [repr(float(curve.t[k]))]
            row += [repr(float(v)) for v in curve.points[k]]
            row.append(repr(float(curve.weights[k])))
            out.writerow(row)


def read_csv(group, path, alpha=1.0, c_alpha=0.0, name="from-csv"):
    """Load a curve written by write_csv.

    Velocities are not stored in the file; they are recovered from central
    differences of the first-layer coordinates (second-order accurate), so
    tangent data is approximate for reloaded curves.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, rows = rows[0], rows[1:]
    want = ["t"] + [f"x{i + 1}" for i in range(group.dim)] + ["w"]
    if header != want:
        raise ValueError(f"unexpected columns {header!r}")
    data = np.array([[float(v) for v in row] for row in rows])
    t, pts, w = data[:, 0], data[:, 1:-1], data[:, -1]
    vel = np.gradient(pts[:, :group.n], t, axis=0)
    return DiscreteCurve(group, t, pts, vel, w, alpha, c_alpha, name=name)
