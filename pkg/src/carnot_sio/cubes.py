"""Multiscale dyadic-style cubes on a discretized 1-regular point set.

The construction is the classical greedy one: a maximal 2^-j/4-separated
net per scale (taken in point-index order for determinism), points
assigned to the nearest finest-scale center, and each finer center
assigned to the nearest coarser center.  Coarse cube membership is the
union over descendant chains, which forces exact nesting and per-scale
partitions; the triangle inequality of the certified gauge then gives
diam(Q) <= 2^-j.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .backend import ops
from .curves import regularity_constant

_MET = {"smooth": 0, "hom": 1}


@dataclass(frozen=True)
class ChristCube:
    cube_id: int
    j: int
    center: int              # point index of the cube center
    members: np.ndarray      # sorted point indices
    parent: int | None       # cube_id of the parent, None at the top scale
    children: tuple          # cube_ids one scale finer


@dataclass(frozen=True)
class ChristTree:
    """Cubes per scale j in [j_min, j_max]; scale-j cubes have diam <= 2^-j.

    c_o is the measured generation constant: the largest c such that the
    open ball B(z_Q, c 2^-j) meets no other cube, minimized over cubes
    (inf when every scale has a single cube).
    """

    group: object
    points: np.ndarray
    weights: np.ndarray
    j_min: int
    j_max: int
    cubes: tuple
    c_o: float
    metric: str

    def scale(self, j):
        """Cubes at scale j, in construction order."""
        return [q for q in self.cubes if q.j == j]

    def cube_of(self, j, point_index):
        for q in self.scale(j):
            if point_index in q.members:
                return q
        raise KeyError(f"point {point_index} missing at scale {j}")

    def to_json_dict(self):
        return {
            "j_min": self.j_min, "j_max": self.j_max, "metric": self.metric,
            "c_o": self.c_o, "n_points": int(self.points.shape[0]),
            "cubes": [{"id": q.cube_id, "j": q.j, "center_index": int(q.center),
                       "member_count": int(q.members.size),
                       "parent_id": q.parent}
                      for q in self.cubes],
        }


def build_christ(group, points, weights, j_min, j_max, which="smooth",
                 max_regularity=16.0):
    """Build the cube hierarchy for scales j_min..j_max (coarse to fine).

    The point set must be 1-regular (measured constant <= max_regularity).
    Scales whose cubes would drop below 4 members are truncated with a
    warning; if even j_min is that fine, the build fails.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    j_min, j_max = int(j_min), int(j_max)
    if j_max < j_min:
        raise ValueError("empty scale range")
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    N = points.shape[0]
    gt = group.tables
    code = _MET[which]

    c_r = regularity_constant(group, points, weights, which=which)
    if c_r > max_regularity:
        raise ValueError(
            f"point set is not 1-regular enough for cubes: measured "
            f"constant {c_r:.3g} exceeds {max_regularity:.3g}")
    idx = np.arange(0, N - 1, max(1, N // 512))
    gaps = np.array([ops.dist_one_to_many(gt, points[i], points[i + 1:i + 2],
                                          code)[0] for i in idx])
    mesh = float(np.median(gaps))

    # cap the finest scale so a typical net cell (radius 2^-j/4) holds
    # at least 4 points; below that, boundary fractions are meaningless
    j_cap = int(np.floor(-np.log2(16.0 * mesh)))
    if j_cap < j_min:
        raise ValueError("no scale supports cubes with at least 4 points")
    if j_max > j_cap:
        warnings.warn(
            f"finest scale truncated to {j_cap}: cells at 2^-{j_max} would "
            f"hold fewer than 4 points on this mesh", stacklevel=2)
        j_max = j_cap

    all_idx = np.arange(N, dtype=np.int64)
    nets = {}
    for j in range(j_min, j_max + 1):
        nets[j] = ops.greedy_net(gt, points, all_idx, 2.0 ** -j / 4.0, code)

    def merge_small(base, net, floor):
        # fold starved cells (one-sided cells at curve endpoints, chain
        # leftovers at coarse scales) into the closest sibling, smallest
        # first, so every cube keeps mass comparable to its scale
        out = base.copy()
        while True:
            pos = np.unique(out)
            if pos.size < 2:
                break
            counts = np.array([np.count_nonzero(out == p) for p in pos])
            if counts.min() >= floor:
                break
            p = pos[int(np.argmin(counts))]
            others = pos[pos != p]
            cd = ops.dist_one_to_many(gt, points[net[p]], points[net[others]],
                                      code)
            out[out == p] = others[int(np.argmin(cd))]
        return out

    # points go to the nearest finest-scale center; each finer center
    # chains to its nearest coarser center, so coarse membership is the
    # union over chains and nesting is forced
    owner = {}
    parent_of = {}
    for j in range(j_max, j_min - 1, -1):
        if j == j_max:
            base = ops.nearest_center(gt, points, all_idx, nets[j], code)
        else:
            parent_of[j + 1] = ops.nearest_center(gt, points, nets[j + 1],
                                                  nets[j], code)
            base = parent_of[j + 1][owner[j + 1]]
        floor = max(4, int(2.0 ** -j / (16.0 * mesh)))
        owner[j] = merge_small(base, nets[j], floor)

    def medoid(members):
        # member whose largest distance to a member subsample is smallest;
        # keeps the reported center deep inside the cube
        cand = members[:: max(1, members.size // 24)]
        targ = points[members[:: max(1, members.size // 48)]]
        best, best_r = int(cand[0]), np.inf
        for c in cand:
            r = ops.dist_one_to_many(gt, points[c], targ, code).max()
            if r < best_r:
                best, best_r = int(c), r
        return best

    cubes = []
    id_of = {}           # (j, net position) -> cube_id
    children = {}
    for j in range(j_min, j_max + 1):
        for pos in np.unique(owner[j]):
            members = all_idx[owner[j] == pos]
            cid = len(cubes)
            id_of[(j, int(pos))] = cid
            parent = None
            if j > j_min:
                parent = id_of[(j - 1, int(owner[j - 1][members[0]]))]
                children.setdefault(parent, []).append(cid)
            cubes.append(ChristCube(cid, j, medoid(members), members,
                                    parent, ()))
    cubes = [ChristCube(q.cube_id, q.j, q.center, q.members, q.parent,
                        tuple(children.get(q.cube_id, ())))
             for q in cubes]

    c_o = np.inf
    for q in cubes:
        outside = np.setdiff1d(all_idx, q.members, assume_unique=True)
        if outside.size == 0:
            continue
        d = ops.cross_min_dist(gt, points, np.array([q.center]), outside,
                               code)[0]
        c_o = min(c_o, float(d) / 2.0 ** -q.j)

    return ChristTree(group, points, weights, j_min, j_max, tuple(cubes),
                      float(c_o), which)


@dataclass(frozen=True)
class AxiomReport:
    partition_violations: int
    nesting_violations: int
    diameter_violations: int
    containment_violations: int

    @property
    def total(self):
        return (self.partition_violations + self.nesting_violations
                + self.diameter_violations + self.containment_violations)

    @property
    def ok(self):
        return self.total == 0


def check_axioms(tree):
    """Exhaustively verify partition, nesting, diameter, and containment."""
    gt = tree.group.tables
    code = _MET[tree.metric]
    N = tree.points.shape[0]
    part = nest = diam = contain = 0
    for j in range(tree.j_min, tree.j_max + 1):
        seen = np.concatenate([q.members for q in tree.scale(j)])
        if seen.size != N or np.unique(seen).size != N:
            part += 1
    by_id = {q.cube_id: q for q in tree.cubes}
    for q in tree.cubes:
        if q.parent is not None:
            if not np.all(np.isin(q.members, by_id[q.parent].members)):
                nest += 1
        pts = tree.points[q.members]
        if pts.shape[0] > 1:
            if ops.max_pairwise_dist(gt, pts.copy(), code) > 2.0 ** -q.j:
                diam += 1
        if np.isfinite(tree.c_o):
            d = ops.dist_one_to_many(gt, tree.points[q.center], tree.points,
                                     code)
            ball = np.flatnonzero(d < tree.c_o * 2.0 ** -q.j)
            if not np.all(np.isin(ball, q.members)):
                contain += 1
    return AxiomReport(part, nest, diam, contain)


@dataclass(frozen=True)
class BoundaryStats:
    """Worst boundary-mass fractions mu(near the complement)/mu(Q) per rho."""

    rho: np.ndarray
    max_ratio: np.ndarray          # max over all cubes and scales, per rho
    per_scale: dict                # j -> per-rho max over that scale's cubes
    c_boundary: float              # smallest C with ratio <= C rho^(1/C)


def small_boundary_stats(tree, rho_grid=None):
    """Boundary-mass table over the rho grid and the fitted envelope constant.

    For each cube the distance of every member to the complement is
    computed once; cubes covering the whole point set carry no boundary
    and are skipped.
    """
    rho = np.array([2.0 ** -k for k in range(8, -1, -1)]) \
        if rho_grid is None else np.sort(np.asarray(rho_grid, dtype=float))
    if np.any(rho <= 0) or np.any(rho > 1):
        raise ValueError("rho values must lie in (0, 1]")
    gt = tree.group.tables
    code = _MET[tree.metric]
    all_idx = np.arange(tree.points.shape[0], dtype=np.int64)
    per_scale = {}
    for j in range(tree.j_min, tree.j_max + 1):
        worst = np.zeros(rho.size)
        for q in tree.scale(j):
            outside = np.setdiff1d(all_idx, q.members, assume_unique=True)
            if outside.size == 0:
                continue
            dmin = ops.cross_min_dist(gt, tree.points, q.members, outside,
                                      code)
            mass = tree.weights[q.members]
            total = mass.sum()
            for r, rv in enumerate(rho):
                frac = mass[dmin <= rv * 2.0 ** -j].sum() / total
                worst[r] = max(worst[r], frac)
        per_scale[j] = worst
    max_ratio = np.max(np.stack(list(per_scale.values())), axis=0)

    pairs = [(rv, mr) for rv, mr in zip(rho, max_ratio) if mr > 0]
    if not pairs:
        c_fit = 0.0
    else:
        def holds(C):
            return all(mr <= C * rv ** (1.0 / C) for rv, mr in pairs)
        lo, hi = 1e-2, 1e4
        if not holds(hi):
            c_fit = np.inf
        else:
            for _ in range(80):
                mid = np.sqrt(lo * hi)
                if holds(mid):
                    hi = mid
                else:
                    lo = mid
            c_fit = hi
    return BoundaryStats(rho, max_ratio, per_scale, float(c_fit))


def maximal_function(group, points, weights, fvals, index=None,
                     which="smooth"):
    """Hardy-Littlewood maximal averages of |f| over closed balls.

    With index=None returns the value at every point; with an index,
    just that point's value.  The sup over radii is exact because only
    the finitely many hit distances matter.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    fvals = np.asarray(fvals, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("weights must be positive")
    gt = group.tables
    code = _MET[which]
    if index is None:
        return ops.maximal_function_all(gt, points, weights, fvals, code)
    d = ops.dist_one_to_many(gt, points[int(index)], points, code)
    order = np.argsort(d, kind="stable")
    ds = d[order]
    cw = np.cumsum(weights[order])
    cf = np.cumsum((np.abs(fvals) * weights)[order])
    last = np.ones(ds.size, dtype=bool)
    last[:-1] = ds[1:] > ds[:-1]
    return float(np.max(cf[last] / cw[last]))
