"""Kernel values, algebra, dyadic localization, and constant estimation."""
import numpy as np
import pytest

from carnot_sio import groups
from carnot_sio import kernels as kn
from carnot_sio.kernels import (BumpProfile, BumpProfileError,
                                KernelDomainError, STANDARD_BUMP)

SEED = 417


@pytest.fixture(scope="module")
def h1():
    return groups.heisenberg(1)


@pytest.fixture(scope="module")
def engel():
    return groups.engel()


def sphere(g, count, seed=SEED, which="smooth"):
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.25, 4.0, (count, 1))
    return g.unit_sphere_points(rng, count, which) * r ** g.degrees


# -- bump profile ------------------------------------------------------------

def test_standard_profile_sandwich():
    r = np.linspace(0, 3, 2001)
    v = STANDARD_BUMP(r)
    assert np.all(v[r <= 0.5] == 1.0)
    assert np.all(v[r >= 2.0] == 0.0)
    assert np.all((v >= 0.0) & (v <= 1.0))
    mid = (r >= 0.5) & (r <= 2.0)
    assert np.all(np.diff(v[mid]) <= 1e-12)


def test_profile_rejects_kinks():
    with pytest.raises(BumpProfileError):
        BumpProfile(lambda r: np.clip((2.0 - r) / 1.5, 0.0, 1.0), name="kink")
    with pytest.raises(BumpProfileError):
        BumpProfile(lambda r: np.where(r < 1.0, 1.0, 0.0), name="step")
    with pytest.raises(BumpProfileError):
        BumpProfile(lambda r: np.full_like(r, 0.9), name="flat")


def test_custom_smooth_profile_accepted():
    # a wider smooth transition still meeting the sandwich
    def fn(r):
        up = np.clip((2.0 - r) / 1.2, 0, None)
        dn = np.clip((r - 0.5) / 1.2, 0, None)
        with np.errstate(divide="ignore"):
            gu = np.where(up > 0, np.exp(-1.0 / np.maximum(up, 1e-300)), 0.0)
            gd = np.where(dn > 0, np.exp(-1.0 / np.maximum(dn, 1e-300)), 0.0)
        return gu / (gu + gd)

    prof = BumpProfile(fn, name="wide")
    assert not prof.is_standard


# -- built-in kernel values --------------------------------------------------

def test_vertical_riesz_values(h1):
    v2 = kn.vertical_riesz(h1, 2)
    assert v2.evaluate([1.0, 0.0, 0.0]) == 0.0
    assert v2.evaluate([0.3, -1.2, 0.0]) == 0.0
    # purely vertical point: the splitting leaves the point untouched, so
    # the value is 1/d with d = smooth gauge of (0,0,1), which is 1
    assert v2.evaluate([0.0, 0.0, 1.0]) == pytest.approx(1.0, abs=1e-14)
    P = sphere(h1, 500)
    assert np.all(v2.evaluate(P) >= 0.0)


def test_vertical_riesz_homogeneity(h1, engel):
    for g in (h1, engel):
        vk = kn.vertical_riesz(g, 2 * g.step)
        P = sphere(g, 300)
        for r in (0.5, 2.0, 7.3):
            lhs = vk.evaluate(g.dilate(r, P))
            np.testing.assert_allclose(lhs, vk.evaluate(P) / r, rtol=1e-10)


def test_quasi_riesz_components(h1, engel):
    for g in (h1, engel):
        comps = kn.quasi_riesz(g)
        assert len(comps) == g.dim
        P = sphere(g, 300)
        d = g.norm(P, "smooth")
        for i, k in enumerate(comps):
            np.testing.assert_allclose(
                k.evaluate(P), P[:, i] / d ** (g.degrees[i] + 1), rtol=1e-12)
            # antisymmetry through the group inverse
            np.testing.assert_allclose(k.evaluate(-P), -k.evaluate(P),
                                       rtol=1e-12)
            for r in (0.5, 3.0):
                np.testing.assert_allclose(k.evaluate(g.dilate(r, P)),
                                           k.evaluate(P) / r, rtol=1e-10)


def test_quasi_riesz_on_horizontal_line(h1):
    k1 = kn.quasi_riesz_component(h1, 1)
    v = np.array([0.6, -0.8])
    for s in (0.5, 2.0, -3.0):
        p = np.array([s * v[0], s * v[1], 0.0])
        assert k1.evaluate(p) == pytest.approx(v[0] / s, rel=1e-12)


def test_growth_bound_on_samples(h1, engel):
    for g in (h1, engel):
        for k in (kn.vertical_riesz(g, 2), kn.inv_dist(g),
                  kn.quasi_riesz_component(g, 1)):
            P = sphere(g, 2000, seed=SEED + 1)
            d = g.norm(P, "smooth")
            assert np.all(np.abs(k.evaluate(P)) <= k.growth_constant / d * (1 + 1e-9))


def test_origin_raises(h1):
    v2 = kn.vertical_riesz(h1, 2)
    with pytest.raises(KernelDomainError):
        v2.evaluate([0.0, 0.0, 0.0])
    with pytest.raises(KernelDomainError):
        v2.evaluate(np.zeros((3, 3)))


def test_constructor_validation(h1):
    with pytest.raises(ValueError):
        kn.vertical_riesz(h1, 0)
    with pytest.raises(ValueError):
        kn.quasi_riesz_component(h1, 0)
    with pytest.raises(ValueError):
        kn.quasi_riesz_component(h1, 4)
    with pytest.raises(ValueError):
        kn.from_spec(h1, "riesz:2")


def test_from_spec_round_trip(h1):
    P = sphere(h1, 50)
    for spec in ("vriesz:2", "quasi:1", "quasi:3", "inv-dist", "inv-dist-sq",
                 "zero"):
        k = kn.from_spec(h1, spec)
        vals = k.evaluate(P)
        assert np.all(np.isfinite(vals))
        if spec == "zero":
            assert np.all(vals == 0.0)


# -- algebra -----------------------------------------------------------------

def test_linear_algebra_of_kernels(h1):
    v2 = kn.vertical_riesz(h1, 2)
    q2 = kn.quasi_riesz_component(h1, 2)
    P = sphere(h1, 200)
    np.testing.assert_allclose((v2 + q2).evaluate(P),
                               v2.evaluate(P) + q2.evaluate(P), rtol=1e-12)
    np.testing.assert_allclose((2.5 * v2).evaluate(P), 2.5 * v2.evaluate(P))
    np.testing.assert_allclose((v2 - q2).evaluate(P),
                               v2.evaluate(P) - q2.evaluate(P), rtol=1e-12)
    s = v2 + q2
    assert s.growth_constant == v2.growth_constant + q2.growth_constant
    with pytest.raises(ValueError):
        v2 + kn.vertical_riesz(h1, 2, metric="hom")
    with pytest.raises(ValueError):
        v2 + kn.vertical_riesz(groups.heisenberg(2), 2)


def test_adjoint(h1, engel):
    P3 = sphere(h1, 200)
    # antisymmetric kernel: adjoint is the negative
    q1 = kn.quasi_riesz_component(h1, 1)
    np.testing.assert_allclose(q1.adjoint().evaluate(P3), -q1.evaluate(P3),
                               rtol=1e-12)
    # step-2 groups: the vertical kernel is symmetric
    for g in (h1, groups.heisenberg(2)):
        vk = kn.vertical_riesz(g, 2)
        P = sphere(g, 200)
        np.testing.assert_allclose(vk.adjoint().evaluate(P), vk.evaluate(P),
                                   rtol=1e-12)
    # double adjoint is the identity, including on sums and windows
    k = kn.vertical_riesz(engel, 3) + 0.5 * kn.quasi_riesz_component(engel, 2)
    k = kn.lp_piece(k, 1)
    Pe = sphere(engel, 200)
    np.testing.assert_allclose(k.adjoint().adjoint().evaluate(Pe),
                               k.evaluate(Pe), rtol=1e-12)
    assert k.adjoint().homogeneous == k.homogeneous


# -- dyadic pieces -----------------------------------------------------------

def test_lp_piece_support(h1):
    inv = kn.inv_dist(h1)
    rng = np.random.default_rng(SEED)
    for j in (-2, 0, 3):
        piece = kn.lp_piece(inv, j)
        dirs = h1.unit_sphere_points(rng, 100, "smooth")
        # rejection samples hugging the annulus boundaries from outside
        for d in (2.0 ** -(j + 2) * 0.999, 2.0 ** -(j - 1) * 1.001):
            vals = piece.evaluate(h1.dilate(d, dirs))
            assert np.all(vals == 0.0)
        inside = piece.evaluate(h1.dilate(2.0 ** -j * 0.6, dirs))
        assert np.all(inside != 0.0)
        # size bound |K_(j)| <= C 2^j with C from the growth constant
        for d in np.geomspace(2.0 ** -(j + 2), 2.0 ** -(j - 1), 9):
            vals = piece.evaluate(h1.dilate(d, dirs))
            assert np.all(np.abs(vals) <= inv.growth_constant * 2.0 ** (j + 2))


def test_lp_reconstruction(h1):
    k = kn.vertical_riesz(h1, 2) + kn.quasi_riesz_component(h1, 1)
    rng = np.random.default_rng(SEED + 2)
    P = sphere(h1, 64)
    want = k.evaluate(P)
    M = 12
    total = np.zeros(P.shape[0])
    for j in range(-M, M + 1):
        total += kn.lp_piece(k, j).evaluate(P)
    np.testing.assert_allclose(total, want, atol=1e-10)
    # the telescoped band equals the sum of its pieces
    band = kn.lp_band(k, -M, M).evaluate(P)
    np.testing.assert_allclose(band, total, atol=1e-12)


def test_lp_scale_covering(h1):
    # at any gauge at most 3 consecutive pieces are active
    inv = kn.inv_dist(h1)
    x = np.zeros(3)
    for ld in np.linspace(-6, 6, 97):
        x[0] = 2.0 ** ld
        active = [j for j in range(-12, 13)
                  if kn.lp_piece(inv, j).evaluate(x) != 0.0]
        assert 1 <= len(active) <= 3
        assert active == list(range(active[0], active[0] + len(active)))


def test_lp_piece_custom_profile_matches_formula(h1):
    inv = kn.inv_dist(h1)
    prof = BumpProfile(STANDARD_BUMP.fn, name="copy")  # not flagged standard
    assert not prof.is_standard
    P = sphere(h1, 300)
    fast = kn.lp_piece(inv, 2).evaluate(P)
    slow = kn.lp_piece(inv, 2, prof).evaluate(P)
    np.testing.assert_allclose(slow, fast, rtol=1e-13)


# -- constant estimation -----------------------------------------------------

def test_estimate_requires_budget(h1):
    with pytest.raises(ValueError):
        kn.estimate_cz_constants(kn.inv_dist(h1), budget=999)


def test_inv_dist_is_the_equality_case(h1):
    est = kn.estimate_cz_constants(kn.inv_dist(h1), budget=1024)
    assert est.b_hat == pytest.approx(1.0, rel=0.02)
    assert not est.diverged


def test_vertical_riesz_constants(h1):
    est = kn.estimate_cz_constants(kn.vertical_riesz(h1, 2), budget=1024)
    assert np.isfinite(est.b_hat)
    assert not est.diverged
    assert est.beta_hat >= 0.9
    assert est.holder_hat > 0


def test_inv_dist_sq_flags_divergence(h1):
    est = kn.estimate_cz_constants(kn.inv_dist_sq(h1), budget=1024)
    assert est.diverged
    assert est.shell_slope < -0.5
