import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats as sps

from conetest import teststats as ts
from conetest.cones import Algorithm, Cone
from conetest.errors import DomainError
from conetest.matkit import PartitionIndex, SampleStats, SymPD, all_subsets

from conftest import random_spd

CONES = ("orthant", "halfspace")


def _stats(rng, p, n=None, scale=1.0):
    n = n or p + 6
    return SampleStats(n, scale * rng.standard_normal(p), SymPD(random_spd(rng, p)))


@st.composite
def sample_stats(draw, max_p=5):
    p = draw(st.integers(1, max_p))
    n = draw(st.integers(p + 2, p + 30))
    a = draw(hnp.arrays(float, (p, p + 2), elements=st.floats(-2, 2)))
    x = draw(hnp.arrays(float, p, elements=st.floats(-3, 3)))
    return SampleStats(n, x, SymPD(a @ a.T + 0.2 * np.eye(p)))


def test_t2_scalar():
    s = SampleStats(4, np.array([2.0]), SymPD(np.array([[4.0]])))
    assert ts.hotelling_t2(s).value == pytest.approx(4.0)


def test_zero_mean_gives_zero():
    s = SampleStats(8, np.zeros(3), SymPD(np.eye(3)))
    assert ts.hotelling_t2(s).value == 0.0
    for c in CONES:
        assert ts.uit(s, Cone(c, 3)).value == 0.0
        assert ts.lrt(s, Cone(c, 3)).value == 0.0
    assert np.all(ts.t_statistics(s) == 0.0)


def test_identity_examples():
    n = 10
    s = SampleStats(n, np.array([1.0, 2.0]), SymPD(np.eye(2)))
    u = ts.uit(s, Cone.orthant(2))
    # scatter scaling: U = n x' V^{-1} x = n ||x||^2 / (n - 1)
    assert u.value == pytest.approx(n * 5 / (n - 1))
    assert u.face == PartitionIndex.full(2)
    assert ts.lrt(s, Cone.orthant(2)).value == pytest.approx(u.value)
    neg = SampleStats(n, np.array([-1.0, -2.0]), SymPD(np.eye(2)))
    r = ts.uit(neg, Cone.orthant(2))
    assert r.value == 0.0 and r.face.size == 0


def test_fuit_scalar_example():
    s = SampleStats(4, np.array([1.0, -1.0]), SymPD(np.diag([4.0, 4.0])))
    r = ts.fuit(s, Cone.orthant(2))
    assert np.allclose(r.components["t"], [1.0, -1.0])
    assert r.value == 1.0


def test_fuit_matches_one_sample_t(rng):
    x = rng.standard_normal((14, 3)) + 0.3
    s = SampleStats.from_data(x)
    ref = sps.ttest_1samp(x, 0.0).statistic
    assert np.allclose(ts.t_statistics(s), ref, rtol=1e-12)


def test_fuit_halfspace_vector():
    s = SampleStats(6, np.array([-2.0, 1.0, -0.5]), SymPD(np.eye(3)))
    r = ts.fuit(s, Cone.halfspace(3))
    t = np.sqrt(6) * np.array([-2.0, 1.0, -0.5])
    assert np.allclose(r.components["tested"], [2 * np.sqrt(6), np.sqrt(6), t[2]])
    with pytest.raises(DomainError):
        ts.fuit(s, Cone.global_(3))


@given(sample_stats())
def test_face_formulas_equal_projection_forms(s):
    for c in CONES:
        cone = Cone(c, s.p)
        u = ts.uit(s, cone).value
        l = ts.lrt(s, cone).value
        pu, pl, res = ts.projection_form(s, cone)
        assert u == pytest.approx(pu, rel=1e-9, abs=1e-12)
        assert l == pytest.approx(pl, rel=1e-9, abs=1e-12)


@given(sample_stats())
def test_ordering_and_dominance(s):
    t2 = ts.hotelling_t2(s).value
    for c in CONES:
        cone = Cone(c, s.p)
        u, l = ts.uit(s, cone).value, ts.lrt(s, cone).value
        assert l <= u * (1 + 1e-12) + 1e-15
        assert u <= t2 / (s.n - 1) * (1 + 1e-9) + 1e-15
    tol = 1e-9
    assert ts.uit(s, Cone.halfspace(s.p)).value >= ts.uit(s, Cone.orthant(s.p)).value * (1 - tol) - 1e-15
    assert ts.lrt(s, Cone.halfspace(s.p)).value >= ts.lrt(s, Cone.orthant(s.p)).value * (1 - tol) - 1e-15


@given(sample_stats())
def test_recorded_face_satisfies_indicator(s):
    from conetest.cones import face_indicator

    r = ts.uit(s, Cone.orthant(s.p))
    assert face_indicator(s, r.face)
    assert sum(face_indicator(s, a) for a in all_subsets(s.p)) == 1


def test_global_cone_is_scaled_t2(rng):
    s = _stats(rng, 3)
    t2 = ts.hotelling_t2(s).value
    assert ts.uit(s, Cone.global_(3)).value == pytest.approx(t2 / (s.n - 1), rel=1e-12)
    assert ts.lrt(s, Cone.global_(3)).value == pytest.approx(t2 / (s.n - 1), rel=1e-12)


def test_t2_affine_invariance(rng):
    for _ in range(20):
        s = _stats(rng, 4)
        b = rng.standard_normal((4, 4)) + 2 * np.eye(4)
        assert ts.hotelling_t2(s.transformed(b)).value == pytest.approx(ts.hotelling_t2(s).value, rel=1e-9)


def test_diagonal_scale_invariance(rng):
    for _ in range(30):
        s = _stats(rng, 3)
        d = np.diag(np.exp(rng.normal(size=3)))
        for c in CONES:
            cone = Cone(c, 3)
            assert ts.uit(s.transformed(d), cone).value == pytest.approx(ts.uit(s, cone).value, rel=1e-9, abs=1e-14)
            assert ts.lrt(s.transformed(d), cone).value == pytest.approx(ts.lrt(s, cone).value, rel=1e-9, abs=1e-14)
        assert np.allclose(ts.t_statistics(s.transformed(d)), ts.t_statistics(s), rtol=1e-12)


def test_polar_cone_gives_zero(rng):
    for _ in range(50):
        s = random_spd(rng, 3)
        x = s @ -np.abs(rng.standard_normal(3))
        st_ = SampleStats(9, x, SymPD(s))
        assert ts.uit(st_, Cone.orthant(3)).value == 0.0
        assert ts.lrt(st_, Cone.orthant(3)).value == 0.0
        assert ts.integrated_lr(st_, Cone.orthant(3)) == pytest.approx(1.0, abs=1e-12)


def test_halfspace_two_case_split(rng):
    s = random_spd(rng, 3)
    pos = SampleStats(9, np.array([0.3, -0.2, 0.5]), SymPD(s))
    assert ts.uit(pos, Cone.halfspace(3)).face == PartitionIndex.full(3)
    assert ts.uit(pos, Cone.halfspace(3)).value == pytest.approx(ts.hotelling_t2(pos).value / 8)
    zero = SampleStats(9, np.array([0.3, -0.2, 0.0]), SymPD(s))
    assert ts.uit(zero, Cone.halfspace(3)).face == PartitionIndex(3, (0, 1))


@pytest.mark.parametrize("p", [1, 2, 4])
def test_integrated_lr_identity(rng, p):
    for _ in range(40):
        s = _stats(rng, p, scale=0.5)
        for c in CONES:
            cone = Cone(c, p)
            val = ts.integrated_lr(s, cone)
            assert val == pytest.approx((1 + ts.lrt(s, cone).value) ** ((s.n - 1) / 2), rel=1e-8)


def test_integrated_lr_zero_mean():
    s = SampleStats(7, np.zeros(2), SymPD(np.eye(2)))
    assert ts.integrated_lr(s, Cone.orthant(2)) == 1.0


def test_directional_sup_is_uit(rng):
    for _ in range(30):
        s = _stats(rng, 3)
        cone = Cone.orthant(3)
        u = ts.uit(s, cone).value
        _, _, res = ts.projection_form(s, cone)
        if res.sq_norm > 0:
            assert ts.directional_uit(s, res.point) == pytest.approx(u, rel=1e-9)
        for th in np.abs(rng.standard_normal((50, 3))):
            assert ts.directional_uit(s, th) <= u * (1 + 1e-9) + 1e-15


def test_fuit_reject_orthant_threshold():
    n, p, alpha = 10, 2, 0.05
    crit = sps.t.isf(alpha / p, n - 1)
    s = lambda t1: SampleStats(n, np.array([t1 / math.sqrt(n), 0.0]), SymPD(np.eye(2)))
    assert ts.fuit_reject(ts.fuit(s(crit + 1e-9), Cone.orthant(2)), alpha, n)
    assert not ts.fuit_reject(ts.fuit(s(crit - 1e-6), Cone.orthant(2)), alpha, n)


def test_batch_statistics_match_scalar(rng):
    n, p = 11, 3
    means = rng.standard_normal((100, p))
    covs = np.stack([random_spd(rng, p) for _ in range(100)])
    out = ts.batch_statistics(n, means, covs, ("orthant", "halfspace", "global"))
    for i in range(100):
        s = SampleStats(n, means[i], SymPD(covs[i]))
        assert out["t2"][i] == pytest.approx(ts.hotelling_t2(s).value, rel=1e-10)
        assert out["fuit"][i] == pytest.approx(ts.fuit(s, Cone.orthant(p)).value, rel=1e-10)
        for c in CONES:
            assert out[f"uit_{c}"][i] == pytest.approx(ts.uit(s, Cone(c, p)).value, rel=1e-9, abs=1e-14)
            assert out[f"lrt_{c}"][i] == pytest.approx(ts.lrt(s, Cone(c, p)).value, rel=1e-9, abs=1e-14)
        assert out["uit_global"][i] == pytest.approx(ts.hotelling_t2(s).value / (n - 1), rel=1e-10)


def test_cone_dimension_mismatch():
    s = SampleStats(8, np.zeros(2), SymPD(np.eye(2)))
    with pytest.raises(DomainError):
        ts.uit(s, Cone.orthant(3))
