import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import optimize

from conetest import cones as cn
from conetest.cones import Algorithm, Cone, ConeKind, Metric, dual_member, nnls, project
from conetest.errors import DomainError
from conetest.matkit import PartitionIndex, SymPD, all_subsets

from conftest import random_spd


@st.composite
def instances(draw, max_p=6):
    p = draw(st.integers(1, max_p))
    a = draw(hnp.arrays(float, (p, p + 2), elements=st.floats(-2, 2)))
    m = a @ a.T + 0.2 * np.eye(p)
    x = draw(hnp.arrays(float, p, elements=st.floats(-4, 4)))
    return x, m


def test_cone_membership():
    assert Cone.orthant(3).contains([0.0, 1.0, 2.0])
    assert not Cone.orthant(3).contains([0.0, -1.0, 2.0])
    assert Cone.halfspace(3).contains([-5.0, -1.0, 0.0])
    assert not Cone.halfspace(2).contains([1.0, -0.1])
    assert Cone.global_(2).contains([-3.0, 4.0])
    with pytest.raises(DomainError):
        Cone(ConeKind.ORTHANT, 0)


def _kkt(x, res, metric, cone):
    pi = res.point
    assert cone.contains(pi, tol=1e-9)
    # the residual lies in the polar cone up to rounding relative to x
    u = metric.A.solve(x - pi)
    tol = 1e-9 * (np.abs(metric.A.solve(x)).max() + np.abs(metric.A.solve(pi)).max())
    if cone.kind is ConeKind.ORTHANT:
        assert np.all(u <= tol) and np.all(np.abs(u[pi > 0]) <= tol)
    else:
        assert np.all(np.abs(u[:-1]) <= tol) and u[-1] <= tol
    assert abs(metric.inner(pi, x - pi)) <= 1e-8 * (1 + metric.sq_norm(x))


@given(instances())
def test_projection_kkt(inst):
    x, m = inst
    metric = Metric(SymPD(m))
    for cone in (Cone.orthant(x.size), Cone.halfspace(x.size)):
        res = project(x, metric, cone)
        _kkt(x, res, metric, cone)
        assert res.sq_norm + res.sq_resid == pytest.approx(metric.sq_norm(x), rel=1e-8, abs=1e-10)


@given(instances(), st.floats(0.1, 10.0))
def test_projection_idempotent_and_homogeneous(inst, t):
    x, m = inst
    metric = Metric(SymPD(m))
    cone = Cone.orthant(x.size)
    pi = project(x, metric, cone).point
    assert np.allclose(project(pi, metric, cone).point, pi, atol=1e-9 * (1 + np.abs(pi).max()))
    assert np.allclose(project(t * x, metric, cone).point, t * pi, atol=1e-8 * (1 + t * np.abs(pi).max()))


def test_active_set_matches_face_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(400):
        p = int(rng.integers(1, 7))
        m = random_spd(rng, p, scale=float(np.exp(rng.normal())))
        x = rng.standard_normal(p) * 2
        metric = Metric(SymPD(m))
        a = project(x, metric, Cone.orthant(p), Algorithm.ACTIVE_SET)
        b = project(x, metric, Cone.orthant(p), Algorithm.FACE_ENUMERATION)
        assert np.allclose(a.point, b.point, atol=1e-9, rtol=1e-9)
        assert a.sq_norm == pytest.approx(b.sq_norm, rel=1e-9, abs=1e-12)
        assert a.face == b.face


def test_projection_identity_metric_is_clipping():
    x = np.array([1.5, -2.0, 0.3, -0.1])
    res = project(x, Metric(SymPD(np.eye(4))), Cone.orthant(4))
    assert np.allclose(res.point, np.maximum(x, 0))
    assert res.face == PartitionIndex(4, (0, 2))


def test_halfspace_against_generic_solver():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = int(rng.integers(2, 5))
        m = random_spd(rng, p)
        x = rng.standard_normal(p)
        minv = np.linalg.inv(m)
        obj = lambda th: (x - th) @ minv @ (x - th)
        ref = optimize.minimize(obj, np.zeros(p), method="SLSQP",
                                constraints=[{"type": "ineq", "fun": lambda th: th[-1]}],
                                options={"ftol": 1e-14, "maxiter": 500})
        res = project(x, Metric(SymPD(m)), Cone.halfspace(p))
        assert np.allclose(res.point, ref.x, atol=1e-5)
        assert res.sq_resid == pytest.approx(ref.fun, abs=1e-8)


def test_global_projection_is_identity():
    x = np.array([-1.0, 2.0])
    res = project(x, Metric(SymPD(np.eye(2))), Cone.global_(2))
    assert np.array_equal(res.point, x)
    assert res.sq_resid == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_nnls_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((8, 5))
    b = rng.standard_normal(8)
    ours = nnls(E, b)
    ref, _ = optimize.nnls(E, b)
    assert np.allclose(ours, ref, atol=1e-10)


def test_active_face_unique_hit():
    # exactly one face indicator fires for a generic point
    rng = np.random.default_rng(3)
    for _ in range(200):
        p = int(rng.integers(1, 6))
        m = random_spd(rng, p)
        x = rng.standard_normal(p)
        hits = [a for a in all_subsets(p) if cn.indicator(x, m, a)]
        assert len(hits) == 1
        assert cn.active_face(x, m) == hits[0]
        assert project(x, Metric(SymPD(m)), Cone.orthant(p)).face == hits[0]


def test_dual_member():
    m = np.array([[1.0, 0.5], [0.5, 1.0]])
    metric = Metric(SymPD(m))
    assert dual_member(m @ np.array([-1.0, -2.0]), metric, Cone.orthant(2))
    assert not dual_member(m @ np.array([1.0, -2.0]), metric, Cone.orthant(2))
    assert dual_member(-m @ np.array([0.0, 1.0]), metric, Cone.halfspace(2))
    assert not dual_member(-m @ np.array([0.2, 1.0]), metric, Cone.halfspace(2))
    assert dual_member(np.zeros(2), metric, Cone.global_(2))


def test_batch_orthant_matches_single():
    rng = np.random.default_rng(4)
    for p in (1, 2, 3, 5):
        ms = np.stack([random_spd(rng, p) for _ in range(300)])
        xs = rng.standard_normal((300, p))
        faces, qn, qr = cn.batch_orthant(xs, ms)
        for i in range(300):
            res = project(xs[i], Metric(SymPD(ms[i])), Cone.orthant(p))
            assert faces[i] == sum(1 << j for j in res.face.a)
            assert qn[i] == pytest.approx(res.sq_norm, rel=1e-9, abs=1e-12)
            assert qr[i] == pytest.approx(res.sq_resid, rel=1e-9, abs=1e-12)


def test_batch_halfspace_matches_single():
    rng = np.random.default_rng(5)
    ms = np.stack([random_spd(rng, 3) for _ in range(200)])
    xs = rng.standard_normal((200, 3))
    faces, qn, qr = cn.batch_halfspace(xs, ms)
    for i in range(200):
        res = project(xs[i], Metric(SymPD(ms[i])), Cone.halfspace(3))
        assert qn[i] == pytest.approx(res.sq_norm, rel=1e-9, abs=1e-12)
        assert qr[i] == pytest.approx(res.sq_resid, rel=1e-9, abs=1e-12)


def test_face_sizes():
    assert list(cn.face_sizes(np.array([0, 1, 3, 7, 5]))) == [0, 1, 2, 3, 2]
