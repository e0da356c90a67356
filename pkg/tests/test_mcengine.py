import json
import math

import numpy as np
import pytest

from conetest import mcengine as mc
from conetest import nulldist as nd
from conetest.errors import DomainError
from conetest.matkit import SeedSpec


def _spec(**kw):
    base = dict(kind="uit", cone="orthant", n=12, p=2, reps=10_000, seed=3)
    base.update(kw)
    return mc.ExperimentSpec(**base)


def test_spec_validation():
    with pytest.raises(DomainError):
        _spec(reps=999)
    with pytest.raises(DomainError):
        _spec(alpha=1.0)
    with pytest.raises(DomainError):
        _spec(n=3)
    with pytest.raises(DomainError):
        _spec(thetas=[(1.0, 2.0, 3.0)])
    with pytest.raises(ValueError):
        _spec(kind="t3")


def test_spec_fingerprint_stable():
    a, b = _spec(), _spec()
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != _spec(seed=4).fingerprint()
    assert len(a.fingerprint()) == 16
    assert a.sigma == ((1.0, 0.0), (0.0, 1.0))


def test_binomial_se_halving():
    assert mc.binom_se(0.05, 50_000) / mc.binom_se(0.05, 100_000) == pytest.approx(math.sqrt(2))


def test_validate_null_identity():
    # 20 correlated grid points: use a Bonferroni family-wise band (level 0.002)
    r = mc.validate_null(_spec(reps=50_000), weight_reps=200_000)
    z = [row["z"] for row in r["results"]["rows"]]
    assert len(z) == 20
    assert max(z) < 3.89
    assert r["results"]["max_abs_dev"] < 0.01


def test_validate_null_c_zero_is_one():
    r = mc.validate_null(_spec(), c_grid=[0.0], weight_reps=10_000)
    for row in r["results"]["rows"]:
        assert row["empirical"] == 1.0 and row["mixture"] == 1.0


def test_power_curve_basic():
    th = [(0.0, 0.0), (3.0, 3.0)]
    pc = mc.power_curve(_spec(cone="halfspace", thetas=th, reps=40_000))
    (_, p0, se0), (_, p1, _) = pc.grid
    assert abs(p0 - 0.05) <= 3 * mc.binom_se(0.05, 40_000)
    assert p1 > 0.999
    assert se0 == pytest.approx(math.sqrt(p0 * (1 - p0) / 40_000))
    assert pc.meta == _spec(cone="halfspace", thetas=th, reps=40_000).fingerprint()
    again = mc.power_curve(_spec(cone="halfspace", thetas=th, reps=40_000))
    assert again.grid == pc.grid
    assert pc.to_csv().splitlines()[0] == "theta1,theta2,power,se,fingerprint"


def test_power_curve_rejects_theta_outside_cone():
    with pytest.raises(DomainError):
        mc.power_curve(_spec(thetas=[(-1.0, 0.5)]))


def test_domination_spec_mismatch():
    a = _spec(thetas=[(0.0, 0.0)])
    with pytest.raises(DomainError):
        mc.domination_report(a, _spec(cone="halfspace", thetas=[(0.0, 0.0)], n=13))
    with pytest.raises(DomainError):
        mc.domination_report(a, a)


def test_domination_small():
    th = [(0.0, 0.0), (0.6, 0.1), (0.4, 0.4)]
    a = _spec(thetas=th, reps=20_000)
    b = _spec(cone="halfspace", thetas=th, reps=20_000)
    r = mc.domination_report(a, b)
    assert r["results"]["pathwise_violations"] == 0
    assert r["results"]["c_a"] == r["results"]["c_b"]
    assert r["passed"]


def test_similarity_empty_grid():
    r = mc.similarity_and_bias("uit", 12, 2, [np.eye(2)], [], reps=1000)
    assert r["results"] == {"halfspace": [], "bias_witnesses": []}
    assert r["assertions"] == []


def test_no_bias_witness_on_diagonal_identity():
    # moderate diagonal alternatives at Sigma = I stay above alpha
    th = [(t, t) for t in (0.4, 0.7, 1.0)]
    r = mc.similarity_and_bias("uit", 12, 2, [np.eye(2)], th, reps=20_000, seed=5)
    assert r["results"]["bias_witnesses"] == []
    assert r["passed"]


def test_sup_approach_requires_k3():
    with pytest.raises(DomainError):
        mc.sup_approach("uit", 2, 12, 0.05, 2, 1000, 0)


def test_concentrating_sigma():
    assert np.array_equal(mc.concentrating_sigma(3, 0), np.eye(3))
    assert mc.concentrating_sigma(2, 3)[0, 1] == pytest.approx(0.999)


def test_m_matrix_inverse():
    s = mc.m_matrix_inverse(5)
    inv = np.linalg.inv(s)
    off = inv[~np.eye(5, dtype=bool)]
    assert np.all(off <= 1e-12)
    assert np.allclose(np.diag(s), 1.0)


def test_geometry_requires_trials():
    with pytest.raises(DomainError):
        mc.geometry_probe("uit-orthant", 12, 2, 10, 0)
    with pytest.raises(DomainError):
        mc.geometry_probe("lrt-orthant", 12, 2, 1000, 0)


def test_geometry_t2_region_convex():
    r = mc.geometry_probe("t2", 12, 3, 2000, 1)
    assert r["results"]["convexity"]["violations"] == 0
    assert r["passed"]


def test_geometry_uit_sections_and_polar_points():
    r = mc.geometry_probe("uit-orthant", 12, 3, 2000, 2)
    assert r["results"]["section_convexity"]["violations"] == 0
    eaton = r["results"]["eaton"]
    assert eaton["zero_statistic"] == eaton["points"] == eaton["accepted"]
    assert r["results"]["t2_contrast"]["found"]


def test_joint_convexity_counterexample():
    # two accepted (x_bar, S) pairs whose midpoint is rejected by the orthant UIT
    n = 12
    c = nd.critval_max("uit", "orthant", 0.05, n, 2)
    x1, s1 = np.array([0.98595536, -1.90575809]), np.array([[1.8484216, -0.470244], [-0.470244, 2.60407163]])
    x2, s2 = np.array([1.17571299, 1.08273395]), np.array([[2.26298508, 1.97898073], [1.97898073, 2.02878165]])
    u = mc._acceptance_stat("uit-orthant", n, np.stack([x1, x2, (x1 + x2) / 2]), np.stack([s1, s2, (s1 + s2) / 2]))
    assert u[0] <= c and u[1] <= c
    assert u[2] > c


def test_reports_independent_of_workers(tmp_path):
    spec = _spec(reps=9000)
    a = mc.dumps(mc.validate_null(spec, weight_reps=20_000, workers=1))
    b = mc.dumps(mc.validate_null(spec, weight_reps=20_000, workers=3))
    assert a == b


def test_write_report(tmp_path):
    r = mc.sup_approach("uit", 2, 12, 0.05, 3, 2000, 1)
    paths = mc.write_report(r, str(tmp_path))
    assert [p.rsplit(".", 1)[1] for p in paths] == ["json", "csv"]
    assert r["fingerprint"] in paths[0]
    back = json.loads(open(paths[0]).read())
    assert back["schema"] == 1 and back["seed"] == 1
    lines = open(paths[1]).read().splitlines()
    assert len(lines) == 4
    assert lines[1].endswith(r["fingerprint"])


def test_simulate_compound_shapes():
    prior = mc.bw.InvWishartPrior.default(2)
    out = mc.simulate_compound(12, prior, 5000, SeedSpec(1))
    assert out["uit_orthant"].shape == (5000,)
    assert np.all(out["uit_orthant"] >= 0)
