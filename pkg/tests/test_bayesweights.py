import numpy as np
import pytest

from conetest import bayesweights as bw
from conetest import nulldist as nd
from conetest.errors import DomainError
from conetest.matkit import SeedSpec, SymPD

from conftest import random_spd


def test_prior_validation():
    with pytest.raises(DomainError):
        bw.InvWishartPrior(SymPD(np.eye(3)), 4)
    p = bw.InvWishartPrior.default(3)
    assert p.m == 5
    assert p.label.startswith("invwishart:m=5")


def test_invwishart_weights_shape_and_determinism():
    prior = bw.InvWishartPrior.default(2)
    a = bw.bayes_weights(prior, 12, 2, reps=20_000, seed=SeedSpec(4), workers=1)
    b = bw.bayes_weights(prior, 12, 2, reps=20_000, seed=SeedSpec(4), workers=4)
    assert np.array_equal(a.counts, b.counts)
    assert a.b.sum() == pytest.approx(1.0)
    assert a.n == 12 and a.prior is prior


def test_haar_weights_equal_fixed_sigma_weights():
    # given S the Haar-integrated mean is a scaled multivariate t with scale
    # proportional to S; face membership is scale free along each draw, so the
    # face-size law is that of N(0, S)
    rng = np.random.default_rng(11)
    s = random_spd(rng, 3)
    hb = bw.bayes_weights(bw.HaarPrior(), 15, 3, s_fixed=s, reps=200_000, seed=SeedSpec(1))
    w = nd.mixture_weights(s, 200_000, SeedSpec(2))
    se = np.sqrt(hb.se**2 + w.se**2)
    assert np.all(np.abs(hb.b - w.w) <= 4 * se + 1e-12)


def test_haar_needs_s_fixed():
    with pytest.raises(DomainError):
        bw.bayes_weights(bw.HaarPrior(), 12, 2)


def test_two_point_weights_reproduce_critval_max():
    for n, p in [(12, 2), (20, 3)]:
        w = nd.MixtureWeights.exact(nd.max_principle_weights(p))
        for kind in ("lrt", "uit"):
            assert bw.critval_bayes(kind, 0.05, w, n=n) == pytest.approx(
                nd.critval_max(kind, "orthant", 0.05, n, p), abs=1e-9
            )


def test_critval_bayes_needs_n():
    with pytest.raises(DomainError):
        bw.critval_bayes("uit", 0.05, nd.MixtureWeights.exact([0.5, 0.5]))


def test_bayes_critval_below_max():
    # the Bayes weights spread mass onto smaller faces, so the level-alpha
    # point is smaller than the least-favourable one
    w = bw.bayes_weights(bw.InvWishartPrior.default(2), 12, 2, reps=50_000, seed=SeedSpec(3))
    c = bw.critval_bayes("uit", 0.05, w)
    assert c < nd.critval_max("uit", "orthant", 0.05, 12, 2)
    assert bw.bayes_pvalue("uit", c, w) == pytest.approx(0.05, abs=1e-8)


def test_csv_has_prior_column():
    w = bw.bayes_weights(bw.InvWishartPrior.default(2), 12, 2, reps=10_000, seed=SeedSpec(3))
    lines = w.to_csv().splitlines()
    assert lines[1].split(",")[-1] == "prior"
