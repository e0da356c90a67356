"""Bayes-weighted significance levels.

Instead of the sup over ``Sigma``, the null rejection probability is
averaged over a weight function on ``Sigma``. Because every face component
has a ``Sigma``-free law, the averaged level is again a mixture of the same
component tails, now weighted by the face-size law ``b(k, n, p)`` under the
compound null. The weights are estimated by simulation tally.

Two weight functions are supported:

* ``InvWishartPrior(gamma, m)``: draw ``Sigma ~ W^{-1}(gamma, m)``, then a
  null dataset of size ``n`` given ``Sigma``, and record the active face size.
* ``HaarPrior``: the semi-conditional construction. With ``S`` fixed, the
  Haar-integrated density of ``x_bar`` is proportional to
  ``|(n-1) S + n x x'|^{-n/2}``, a multivariate t with ``n - p`` degrees of
  freedom and scale ``(n-1) S / (n (n-p))``; faces are tallied under it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import cones as cn
from .cones import face_sizes
from .errors import DomainError
from .matkit import SeedSpec, SymPD, as_sympd, batch_chol, derive_stream, sample_inv_wishart, sample_summaries
from .nulldist import MixtureWeights, TestKind, mixture_tail, sigma_fingerprint, solve_critical
from .parallel import map_blocks

BLOCK = 4096


@dataclass(frozen=True, eq=False)
class InvWishartPrior:
    gamma: SymPD
    m: int

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_sympd(self.gamma))
        if self.m <= self.gamma.dim + 1:
            raise DomainError(f"inverted Wishart prior needs m > p + 1, got m={self.m}")

    @classmethod
    def default(cls, p: int) -> "InvWishartPrior":
        return cls(SymPD(np.eye(p)), p + 2)

    @property
    def label(self) -> str:
        return f"invwishart:m={self.m}:gamma={sigma_fingerprint(self.gamma)[:12]}"


@dataclass(frozen=True)
class HaarPrior:
    label: str = "haar"


PriorSpec = Union[InvWishartPrior, HaarPrior]


@dataclass(frozen=True, eq=False)
class BayesWeights(MixtureWeights):
    """Face-size law under the compound null, with its prior and sample size."""

    n: int = 0
    prior: PriorSpec | None = None

    @property
    def b(self) -> np.ndarray:
        return self.w

    def to_csv(self, extra=None) -> str:
        return super().to_csv({"prior": self.prior.label if self.prior else "none", **(extra or {})})


def _invwishart_block(prior: InvWishartPrior, n, size, seed):
    rng = seed.generator()
    p = prior.gamma.dim
    sig = sample_inv_wishart(prior.gamma, prior.m, size, rng)
    means, covs = sample_summaries(n, np.zeros(p), batch_chol(sig), size, rng)
    faces, _, _ = cn.batch_orthant(means, covs)
    return np.bincount(face_sizes(faces), minlength=p + 1)


def _haar_block(s_fixed: SymPD, n, size, seed):
    rng = seed.generator()
    p = s_fixed.dim
    dof = n - p
    z = rng.standard_normal((size, p)) @ s_fixed.chol.T
    # positive rescaling of each draw (the t mixing variable and the constant
    # scale) does not move the face, but it is kept for the documented law
    scale = np.sqrt((n - 1) / (n * dof) * dof / rng.chisquare(dof, size))
    x = z * scale[:, None]
    faces, _, _ = cn.batch_orthant(x, np.broadcast_to(s_fixed.entries, (size, p, p)))
    return np.bincount(face_sizes(faces), minlength=p + 1)


def bayes_weights(prior: PriorSpec, n: int, p: int, s_fixed=None, reps: int = 100_000,
                  seed: SeedSpec = SeedSpec(0), workers: int | None = None) -> BayesWeights:
    """Estimate ``b(k, n, p)``, ``k = 0..p``, by tallying active face sizes."""
    if reps < 10_000:
        raise DomainError("bayes_weights needs reps >= 10^4")
    if n < p + 2:
        raise DomainError(f"need n >= p + 2 = {p + 2}")
    if isinstance(prior, InvWishartPrior):
        if prior.gamma.dim != p:
            raise DomainError("prior scale matrix has the wrong dimension")

        def work(i, size):
            return _invwishart_block(prior, n, size, derive_stream(seed, i))

        fp = sigma_fingerprint(prior.gamma)
    elif isinstance(prior, HaarPrior):
        if s_fixed is None:
            raise DomainError("the Haar weight needs a fixed S (s_fixed)")
        s_fixed = as_sympd(s_fixed)
        if s_fixed.dim != p:
            raise DomainError("s_fixed has the wrong dimension")

        def work(i, size):
            return _haar_block(s_fixed, n, size, derive_stream(seed, i))

        fp = sigma_fingerprint(s_fixed)
    else:
        raise DomainError(f"unknown prior {prior!r}")
    counts = np.sum(map_blocks(work, reps, BLOCK, workers), axis=0)
    return BayesWeights(p, counts, reps, fingerprint=fp, label=prior.label, n=n, prior=prior)


def critval_bayes(kind: TestKind, alpha: float, weights: MixtureWeights, n: int | None = None) -> float:
    """Root of ``sum_k b_k * component_tail(k, c) = alpha``.

    ``n`` defaults to the sample size recorded on ``BayesWeights``; plain
    :class:`MixtureWeights` (for instance the max-principle two-point law)
    need it passed explicitly.
    """
    n = n if n is not None else getattr(weights, "n", 0)
    if not n:
        raise DomainError("sample size n is required")
    p = weights.p
    w = weights.w
    return solve_critical(lambda c: mixture_tail(kind, w, c, n, p), alpha)


def bayes_pvalue(kind: TestKind, value: float, weights: MixtureWeights, n: int | None = None) -> float:
    n = n if n is not None else getattr(weights, "n", 0)
    if not n:
        raise DomainError("sample size n is required")
    return mixture_tail(kind, weights.w, value, n, weights.p)
