"""Chi-bar-square null distributions, weights and critical values.

``G_{a,b}(u) = P(chi2_a / chi2_b <= u)`` and the convolution tail::

    Gbar*_{n,a,p}(c) = int_0^inf Gbar_{a,n-p}(c / (1 + t)) dG_{p-a,n-p+a}(t)

Under ``t = s / (1 - s)`` the mixing law becomes ``Beta((p-a)/2, (n-p+a)/2)``
and ``c / (1 + t) = c (1 - s)``, so the integral is a beta expectation that
QUADPACK's algebraic-weight rule handles with the endpoint singularities
folded into the weight.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy import stats as sps

from .cones import ConeKind, face_sizes
from . import cones as cn
from .errors import DomainError, NumericalError
from .matkit import SeedSpec, SymPD, as_sympd, derive_stream

QUAD_TOL = 1e-8
ROOT_XTOL = 1e-10
RESIDUAL_TOL = 1e-8
WEIGHT_BLOCK = 8192


class TestKind(str, enum.Enum):
    LRT = "lrt"
    UIT = "uit"


# --------------------------------------------------------------------------
# Ratio distributions
# --------------------------------------------------------------------------


def g_cdf(a: int, b: int, u: float) -> float:
    """``P(chi2_a / chi2_b <= u)``; ``chi2_0`` is the point mass at zero."""
    if b < 1 or a < 0:
        raise DomainError("need a >= 0 and b >= 1")
    if u < 0.0:
        return 0.0
    if a == 0:
        return 1.0
    if math.isinf(u):
        return 1.0
    return float(special.betainc(a / 2.0, b / 2.0, u / (1.0 + u)))


def g_tail(a: int, b: int, u: float) -> float:
    """``Gbar_{a,b}(u) = 1 - G_{a,b}(u)`` without cancellation for large ``u``.

    For ``a = 0`` this is ``1{u <= 0}``.
    """
    if b < 1 or a < 0:
        raise DomainError("need a >= 0 and b >= 1")
    if u <= 0.0:
        return 1.0
    if a == 0 or math.isinf(u):
        return 0.0
    return float(special.betainc(b / 2.0, a / 2.0, 1.0 / (1.0 + u)))


def gstar_tail(n: int, a: int, p: int, c: float) -> float:
    """Convolution tail ``Gbar*_{n,a,p}(c)`` of ``chi2_a/chi2_{n-p} * (1 + chi2_{p-a}/chi2_{n-p+a})``."""
    if not 0 <= a <= p:
        raise DomainError(f"need 0 <= a <= p, got a={a}, p={p}")
    if n - p < 2:
        raise DomainError(f"need n - p >= 2, got n={n}, p={p}")
    if c <= 0.0:
        return 1.0
    if a == 0:
        return 0.0
    b = n - p
    if a == p:
        return g_tail(a, b, c)
    alpha, beta = (p - a) / 2.0, (b + a) / 2.0
    norm = math.exp(special.betaln(alpha, beta))

    def integrand(s):
        return g_tail(a, b, c * (1.0 - s))

    val, err = integrate.quad(
        integrand, 0.0, 1.0, weight="alg", wvar=(alpha - 1.0, beta - 1.0),
        epsabs=QUAD_TOL * norm * 0.01, epsrel=1e-10, limit=200,
    )
    val /= norm
    err /= norm
    if not err <= QUAD_TOL:
        raise NumericalError(f"quadrature for Gbar*_{{{n},{a},{p}}}({c}) did not converge (err {err:.2e})")
    return min(1.0, max(0.0, val))


def component_tail(kind: TestKind, n: int, k: int, p: int, c: float) -> float:
    """Tail of the face-``k`` component: ``Gbar_{k,n-p}`` (LRT) or ``Gbar*_{n,k,p}`` (UIT)."""
    kind = TestKind(kind)
    if kind is TestKind.LRT:
        return g_tail(k, n - p, c)
    return gstar_tail(n, k, p, c)


def mixture_tail(kind: TestKind, weights: Sequence[float], c: float, n: int, p: int) -> float:
    """``sum_k w_k * component_tail(k, c)``."""
    weights = np.asarray(weights, dtype=float)
    if weights.size != p + 1:
        raise DomainError(f"need p + 1 = {p + 1} weights, got {weights.size}")
    return float(sum(w * component_tail(kind, n, k, p, c) for k, w in enumerate(weights) if w != 0.0))


# --------------------------------------------------------------------------
# Mixture weights
# --------------------------------------------------------------------------


def sigma_fingerprint(sigma) -> str:
    """SHA-256 of the 17-significant-digit row-major serialization of ``sigma``."""
    m = as_sympd(sigma).entries
    text = ";".join(",".join(f"{v:.17g}" for v in row) for row in m)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


@dataclass(frozen=True, eq=False)
class MixtureWeights:
    """Face-size probabilities ``w(p, k; Sigma)`` estimated by a tally."""

    p: int
    counts: np.ndarray
    reps: int
    fingerprint: str = ""
    label: str = ""
    is_exact: bool = False

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.size != self.p + 1 or counts.sum() != self.reps or np.any(counts < 0):
            raise DomainError("counts must be p + 1 nonnegative tallies summing to reps")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def w(self) -> np.ndarray:
        return self.counts / self.reps

    @property
    def se(self) -> np.ndarray:
        if self.is_exact:
            return np.zeros(self.p + 1)
        w = self.w
        return np.sqrt(w * (1.0 - w) / self.reps)

    @classmethod
    def exact(cls, w, label="exact"):
        """Fixed weights (no sampling error), e.g. the max-principle two-point law.

        Stored as a tally over the least common denominator of the inputs,
        which must be rational with a modest denominator.
        """
        from fractions import Fraction

        fr = [Fraction(x).limit_denominator(10**6) for x in w]
        den = math.lcm(*[f.denominator for f in fr])
        counts = [int(f * den) for f in fr]
        if sum(counts) != den:
            raise DomainError("weights must sum to 1")
        return cls(len(counts) - 1, np.array(counts), den, label=label, is_exact=True)

    def to_csv(self, extra: dict | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"# p={self.p} sigma_sha256={self.fingerprint or 'none'}\n")
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["k", "w", "se", "reps"] + list(extra or {})
        writer.writerow(cols)
        for k in range(self.p + 1):
            row = [k, f"{self.w[k]:.17g}", f"{self.se[k]:.17g}", self.reps]
            row += [str(v) for v in (extra or {}).values()]
            writer.writerow(row)
        return buf.getvalue()


def _weight_block(sigma_chol, sigma, size, seed):
    rng = seed.generator()
    z = rng.standard_normal((size, sigma_chol.shape[0])) @ sigma_chol.T
    faces, _, _ = cn.batch_orthant(z, np.broadcast_to(sigma, (size,) + sigma.shape))
    return np.bincount(face_sizes(faces), minlength=sigma.shape[0] + 1)


def mixture_weights(sigma, reps: int, seed: SeedSpec, workers: int | None = None) -> MixtureWeights:
    """Tally the active orthant face size of ``Z ~ N_p(0, Sigma)``.

    Blocks of draws use derived streams so the tally does not depend on
    ``workers``.
    """
    from .parallel import map_blocks

    sigma = as_sympd(sigma)
    if reps < 10_000:
        raise DomainError("mixture_weights needs reps >= 10^4")
    chol, ent = sigma.chol, sigma.entries

    def work(i, size):
        return _weight_block(chol, ent, size, derive_stream(seed, i))

    parts = map_blocks(work, reps, WEIGHT_BLOCK, workers)
    counts = np.sum(parts, axis=0)
    return MixtureWeights(sigma.dim, counts, reps, fingerprint=sigma_fingerprint(sigma))


def null_tail(kind: TestKind, sigma, c: float, n: int, p: int, weights: MixtureWeights) -> float:
    """``P_{0,Sigma}(stat >= c)`` as the weighted mixture of component tails."""
    if weights.p != p or as_sympd(sigma).dim != p:
        raise DomainError("weights, sigma and p disagree")
    if weights.fingerprint and weights.fingerprint != sigma_fingerprint(sigma):
        raise DomainError("weights were estimated for a different sigma")
    return mixture_tail(kind, weights.w, c, n, p)


# --------------------------------------------------------------------------
# Critical values and p-values
# --------------------------------------------------------------------------


def max_principle_weights(p: int) -> np.ndarray:
    """Least-favourable weights: 1/2 on faces of size p-1 and p."""
    w = np.zeros(p + 1)
    w[p - 1] += 0.5
    w[p] += 0.5
    return w


def solve_critical(tail, alpha: float) -> float:
    """Smallest ``c >= 0`` with ``tail(c) = alpha`` for a nonincreasing tail."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    eps = 1e-12
    if tail(eps) < alpha:
        raise DomainError(
            f"alpha={alpha} exceeds the tail mass just above zero ({tail(eps):.6g})"
        )
    hi = 1.0
    while tail(hi) >= alpha:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalError("could not bracket the critical value")
    c = optimize.brentq(lambda x: tail(x) - alpha, eps, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
    if abs(tail(c) - alpha) > RESIDUAL_TOL:
        raise NumericalError(f"critical value residual {tail(c) - alpha:.3e} too large")
    return float(c)


def critval_max(kind: TestKind, cone: ConeKind, alpha: float, n: int, p: int) -> float:
    """Max-principle critical value.

    The same value serves the orthant test (least-favourable sup over
    Sigma) and the half-space test (exact, Sigma-free).
    """
    kind, cone = TestKind(kind), ConeKind(cone)
    if cone is ConeKind.GLOBAL:
        raise DomainError("use t2_critical for the global alternative")
    if n - p < 2:
        raise DomainError("need n - p >= 2")
    w = max_principle_weights(p)
    return solve_critical(lambda c: mixture_tail(kind, w, c, n, p), alpha)


@dataclass(frozen=True)
class PValue:
    value: float
    conservative: bool


def sup_pvalue(kind: TestKind, cone: ConeKind, value: float, n: int, p: int) -> PValue:
    """Max-principle p-value; exact for the half-space, conservative (sup over Sigma) for the orthant."""
    kind, cone = TestKind(kind), ConeKind(cone)
    if value < 0.0:
        raise DomainError("statistic value must be >= 0")
    if cone is ConeKind.GLOBAL:
        raise DomainError("use t2_pvalue for the global alternative")
    pv = mixture_tail(kind, max_principle_weights(p), value, n, p)
    return PValue(pv, conservative=cone is ConeKind.ORTHANT)


def fuit_critical(alpha: float, n: int, p: int) -> float:
    """Upper ``alpha/p`` point of Student's t with ``n - 1`` degrees of freedom."""
    if not 0.0 < alpha < 1.0 or not alpha / p < 1.0:
        raise DomainError("need 0 < alpha < 1")
    return float(sps.t.isf(alpha / p, n - 1))


def t2_critical(alpha: float, n: int, p: int) -> float:
    """Upper ``alpha`` point of the null law of Hotelling's ``T^2``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("need 0 < alpha < 1")
    if n <= p:
        raise DomainError("need n > p")
    return float((n - 1) * p / (n - p) * sps.f.isf(alpha, p, n - p))


def t2_pvalue(value: float, n: int, p: int) -> float:
    return float(sps.f.sf(value * (n - p) / ((n - 1) * p), p, n - p))
