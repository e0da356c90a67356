"""Partitioned SPD linear algebra and reproducible Gaussian sampling.

Everything here is a pure function over immutable values. Arrays stored on
the frozen dataclasses are marked read-only so that sharing them across
threads is safe.
"""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConditioningError, DomainError, NotPositiveDefiniteError

# A Cholesky pivot below this fraction of the largest diagonal entry is singular.
PD_RTOL = 1e-12
SYMMETRY_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def pd_factor(m) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises :class:`NotPositiveDefiniteError` naming the first pivot that
    falls below ``PD_RTOL * max(diag(m))``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    p = m.shape[0]
    scale = float(np.max(np.diag(m))) if p else 0.0
    if not np.isfinite(m).all():
        raise DomainError("matrix has non-finite entries")
    if scale <= 0.0:
        raise NotPositiveDefiniteError(0, scale)
    tol = PD_RTOL * scale
    L = np.zeros_like(m)
    for j in range(p):
        pivot = m[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol:
            raise NotPositiveDefiniteError(j, float(pivot))
        L[j, j] = np.sqrt(pivot)
        L[j + 1 :, j] = (m[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True, eq=False)
class SymPD:
    """Symmetric positive-definite matrix with its cached Cholesky factor."""

    entries: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DomainError(f"expected a non-empty square matrix, got shape {m.shape}")
        asym = np.max(np.abs(m - m.T))
        if asym > SYMMETRY_RTOL * max(np.max(np.abs(m)), np.finfo(float).tiny):
            raise DomainError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        object.__setattr__(self, "entries", _frozen(m))
        object.__setattr__(self, "chol", _frozen(pd_factor(m)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def solve(self, b) -> np.ndarray:
        """``entries^{-1} @ b`` through the cached factor."""
        y = np.linalg.solve(self.chol, b)
        return np.linalg.solve(self.chol.T, y)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))

    def quad(self, x) -> float:
        """``x' entries^{-1} x``."""
        z = np.linalg.solve(self.chol, np.asarray(x, dtype=float))
        return float(z @ z)

    def logdet(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def __eq__(self, other):
        return isinstance(other, SymPD) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())


def as_sympd(m) -> SymPD:
    return m if isinstance(m, SymPD) else SymPD(np.asarray(m, dtype=float))


@dataclass(frozen=True)
class PartitionIndex:
    """Index subset ``a`` of ``{0, ..., p-1}``; the complement is derived.

    Indices are 0-based in the Python API. Reports convert to the 1-based
    convention with :meth:`one_based`.
    """

    p: int
    a: tuple = ()

    def __post_init__(self):
        if self.p < 1:
            raise DomainError("p must be >= 1")
        a = tuple(sorted(int(i) for i in self.a))
        if len(set(a)) != len(a):
            raise DomainError(f"duplicate indices in {self.a}")
        if a and (a[0] < 0 or a[-1] >= self.p):
            raise DomainError(f"indices {a} outside 0..{self.p - 1}")
        object.__setattr__(self, "a", a)

    @property
    def complement(self) -> tuple:
        s = set(self.a)
        return tuple(i for i in range(self.p) if i not in s)

    @property
    def size(self) -> int:
        return len(self.a)

    @property
    def is_full(self) -> bool:
        return len(self.a) == self.p

    def mask(self) -> np.ndarray:
        m = np.zeros(self.p, dtype=bool)
        m[list(self.a)] = True
        return m

    def one_based(self) -> list:
        return [i + 1 for i in self.a]

    @classmethod
    def full(cls, p: int) -> "PartitionIndex":
        return cls(p, tuple(range(p)))

    @classmethod
    def from_mask(cls, mask) -> "PartitionIndex":
        mask = np.asarray(mask, dtype=bool)
        return cls(mask.size, tuple(np.flatnonzero(mask)))


def all_subsets(p: int) -> Iterator[PartitionIndex]:
    """Every subset of ``{0..p-1}``, ordered by size then lexicographically."""
    for k in range(p + 1):
        for a in itertools.combinations(range(p), k):
            yield PartitionIndex(p, a)


@dataclass(frozen=True, eq=False)
class SampleStats:
    """Sample size, sample mean and unbiased sample covariance of one dataset."""

    n: int
    mean: np.ndarray
    cov: SymPD

    def __post_init__(self):
        cov = as_sympd(self.cov)
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        if mean.size != cov.dim:
            raise DomainError(f"mean has length {mean.size} but cov is {cov.dim}x{cov.dim}")
        if int(self.n) != self.n or self.n < cov.dim + 2:
            raise DomainError(f"need n >= p + 2 = {cov.dim + 2}, got n = {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", cov)

    @property
    def p(self) -> int:
        return self.cov.dim

    @property
    def scatter(self) -> np.ndarray:
        """Sum-of-squares matrix ``(n - 1) * cov``."""
        return (self.n - 1) * self.cov.entries

    @classmethod
    def from_data(cls, x) -> "SampleStats":
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise DomainError("data must be a 2-d array of shape (n, p)")
        n = x.shape[0]
        mean = x.mean(axis=0)
        d = x - mean
        cov = d.T @ d / (n - 1) if n > 1 else np.zeros((x.shape[1],) * 2)
        return cls(n, mean, SymPD(0.5 * (cov + cov.T)))

    def transformed(self, b) -> "SampleStats":
        """Summaries of the data ``B x_i``."""
        b = np.asarray(b, dtype=float)
        cov = b @ self.cov.entries @ b.T
        return SampleStats(self.n, b @ self.mean, SymPD(0.5 * (cov + cov.T)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"n={self.n}\n")
        buf.write(",".join(f"{v:.17g}" for v in self.mean) + "\n")
        # column-major: row j of the dump is column j of the matrix
        for col in self.cov.entries.T:
            buf.write(",".join(f"{v:.17g}" for v in col) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SampleStats":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("n="):
            raise DomainError("first line must be 'n=<int>'")
        n = int(lines[0][2:])
        mean = np.array([float(v) for v in lines[1].split(",")])
        cols = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        return cls(n, mean, SymPD(cols.T))


def _block(m: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    return m[np.ix_(list(rows), list(cols))]


def schur_stats(stats: SampleStats, a: PartitionIndex):
    """Regress the ``a'`` block out of the mean and covariance.

    Returns ``(x_a - S_aa' S_a'a'^{-1} x_a', S_aa - S_aa' S_a'a'^{-1} S_a'a)``.
    """
    if a.p != stats.p:
        raise DomainError(f"partition is over p={a.p}, stats have p={stats.p}")
    if a.size == 0:
        raise DomainError("the regression block a must be non-empty")
    s, x = stats.cov.entries, stats.mean
    ai, ci = list(a.a), list(a.complement)
    if not ci:
        return x.copy(), stats.cov
    s_cc = _block(s, ci, ci)
    try:
        lc = pd_factor(s_cc)
    except NotPositiveDefiniteError as exc:
        raise ConditioningError(f"S_a'a' is numerically singular: {exc}") from exc
    s_ac = _block(s, ai, ci)
    # S_aa' S_a'a'^{-1} via the factor of S_a'a'
    coef = np.linalg.solve(lc.T, np.linalg.solve(lc, s_ac.T)).T
    mean_reg = x[ai] - coef @ x[ci]
    cov_reg = _block(s, ai, ai) - coef @ s_ac.T
    return mean_reg, SymPD(0.5 * (cov_reg + cov_reg.T))


# --------------------------------------------------------------------------
# Reproducible random streams
# --------------------------------------------------------------------------

_SEED_LIMIT = 2**64


@dataclass(frozen=True)
class SeedSpec:
    """A 64-bit master seed plus a stream identifier."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < _SEED_LIMIT:
            raise DomainError("master_seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0:
            raise DomainError("stream_id must be >= 0")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def derive_stream(seed: SeedSpec, child: int) -> SeedSpec:
    """Child stream of ``seed``; depends only on ``(seed, child)``.

    The stream id is the Cantor pairing of the parent id and ``child``, which
    is injective, so distinct children (and distinct parents) never collide.
    """
    if child < 0:
        raise DomainError("child index must be >= 0")
    s, c = int(seed.stream_id), int(child)
    return SeedSpec(seed.master_seed, (s + c) * (s + c + 1) // 2 + c)


def fresh_seed() -> int:
    """A new random 64-bit master seed (for runs without ``--seed``)."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


def sample_summaries(n: int, theta, sigma_chol, size: int, rng: np.random.Generator):
    """Means and unbiased covariances of ``size`` datasets of ``n`` draws each.

    ``sigma_chol`` is either one ``(p, p)`` lower factor or a stack of
    ``size`` factors (one covariance per dataset).
    """
    theta = np.asarray(theta, dtype=float)
    sigma_chol = np.asarray(sigma_chol, dtype=float)
    p = sigma_chol.shape[-1]
    z = rng.standard_normal((size, n, p))
    if sigma_chol.ndim == 2:
        x = z @ sigma_chol.T
    else:
        x = np.einsum("rnj,rij->rni", z, sigma_chol)
    x += theta
    means = x.mean(axis=1)
    d = x - means[:, None, :]
    covs = np.einsum("rni,rnj->rij", d, d) / (n - 1)
    return means, covs


def sample_dataset(n: int, theta, sigma, seed: SeedSpec) -> SampleStats:
    """Summaries of ``n`` i.i.d. draws from ``N_p(theta, sigma)``."""
    sigma = as_sympd(sigma)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != sigma.dim:
        raise DomainError("theta and sigma dimensions disagree")
    if n < sigma.dim + 2:
        raise DomainError(f"need n >= p + 2 = {sigma.dim + 2}, got n = {n}")
    means, covs = sample_summaries(n, theta, sigma.chol, 1, seed.generator())
    cov = covs[0]
    return SampleStats(n, means[0], SymPD(0.5 * (cov + cov.T)))


def sample_inv_wishart(gamma, df: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` matrices from the inverted Wishart ``W^{-1}(gamma, df)``.

    Parameterized so that ``Sigma^{-1} ~ W(gamma^{-1}, df)`` and
    ``E[Sigma] = gamma / (df - p - 1)``. Uses the Bartlett decomposition.
    """
    gamma = as_sympd(gamma)
    p = gamma.dim
    if df <= p - 1:
        raise DomainError(f"inverted Wishart needs df > p - 1, got df = {df}")
    lg = pd_factor(gamma.inverse())
    a = np.zeros((size, p, p))
    dfs = df - np.arange(p)
    a[:, np.arange(p), np.arange(p)] = np.sqrt(rng.chisquare(dfs, size=(size, p)))
    rows, cols = np.tril_indices(p, -1)
    a[:, rows, cols] = rng.standard_normal((size, rows.size))
    la = lg @ a
    # Sigma = (la la')^{-1} = la^{-T} la^{-1}
    inv_la = np.linalg.inv(la)
    sig = np.swapaxes(inv_la, 1, 2) @ inv_la
    return 0.5 * (sig + np.swapaxes(sig, 1, 2))


def random_pd(p: int, rng: np.random.Generator, df: int | None = None) -> np.ndarray:
    """A random correlation-scaled PD matrix (normalized Wishart draw)."""
    df = p + 2 if df is None else df
    z = rng.standard_normal((df, p))
    w = z.T @ z
    d = 1.0 / np.sqrt(np.diag(w))
    c = w * d[:, None] * d[None, :]
    return 0.5 * (c + c.T)


def batch_chol(m: np.ndarray) -> np.ndarray:
    """Cholesky factors of a stack of PD matrices."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"batch Cholesky failed: {exc}") from exc
