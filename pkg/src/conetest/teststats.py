"""Test statistics for a normal mean against cone alternatives.

The LRT and UIT are built on the scatter matrix ``V = (n - 1) S`` so that
their null laws are exactly the chi-bar ratio mixtures computed in
:mod:`conetest.nulldist`. With ``x = sqrt(n) * x_bar`` and the metric of
``V``::

    U = ||pi_V(x; C)||_V^2
    L = U / (1 + ||x - pi_V(x; C)||_V^2)

Hotelling's ``T^2 = n x_bar' S^{-1} x_bar`` and the coordinatewise Student
statistics of the FUIT keep the usual unbiased ``S``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import cones as cn
from .cones import Algorithm, Cone, ConeKind, Metric
from .errors import ConditioningError, DomainError, NumericalError
from .matkit import PartitionIndex, SampleStats, SymPD, schur_stats


class StatKind(str, enum.Enum):
    T2 = "t2"
    LRT = "lrt"
    UIT = "uit"
    FUIT = "fuit"


@dataclass(frozen=True, eq=False)
class StatisticResult:
    value: float
    face: PartitionIndex
    kind: StatKind
    cone: Cone
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0.0 and self.kind is not StatKind.FUIT:
            raise NumericalError(f"{self.kind.value} statistic came out negative: {self.value}")


def hotelling_t2(stats: SampleStats) -> StatisticResult:
    """``T^2 = n x_bar' S^{-1} x_bar``."""
    value = stats.n * stats.cov.quad(stats.mean)
    return StatisticResult(
        value=value,
        face=PartitionIndex.full(stats.p),
        kind=StatKind.T2,
        cone=Cone.global_(stats.p),
        components={"quad_form": value},
    )


def _check_cone(stats, cone):
    if cone.p != stats.p:
        raise DomainError(f"cone is over p={cone.p} but stats have p={stats.p}")


def _decompose(stats: SampleStats, cone: Cone):
    """Active face plus ``(||pi||^2, ||x - pi||^2)`` in the ``V`` metric, from the face formulas."""
    n, p, x = stats.n, stats.p, stats.mean
    s = stats.cov
    scale = n / (n - 1)
    if cone.kind is ConeKind.GLOBAL:
        return PartitionIndex.full(p), scale * s.quad(x), 0.0
    if cone.kind is ConeKind.HALFSPACE:
        if x[-1] > 0.0:
            return PartitionIndex.full(p), scale * s.quad(x), 0.0
        a = PartitionIndex(p, tuple(range(p - 1)))
    else:
        a = cn.active_face(x, s.entries)
    c = list(a.complement)
    s_cc = s.entries[np.ix_(c, c)]
    resid = scale * float(x[c] @ np.linalg.solve(s_cc, x[c])) if c else 0.0
    if a.size == 0:
        return a, 0.0, resid
    reg, cov_reg = schur_stats(stats, a)
    return a, scale * cov_reg.quad(reg), resid


def uit(stats: SampleStats, cone: Cone) -> StatisticResult:
    """Union-intersection statistic ``U`` on the active face."""
    _check_cone(stats, cone)
    face, norm, resid = _decompose(stats, cone)
    return StatisticResult(
        value=norm,
        face=face,
        kind=StatKind.UIT,
        cone=cone,
        components={"quad_form": norm, "resid": resid},
    )


def lrt(stats: SampleStats, cone: Cone) -> StatisticResult:
    """Likelihood-ratio statistic ``L = U / (1 + R)``."""
    _check_cone(stats, cone)
    face, norm, resid = _decompose(stats, cone)
    return StatisticResult(
        value=norm / (1.0 + resid),
        face=face,
        kind=StatKind.LRT,
        cone=cone,
        components={"quad_form": norm, "resid": resid, "denominator": 1.0 + resid},
    )


def projection_form(stats: SampleStats, cone: Cone, algorithm: Algorithm = Algorithm.ACTIVE_SET):
    """``(U, L)`` from the metric projection of ``sqrt(n) x_bar`` (independent of the face formulas)."""
    _check_cone(stats, cone)
    metric = Metric(SymPD(stats.scatter))
    res = cn.project(math.sqrt(stats.n) * stats.mean, metric, cone, algorithm)
    return res.sq_norm, res.sq_norm / (1.0 + res.sq_resid), res


def directional_uit(stats: SampleStats, theta) -> float:
    """Squared one-sided t along a direction: ``n (theta' V^{-1} x_bar)_+^2 / (theta' V^{-1} theta)``.

    Over ``theta`` in a cone the supremum is the UIT value, attained at the
    projection of ``sqrt(n) x_bar``.
    """
    theta = np.asarray(theta, dtype=float)
    v = SymPD(stats.scatter)
    w = v.solve(theta)
    den = float(theta @ w)
    if not den > 0.0:
        raise DomainError("direction must be nonzero")
    num = max(float(stats.mean @ w), 0.0)
    return stats.n * num * num / den


def t_statistics(stats: SampleStats) -> np.ndarray:
    """Coordinatewise one-sample Student statistics ``sqrt(n) x_j / sqrt(s_jj)``."""
    d = np.diag(stats.cov.entries)
    if np.any(d <= 0.0):
        raise ConditioningError("a coordinate has zero sample variance")
    return math.sqrt(stats.n) * stats.mean / np.sqrt(d)


def fuit(stats: SampleStats, cone: Cone) -> StatisticResult:
    """Finite union-intersection statistic.

    Orthant: ``value = max_j t_j``. Half-space: the first ``p - 1``
    coordinates are tested two-sided and the last one-sided, so the
    statistic vector is ``(|t_1|, ..., |t_{p-1}|, t_p)``; ``value`` is its
    maximum, a summary only, and the decision comes from :func:`fuit_reject`.
    """
    _check_cone(stats, cone)
    if cone.kind is ConeKind.GLOBAL:
        raise DomainError("the FUIT is defined for the orthant and half-space only")
    t = t_statistics(stats)
    if cone.kind is ConeKind.ORTHANT:
        vec = t.copy()
    else:
        vec = np.concatenate([np.abs(t[:-1]), t[-1:]])
    j = int(np.argmax(vec))
    return StatisticResult(
        value=float(vec[j]),
        face=PartitionIndex(stats.p, (j,)),
        kind=StatKind.FUIT,
        cone=cone,
        components={"t": t.tolist(), "tested": vec.tolist()},
    )


def fuit_reject(result: StatisticResult, alpha: float, n: int) -> bool:
    """Bonferroni union decision at level ``alpha`` (``alpha* = alpha / p``)."""
    p = result.cone.p
    a_star = alpha / p
    vec = np.asarray(result.components["tested"])
    one_sided = sps.t.isf(a_star, n - 1)
    if result.cone.kind is ConeKind.ORTHANT:
        return bool(np.any(vec >= one_sided))
    two_sided = sps.t.isf(a_star / 2.0, n - 1)
    return bool(np.any(vec[:-1] >= two_sided) or vec[-1] >= one_sided)


def log_integrated_lr(stats: SampleStats, cone: Cone) -> float:
    """Log of ``sup_{theta in C} P1(x, S | theta) / P1(x, S | 0)``.

    Evaluated directly from the constrained minimum of
    ``n (x - theta)' V^{-1} (x - theta)`` (an active-set projection) and
    checked against ``(n - 1)/2 * log(1 + L)`` from the face formulas.
    """
    _check_cone(stats, cone)
    n = stats.n
    metric = Metric(SymPD(stats.scatter))
    x = math.sqrt(n) * stats.mean
    inf_val = cn.project(x, metric, cone, Algorithm.ACTIVE_SET).sq_resid
    direct = 0.5 * (n - 1) * (math.log1p(metric.sq_norm(x)) - math.log1p(inf_val))
    via_lrt = 0.5 * (n - 1) * math.log1p(lrt(stats, cone).value)
    if abs(direct - via_lrt) > 1e-8 * max(1.0, abs(via_lrt)):
        raise NumericalError(
            f"integrated likelihood ratio identity failed: {direct!r} vs {via_lrt!r}"
        )
    return direct


def integrated_lr(stats: SampleStats, cone: Cone) -> float:
    """``(1 + L)^{(n-1)/2}``, computed by direct optimization and verified."""
    lv = log_integrated_lr(stats, cone)
    return math.exp(lv) if lv < 709.0 else math.inf


# --------------------------------------------------------------------------
# Vectorized statistics for simulation
# --------------------------------------------------------------------------


def batch_statistics(n: int, means, covs, which=("orthant", "halfspace")) -> dict:
    """All statistics for a stack of ``(x_bar, S)`` summaries.

    Returns arrays keyed ``t2``, ``fuit`` (max t), and for each cone name in
    ``which``: ``uit_<cone>``, ``lrt_<cone>``, ``face_<cone>``.
    """
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    scatter = (n - 1) * covs
    out = {}
    quad = np.einsum("ri,ri->r", means, np.linalg.solve(covs, means[..., None])[..., 0])
    out["t2"] = n * quad
    diag = np.einsum("rii->ri", covs)
    out["fuit"] = np.max(math.sqrt(n) * means / np.sqrt(diag), axis=1)
    for name in which:
        kind = ConeKind(name)
        if kind is ConeKind.ORTHANT:
            faces, qn, qr = cn.batch_orthant(means, scatter)
        elif kind is ConeKind.HALFSPACE:
            faces, qn, qr = cn.batch_halfspace(means, scatter)
        else:
            faces = np.full(means.shape[0], (1 << means.shape[1]) - 1)
            qn, qr = quad / (n - 1), np.zeros(means.shape[0])
        u, r = n * qn, n * qr
        out[f"uit_{kind.value}"] = u
        out[f"lrt_{kind.value}"] = u / (1.0 + r)
        out[f"face_{kind.value}"] = faces
    return out
