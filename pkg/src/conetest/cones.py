"""Closed convex cones and metric projection onto them.

The metric induced by a PD matrix ``A`` is ``<u, v>_A = u' A^{-1} v``. The
projection ``pi_A(x; C)`` minimizes ``||x - theta||_A^2`` over ``theta`` in
the cone ``C``. Three cones are supported: the nonnegative orthant, the
half-space ``{theta_p >= 0}`` and all of ``R^p``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError
from .matkit import PartitionIndex, SampleStats, SymPD, all_subsets, as_sympd

KKT_TOL = 1e-8
FEASIBILITY_TOL = 1e-10
FACE_ENUMERATION_MAX_P = 20


class ConeKind(str, enum.Enum):
    ORTHANT = "orthant"
    HALFSPACE = "halfspace"
    GLOBAL = "global"


@dataclass(frozen=True)
class Cone:
    kind: ConeKind
    p: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ConeKind(self.kind))
        if self.p < 1:
            raise DomainError("cone dimension must be >= 1")

    @classmethod
    def orthant(cls, p):
        return cls(ConeKind.ORTHANT, p)

    @classmethod
    def halfspace(cls, p):
        return cls(ConeKind.HALFSPACE, p)

    @classmethod
    def global_(cls, p):
        return cls(ConeKind.GLOBAL, p)

    def contains(self, theta, tol=FEASIBILITY_TOL) -> bool:
        theta = np.asarray(theta, dtype=float)
        scale = tol * max(1.0, float(np.max(np.abs(theta), initial=0.0)))
        if self.kind is ConeKind.ORTHANT:
            return bool(np.all(theta >= -scale))
        if self.kind is ConeKind.HALFSPACE:
            return bool(theta[-1] >= -scale)
        return True


class Algorithm(str, enum.Enum):
    FACE_ENUMERATION = "face_enumeration"
    ACTIVE_SET = "active_set"


@dataclass(frozen=True)
class Metric:
    """Inner product ``<u, v>_A = u' A^{-1} v``."""

    A: SymPD

    def __post_init__(self):
        object.__setattr__(self, "A", as_sympd(self.A))

    @property
    def dim(self):
        return self.A.dim

    def inner(self, u, v) -> float:
        return float(np.asarray(u, dtype=float) @ self.A.solve(np.asarray(v, dtype=float)))

    def sq_norm(self, u) -> float:
        return self.A.quad(u)


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    point: np.ndarray
    face: PartitionIndex
    sq_norm: float
    sq_resid: float


def _regress(x, m, a, c):
    """``(x_a - M_ac M_cc^{-1} x_c, M_cc^{-1} x_c)`` for index lists a, c."""
    if not c:
        return x[a], np.zeros(0)
    v = np.linalg.solve(m[np.ix_(c, c)], x[c])
    if not a:
        return np.zeros(0), v
    return x[a] - m[np.ix_(a, c)] @ v, v


def indicator(x, m, a: PartitionIndex) -> bool:
    """Face indicator on raw arrays: ``x_{a:a'} > 0`` and ``M_{a'a'}^{-1} x_{a'} <= 0``."""
    reg, v = _regress(np.asarray(x, dtype=float), np.asarray(m, dtype=float), list(a.a), list(a.complement))
    return bool(np.all(reg > 0.0) and np.all(v <= 0.0))


def face_indicator(stats: SampleStats, a: PartitionIndex) -> bool:
    """True iff ``a`` is the active orthant face of ``(x_bar, S)``.

    A regressed mean coordinate equal to zero is not strictly positive, so
    ties fall to the smaller face.
    """
    if a.p != stats.p:
        raise DomainError(f"partition over p={a.p} but stats have p={stats.p}")
    return indicator(stats.mean, stats.cov.entries, a)


def active_face(x, m) -> PartitionIndex:
    """The unique face whose indicator fires, by exhaustive search."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    hits = [a for a in all_subsets(x.size) if indicator(x, m, a)]
    if len(hits) != 1:
        # measure-zero tie: fall back to the certified projection
        res = project(x, Metric(SymPD(m)), Cone.orthant(x.size), Algorithm.ACTIVE_SET)
        return res.face
    return hits[0]


def _check_dims(x, metric, cone):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != metric.dim or cone.p != metric.dim:
        raise DomainError(
            f"dimension mismatch: x has {x.size}, metric {metric.dim}, cone {cone.p}"
        )
    return x


def _face_enumeration(x, metric: Metric):
    p = x.size
    if p > FACE_ENUMERATION_MAX_P:
        raise DomainError(f"face enumeration is limited to p <= {FACE_ENUMERATION_MAX_P}")
    m = metric.A.entries
    best, best_val = None, np.inf
    for a in all_subsets(p):
        ai, ci = list(a.a), list(a.complement)
        theta_a, _ = _regress(x, m, ai, ci)
        if theta_a.size and np.any(theta_a < 0.0):
            continue
        theta = np.zeros(p)
        theta[ai] = theta_a
        val = metric.sq_norm(x - theta)
        if val < best_val:
            best, best_val = theta, val
    return best


def nnls(E, b, max_iter=None):
    """Lawson-Hanson active-set solution of ``min ||E z - b||`` s.t. ``z >= 0``.

    Raises :class:`SolverError` after ``max_iter`` least-squares solves
    (default ``100 * ncols``).
    """
    E = np.asarray(E, dtype=float)
    b = np.asarray(b, dtype=float)
    m, p = E.shape
    max_iter = 100 * p if max_iter is None else max_iter
    eps = np.finfo(float).eps
    # relative to the data, so the solver behaves the same at every scale of b
    tol = 10.0 * eps * max(m, p) * np.linalg.norm(E, 1) * np.max(np.abs(b), initial=0.0)
    z = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    w = E.T @ b
    it = 0
    while not passive.all() and np.max(np.where(passive, -np.inf, w)) > tol:
        passive[np.argmax(np.where(passive, -np.inf, w))] = True
        while True:
            it += 1
            if it > max_iter:
                raise SolverError(f"active-set NNLS did not converge in {max_iter} iterations")
            trial = np.zeros(p)
            trial[passive] = np.linalg.lstsq(E[:, passive], b, rcond=None)[0]
            if np.all(trial[passive] > 0.0):
                z = trial
                break
            blocking = passive & (trial <= 0.0)
            step = np.min(z[blocking] / (z[blocking] - trial[blocking]))
            z = z + step * (trial - z)
            passive &= z > 10.0 * eps * max(np.max(np.abs(z)), np.max(np.abs(trial)))
            z[~passive] = 0.0
        w = E.T @ (b - E @ z)
    return z


def _active_set(x, metric: Metric):
    L = metric.A.chol
    # ||x - theta||_A^2 = ||L^{-1} x - L^{-1} theta||^2
    E = np.linalg.solve(L, np.eye(x.size))
    return nnls(E, E @ x)


def _halfspace(x, metric: Metric):
    if x[-1] >= 0.0:
        return x.copy()
    col = metric.A.entries[:, -1]
    theta = x - col * (x[-1] / col[-1])
    theta[-1] = 0.0
    return theta


def _certify(x, pi, metric: Metric, cone: Cone):
    scale = metric.sq_norm(x)
    if scale == 0.0:
        return
    if not cone.contains(pi, tol=1e-9):
        raise SolverError("projection left the cone")
    r = x - pi
    gap = abs(metric.inner(r, pi)) / scale
    if gap > KKT_TOL:
        raise SolverError(f"KKT complementarity gap {gap:.3e} exceeds {KKT_TOL}")
    u = metric.A.solve(r)
    tol = 1e-8 * max(np.max(np.abs(metric.A.solve(x))), np.max(np.abs(metric.A.solve(pi))))
    if cone.kind is ConeKind.ORTHANT:
        ok = np.all(u <= tol) and np.all(np.abs(u[pi > 0.0]) <= tol)
    elif cone.kind is ConeKind.HALFSPACE:
        ok = np.all(np.abs(u[:-1]) <= tol) and u[-1] <= tol
    else:
        ok = np.all(np.abs(u) <= tol)
    if not ok:
        raise SolverError("residual is not in the polar cone")


def project(x, metric: Metric, cone: Cone, algorithm: Algorithm = Algorithm.ACTIVE_SET) -> ProjectionResult:
    """Metric projection of ``x`` onto ``cone`` with a KKT certificate."""
    x = _check_dims(x, metric, cone)
    algorithm = Algorithm(algorithm)
    if cone.kind is ConeKind.GLOBAL:
        pi = x.copy()
    elif cone.kind is ConeKind.HALFSPACE:
        pi = _halfspace(x, metric)
    elif algorithm is Algorithm.FACE_ENUMERATION:
        pi = _face_enumeration(x, metric)
    else:
        pi = _active_set(x, metric)
    _certify(x, pi, metric, cone)
    if cone.kind is ConeKind.HALFSPACE:
        face = PartitionIndex.full(x.size) if x[-1] > 0.0 else PartitionIndex(x.size, tuple(range(x.size - 1)))
    else:
        face = PartitionIndex.from_mask(pi > 0.0) if cone.kind is ConeKind.ORTHANT else PartitionIndex.full(x.size)
    return ProjectionResult(
        point=pi,
        face=face,
        sq_norm=metric.sq_norm(pi),
        sq_resid=metric.sq_norm(x - pi),
    )


def dual_member(w, metric: Metric, cone: Cone, tol=1e-10) -> bool:
    """Membership of ``w`` in the polar cone ``{w : <w, theta>_A <= 0 for all theta in C}``."""
    w = _check_dims(w, metric, cone)
    u = metric.A.solve(w)
    scale = tol * max(float(np.max(np.abs(u), initial=0.0)), np.finfo(float).tiny)
    if cone.kind is ConeKind.ORTHANT:
        return bool(np.all(u <= scale))
    if cone.kind is ConeKind.HALFSPACE:
        return bool(np.all(np.abs(u[:-1]) <= scale) and u[-1] <= scale)
    return bool(np.all(w == 0.0))


# --------------------------------------------------------------------------
# Batched face search used by the Monte Carlo engine
# --------------------------------------------------------------------------

BATCH_ENUMERATION_MAX_P = 10


def _bsolve(m, b):
    return np.linalg.solve(m, b[..., None])[..., 0]


def batch_orthant(x, m):
    """Orthant face decomposition for a stack of ``(x, M)`` pairs.

    Returns ``(faces, sq_norm, sq_resid)``: the active-face bitmask (bit j
    set when coordinate j is in the face), ``x_{a:a'}' M_{aa:a'}^{-1}
    x_{a:a'}`` and ``x_{a'}' M_{a'a'}^{-1} x_{a'}`` on the active face.
    """
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    r, p = x.shape
    if p > BATCH_ENUMERATION_MAX_P:
        return _batch_orthant_projection(x, m)
    faces = np.zeros(r, dtype=np.int64)
    hits = np.zeros(r, dtype=np.int64)
    sq_norm = np.zeros(r)
    sq_resid = np.zeros(r)
    for a in all_subsets(p):
        ai, ci = list(a.a), list(a.complement)
        ok = np.ones(r, dtype=bool)
        q_norm = np.zeros(r)
        q_resid = np.zeros(r)
        if ci:
            m_cc = m[:, ci][:, :, ci]
            v = _bsolve(m_cc, x[:, ci])
            ok &= np.all(v <= 0.0, axis=1)
            q_resid = np.einsum("ri,ri->r", x[:, ci], v)
        if ai:
            if ci:
                m_ac = m[:, ai][:, :, ci]
                reg = x[:, ai] - np.einsum("rij,rj->ri", m_ac, v)
                sch = m[:, ai][:, :, ai] - m_ac @ np.linalg.solve(m_cc, np.swapaxes(m_ac, 1, 2))
            else:
                reg = x
                sch = m
            ok &= np.all(reg > 0.0, axis=1)
            q_norm = np.einsum("ri,ri->r", reg, _bsolve(sch, reg))
        bits = sum(1 << j for j in ai)
        faces[ok] = bits
        sq_norm[ok] = q_norm[ok]
        sq_resid[ok] = q_resid[ok]
        hits += ok
    bad = np.flatnonzero(hits != 1)
    if bad.size:
        f, qn, qr = _batch_orthant_projection(x[bad], m[bad])
        faces[bad], sq_norm[bad], sq_resid[bad] = f, qn, qr
    return faces, sq_norm, sq_resid


def _batch_orthant_projection(x, m):
    r, p = x.shape
    faces = np.zeros(r, dtype=np.int64)
    sq_norm = np.zeros(r)
    sq_resid = np.zeros(r)
    weights = 1 << np.arange(p)
    for i in range(r):
        res = project(x[i], Metric(SymPD(0.5 * (m[i] + m[i].T))), Cone.orthant(p), Algorithm.ACTIVE_SET)
        faces[i] = int(weights[res.face.mask()].sum())
        sq_norm[i], sq_resid[i] = res.sq_norm, res.sq_resid
    return faces, sq_norm, sq_resid


def batch_halfspace(x, m):
    """Half-space analogue of :func:`batch_orthant` (face bitmask, norm, residual)."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    r, p = x.shape
    total = np.einsum("ri,ri->r", x, _bsolve(m, x))
    resid = np.where(x[:, -1] > 0.0, 0.0, x[:, -1] ** 2 / m[:, -1, -1])
    full = (1 << p) - 1
    faces = np.where(x[:, -1] > 0.0, full, full ^ (1 << (p - 1)))
    if p == 1:
        sq_norm = np.where(x[:, -1] > 0.0, total, 0.0)
    else:
        # x_{P1:p}' M_{P1P1:p}^{-1} x_{P1:p}, formed directly from the Schur complement
        col = m[:, :-1, -1]
        reg = x[:, :-1] - col * (x[:, -1] / m[:, -1, -1])[:, None]
        sch = m[:, :-1, :-1] - np.einsum("ri,rj->rij", col, col) / m[:, -1, -1][:, None, None]
        reduced = np.einsum("ri,ri->r", reg, _bsolve(sch, reg))
        sq_norm = np.where(x[:, -1] > 0.0, total, reduced)
    return faces, sq_norm, resid


def face_sizes(faces) -> np.ndarray:
    """Number of set bits in each face bitmask."""
    faces = np.asarray(faces, dtype=np.int64)
    out = np.zeros(faces.shape, dtype=np.int64)
    f = faces.copy()
    while np.any(f):
        out += f & 1
        f >>= 1
    return out
