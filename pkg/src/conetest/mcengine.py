"""Monte Carlo experiments for cone-restricted tests.

Every experiment returns a plain-dict report carrying its parameters, a
fingerprint of those parameters, the seed, the numeric results and a list of
named assertions. Replicates are simulated in fixed-size blocks on derived
random streams (see :mod:`conetest.parallel`), so reports are reproducible
bit-for-bit and independent of the worker count.

Decision bands are 3 binomial standard errors throughout.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bayesweights as bw
from . import nulldist as nd
from .cones import Cone, ConeKind
from .errors import DomainError
from .matkit import SeedSpec, SymPD, as_sympd, batch_chol, derive_stream, random_pd, sample_inv_wishart, sample_summaries
from .nulldist import TestKind
from .parallel import map_blocks
from .teststats import batch_statistics

SCHEMA = 1
SIM_BLOCK = 4096
Z_BAND = 3.0

# child-stream ids keep independent parts of one experiment apart
_STREAM_SIM = 1
_STREAM_WEIGHTS = 2
_STREAM_SIGMAS = 3
_STREAM_GEOMETRY = 4
_STREAM_PRIOR = 5


# --------------------------------------------------------------------------
# Specs and plain-data helpers
# --------------------------------------------------------------------------


def _tuplify(a):
    if a is None:
        return ()
    return tuple(tuple(float(v) for v in row) for row in np.atleast_2d(np.asarray(a, dtype=float))) if np.size(a) else ()


@dataclass(frozen=True)
class ExperimentSpec:
    """Parameters of one simulated test configuration.

    ``sigma`` defaults to the identity; ``thetas`` is a tuple of mean
    vectors (empty for null-only runs).
    """

    kind: str = "uit"
    cone: str = "orthant"
    n: int = 12
    p: int = 2
    sigma: tuple = ()
    thetas: tuple = ()
    alpha: float = 0.05
    reps: int = 10_000
    seed: int = 0
    critmethod: str = "max"
    prior_m: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TestKind(self.kind).value)
        object.__setattr__(self, "cone", ConeKind(self.cone).value)
        object.__setattr__(self, "sigma", _tuplify(self.sigma) or _tuplify(np.eye(self.p)))
        object.__setattr__(self, "thetas", _tuplify(self.thetas))
        if self.reps < 1000:
            raise DomainError("experiments need reps >= 10^3")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if self.n < self.p + 2:
            raise DomainError("need n >= p + 2")
        if self.critmethod not in ("max", "bayes"):
            raise DomainError("critmethod must be 'max' or 'bayes'")
        if len(self.sigma) != self.p or any(len(t) != self.p for t in self.thetas):
            raise DomainError("sigma/theta dimensions disagree with p")

    @property
    def sigma_array(self) -> np.ndarray:
        return np.array(self.sigma)

    @property
    def statistic(self) -> str:
        return f"{self.kind}_{self.cone}"

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def fingerprint(params) -> str:
    blob = json.dumps(_plain(params), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def binom_se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def _assertion(name, passed, **detail):
    return {"name": name, "passed": bool(passed), **_plain(detail)}


def _report(experiment, params, results, assertions):
    params = _plain(params)
    return {
        "schema": SCHEMA,
        "experiment": experiment,
        "fingerprint": fingerprint({"experiment": experiment, **params}),
        "seed": params.get("seed"),
        "params": params,
        "results": _plain(results),
        "assertions": assertions,
        "passed": all(a["passed"] for a in assertions),
    }


# --------------------------------------------------------------------------
# Sigma families
# --------------------------------------------------------------------------


def equicorrelation(p: int, rho: float) -> np.ndarray:
    s = np.full((p, p), float(rho))
    np.fill_diagonal(s, 1.0)
    return s


def concentrating_sigma(p: int, k: int) -> np.ndarray:
    """Member ``k`` of the sequence approaching the least-favourable null.

    Equicorrelation with ``rho_0 = 0`` and ``rho_k = 1 - 10^{-k}``: as
    ``rho -> 1`` the face-size law tends to mass 1/2 on sizes ``p - 1`` and
    ``p``, where the orthant rejection rate attains its supremum.
    """
    return equicorrelation(p, 0.0 if k == 0 else 1.0 - 10.0 ** (-k))


def random_sigmas(p: int, count: int, seed: SeedSpec) -> list:
    base = derive_stream(seed, _STREAM_SIGMAS)
    return [random_pd(p, derive_stream(base, i).generator()) for i in range(count)]


def m_matrix_inverse(p: int, off: float = 0.4) -> np.ndarray:
    """Correlation matrix whose inverse is a tridiagonal M-matrix (all entries >= 0)."""
    m = np.eye(p) * 1.0
    for i in range(p - 1):
        m[i, i + 1] = m[i + 1, i] = -off
    s = np.linalg.inv(m)
    d = 1.0 / np.sqrt(np.diag(s))
    s = s * d[:, None] * d[None, :]
    return 0.5 * (s + s.T)


def alternative_grid(p: int, count: int, seed: int = 0) -> list:
    """``theta = 0`` followed by orthant points on random rays at norms 0.2 to 1.2."""
    rng = np.random.default_rng(seed)
    mags = np.linspace(0.2, 1.2, 4)
    pts = [tuple([0.0] * p)]
    while len(pts) < count:
        d = np.abs(rng.standard_normal(p))
        d /= np.linalg.norm(d)
        pts.append(tuple(float(v) for v in mags[(len(pts) - 1) % 4] * d))
    return pts


# --------------------------------------------------------------------------
# Simulation primitives
# --------------------------------------------------------------------------


def simulate(n: int, theta, sigma, reps: int, seed: SeedSpec, which=("orthant", "halfspace"),
             workers: int | None = None) -> dict:
    """Statistics of ``reps`` datasets of size ``n`` from ``N_p(theta, sigma)``.

    All statistics come from the same replicates (common random numbers).
    """
    sigma = as_sympd(sigma)
    chol = sigma.chol
    theta = np.zeros(sigma.dim) if theta is None else np.asarray(theta, dtype=float)

    def work(i, size):
        rng = derive_stream(seed, i).generator()
        means, covs = sample_summaries(n, theta, chol, size, rng)
        return batch_statistics(n, means, covs, which)

    parts = map_blocks(work, reps, SIM_BLOCK, workers)
    return {k: np.concatenate([d[k] for d in parts]) for k in parts[0]}


def simulate_compound(n: int, prior: "bw.InvWishartPrior", reps: int, seed: SeedSpec,
                      which=("orthant",), workers: int | None = None) -> dict:
    """Null statistics with a fresh ``Sigma`` drawn from ``prior`` for every replicate."""
    p = prior.gamma.dim

    def work(i, size):
        rng = derive_stream(seed, i).generator()
        sig = sample_inv_wishart(prior.gamma, prior.m, size, rng)
        means, covs = sample_summaries(n, np.zeros(p), batch_chol(sig), size, rng)
        return batch_statistics(n, means, covs, which)

    parts = map_blocks(work, reps, SIM_BLOCK, workers)
    return {k: np.concatenate([d[k] for d in parts]) for k in parts[0]}


def critical_value(spec: ExperimentSpec, workers=None, weight_reps: int = 100_000):
    """Critical value for ``spec`` plus a description of how it was obtained."""
    if spec.critmethod == "max":
        c = nd.critval_max(spec.kind, spec.cone, spec.alpha, spec.n, spec.p)
        return c, {"method": "max"}
    m = spec.prior_m or spec.p + 2
    prior = bw.InvWishartPrior(SymPD(np.eye(spec.p)), m)
    seed = derive_stream(SeedSpec(spec.seed), _STREAM_PRIOR)
    weights = bw.bayes_weights(prior, spec.n, spec.p, reps=weight_reps, seed=seed, workers=workers)
    c = bw.critval_bayes(spec.kind, spec.alpha, weights)
    return c, {"method": "bayes", "prior": prior.label, "b": weights.b, "b_se": weights.se}


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


def default_c_grid(kind, weights, n, p, levels=(0.5, 0.4, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05, 0.025, 0.01)):
    """c values at which the mixture tail equals each of ``levels``."""
    return [nd.solve_critical(lambda c: nd.mixture_tail(kind, weights, c, n, p), lv) for lv in levels]


def validate_null(spec: ExperimentSpec, c_grid=None, workers=None, weight_reps: int = 1_000_000) -> dict:
    """Compare simulated null tails of the LRT and UIT with the chi-bar mixtures.

    The band at each ``c`` is 3 standard errors of the difference, combining
    the binomial error of the empirical tail with the multinomial error of
    the estimated weights.
    """
    seed = SeedSpec(spec.seed)
    sigma = spec.sigma_array
    sims = simulate(spec.n, None, sigma, spec.reps, derive_stream(seed, _STREAM_SIM), (spec.cone,), workers)
    weights = nd.mixture_weights(sigma, weight_reps, derive_stream(seed, _STREAM_WEIGHTS), workers)
    w = weights.w
    rows, flagged = [], 0
    for kind in (TestKind.LRT, TestKind.UIT):
        stat = sims[f"{kind.value}_{spec.cone}"]
        grid = c_grid if c_grid is not None else default_c_grid(kind, w, spec.n, spec.p)
        for c in grid:
            comp = np.array([nd.component_tail(kind, spec.n, k, spec.p, c) for k in range(spec.p + 1)])
            mix = float(w @ comp)
            emp = float(np.mean(stat >= c))
            se_emp = binom_se(emp, spec.reps)
            se_mix = math.sqrt(max(float(w @ comp**2) - mix**2, 0.0) / weights.reps)
            se = math.hypot(se_emp, se_mix)
            dev = abs(emp - mix)
            bad = dev > Z_BAND * se if se > 0 else dev > 0.0
            flagged += bad
            rows.append({"kind": kind.value, "c": c, "empirical": emp, "mixture": mix,
                         "se_empirical": se_emp, "se_mixture": se_mix, "z": dev / se if se else 0.0,
                         "flagged": bad})
    max_dev = max(abs(r["empirical"] - r["mixture"]) for r in rows)
    assertions = [_assertion("null tails match mixture within 3 SE", flagged == 0, flagged=flagged, max_abs_dev=max_dev)]
    results = {"weights": w, "weights_se": weights.se, "weight_reps": weights.reps, "rows": rows,
               "max_abs_dev": max_dev, "flagged": flagged}
    return _report("null", spec.to_dict(), results, assertions)


@dataclass(frozen=True)
class PowerCurve:
    grid: list
    meta: str
    critical_value: float = float("nan")
    statistic: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        p = len(self.grid[0][0]) if self.grid else 0
        w.writerow([f"theta{j + 1}" for j in range(p)] + ["power", "se", "fingerprint"])
        for theta, pw, se in self.grid:
            w.writerow([f"{v:.17g}" for v in theta] + [f"{pw:.17g}", f"{se:.17g}", self.meta])
        return buf.getvalue()


def power_curve(spec: ExperimentSpec, workers=None) -> PowerCurve:
    """Estimated rejection rate at each ``theta`` in the experiment's grid.

    Every grid point reuses the same random stream, so curves compare
    tests and parameters under common random numbers.
    """
    cone = Cone(spec.cone, spec.p)
    for th in spec.thetas:
        if not cone.contains(th):
            raise DomainError(f"theta {th} lies outside the {spec.cone} alternative")
    c, _ = critical_value(spec, workers)
    seed = derive_stream(SeedSpec(spec.seed), _STREAM_SIM)
    grid = []
    for th in spec.thetas:
        stat = simulate(spec.n, th, spec.sigma_array, spec.reps, seed, (spec.cone,), workers)[spec.statistic]
        pw = float(np.mean(stat >= c))
        grid.append((tuple(th), pw, binom_se(pw, spec.reps)))
    return PowerCurve(grid=grid, meta=spec.fingerprint(), critical_value=c, statistic=spec.statistic)


def domination_report(spec_a: ExperimentSpec, spec_b: ExperimentSpec, workers=None) -> dict:
    """Orthant test A against half-space test B of the same kind on a shared grid."""
    same = ("kind", "n", "p", "sigma", "alpha", "reps", "seed", "thetas")
    if spec_a.cone != "orthant" or spec_b.cone != "halfspace":
        raise DomainError("spec_a must be an orthant test and spec_b a half-space test")
    if any(getattr(spec_a, f) != getattr(spec_b, f) for f in same):
        raise DomainError("specs differ in more than the cone")
    if spec_a.critmethod != "max" or spec_b.critmethod != "max":
        raise DomainError("domination is defined for max-principle critical values")
    c_a, _ = critical_value(spec_a)
    c_b, _ = critical_value(spec_b)
    seed = derive_stream(SeedSpec(spec_a.seed), _STREAM_SIM)
    rows, path_viol, total = [], 0, 0
    for th in spec_a.thetas:
        sims = simulate(spec_a.n, th, spec_a.sigma_array, spec_a.reps, seed, ("orthant", "halfspace"), workers)
        sa, sb = sims[spec_a.statistic], sims[spec_b.statistic]
        # relative slack for rounding only; the inequality is pathwise exact
        path_viol += int(np.sum(sb < sa - 1e-9 * np.maximum(1.0, sa)))
        total += sa.size
        ra, rb = sa >= c_a, sb >= c_b
        pa, pb = float(ra.mean()), float(rb.mean())
        d = float(np.mean(rb & ~ra))
        se_d = binom_se(d, spec_a.reps)
        rows.append({"theta": th, "power_a": pa, "power_b": pb, "se_a": binom_se(pa, spec_a.reps),
                     "se_b": binom_se(pb, spec_a.reps), "se_diff": se_d,
                     "dominated": pb >= pa - Z_BAND * binom_se(pa, spec_a.reps),
                     "strict": (pb - pa) > Z_BAND * se_d})
    assertions = [
        _assertion("shared critical value", abs(c_a - c_b) <= 1e-9, c_a=c_a, c_b=c_b),
        _assertion("pathwise dominance on every replicate", path_viol == 0, violations=path_viol, replicates=total),
        _assertion("power_B >= power_A - 3 SE at every grid point", all(r["dominated"] for r in rows)),
        _assertion("at least one strict domination point", any(r["strict"] for r in rows),
                   strict_points=sum(r["strict"] for r in rows)),
    ]
    zero = [r for r in rows if not np.any(r["theta"])]
    for r in zero:
        assertions.append(_assertion("size bound at theta = 0",
                                     max(r["power_a"], r["power_b"]) <= spec_a.alpha + Z_BAND * binom_se(spec_a.alpha, spec_a.reps),
                                     power_a=r["power_a"], power_b=r["power_b"]))
    params = {"a": spec_a.to_dict(), "b": spec_b.to_dict(), "seed": spec_a.seed}
    results = {"c_a": c_a, "c_b": c_b, "rows": rows, "pathwise_violations": path_viol, "replicates": total,
               "pathwise_fraction": 1.0 - path_viol / total if total else 1.0}
    return _report("domination", params, results, assertions)


def similarity_and_bias(kind, n, p, sigmas, thetas, alpha=0.05, reps=100_000, seed=0, workers=None) -> dict:
    """Half-space null rejection across ``sigmas``; orthant bias witnesses over ``(theta, sigma)``.

    A bias witness is a ``theta`` in the orthant with power below
    ``alpha - 3 SE``. Witnesses are reported, not asserted.
    """
    kind = TestKind(kind)
    sigmas = [np.asarray(s, dtype=float) for s in sigmas]
    thetas = [tuple(map(float, t)) for t in thetas]
    params = {"kind": kind.value, "n": n, "p": p, "sigmas": sigmas, "thetas": thetas, "alpha": alpha,
              "reps": reps, "seed": seed}
    if not sigmas or not thetas:
        return _report("similarity", params, {"halfspace": [], "bias_witnesses": []}, [])
    c = nd.critval_max(kind, "halfspace", alpha, n, p)
    band = Z_BAND * binom_se(alpha, reps)
    base = derive_stream(SeedSpec(seed), _STREAM_SIM)
    half, witnesses = [], []
    for i, s in enumerate(sigmas):
        stream = derive_stream(base, i)
        sims = simulate(n, None, s, reps, stream, ("halfspace", "orthant"), workers)
        rate = float(np.mean(sims[f"{kind.value}_halfspace"] >= c))
        half.append({"sigma_index": i, "rate": rate, "se": binom_se(rate, reps),
                     "orthant_null_rate": float(np.mean(sims[f"{kind.value}_orthant"] >= c)),
                     "within_band": abs(rate - alpha) <= band})
        for th in thetas:
            st = simulate(n, th, s, reps, stream, ("orthant",), workers)[f"{kind.value}_orthant"]
            pw = float(np.mean(st >= c))
            if pw < alpha - Z_BAND * binom_se(pw, reps):
                witnesses.append({"sigma_index": i, "theta": th, "power": pw, "se": binom_se(pw, reps)})
    max_dev = max(abs(h["rate"] - alpha) for h in half)
    assertions = [_assertion("half-space null rejection within 3 SE of alpha for every sigma",
                             all(h["within_band"] for h in half), max_dev=max_dev, band=band)]
    results = {"critical_value": c, "halfspace": half, "max_dev": max_dev, "bias_witnesses": witnesses,
               "bias_found": bool(witnesses)}
    return _report("similarity", params, results, assertions)


def _probe_covs(n, p, count, rng):
    """Sample covariances of varied shape and scale."""
    sig = np.stack([random_pd(p, rng) for _ in range(count)])
    z = rng.standard_normal((count, n - 1, p)) @ np.swapaxes(np.linalg.cholesky(sig), 1, 2)
    covs = np.einsum("rni,rnj->rij", z, z) / (n - 1)
    covs *= np.exp(rng.normal(0.0, 0.7, count))[:, None, None]
    return 0.5 * (covs + np.swapaxes(covs, 1, 2))


def _probe_means(covs, rng, c_scale):
    """Means in random directions at radii (in the ``S`` metric) up to 1.6 ``c_scale``."""
    count, p = covs.shape[:2]
    u = rng.standard_normal((count, p))
    u /= np.linalg.norm(u, axis=1)[:, None]
    radius = c_scale * rng.uniform(0.0, 1.6, count)
    return np.einsum("rij,rj->ri", np.linalg.cholesky(covs), u) * radius[:, None]


def _probe_candidates(n, p, count, rng, c_scale):
    """Random ``(x_bar, S)`` pairs spread around an acceptance boundary."""
    covs = _probe_covs(n, p, count, rng)
    return _probe_means(covs, rng, c_scale), covs


def _acceptance_stat(kind, n, means, covs):
    if kind == "t2":
        return batch_statistics(n, means, covs, ())["t2"]
    cone = kind.split("-")[1]
    return batch_statistics(n, means, covs, (cone,))[f"uit_{cone}"]


def geometry_probe(kind: str, n: int, p: int, trials: int, seed: int, alpha: float = 0.05) -> dict:
    """Empirical acceptance-region geometry.

    (i) midpoint convexity in the joint ``(x_bar, S)`` space; (ii) points of
    the polar cone give a zero UIT statistic and are accepted; (iii) along
    polar-cone rays the bounded T^2 region is eventually left while the UIT
    still accepts.
    """
    if kind not in ("uit-orthant", "uit-halfspace", "t2"):
        raise DomainError(f"unknown geometry probe kind {kind!r}")
    if trials < 1000:
        raise DomainError("geometry probes need trials >= 10^3")
    rng = derive_stream(SeedSpec(seed), _STREAM_GEOMETRY).generator()
    t2c = nd.t2_critical(alpha, n, p)
    cone = "orthant" if kind == "t2" else kind.split("-")[1]
    uc = nd.critval_max("uit", cone, alpha, n, p)
    crit = t2c if kind == "t2" else uc
    # U in the scatter metric is T^2/(n-1) on the full face, so the boundary radius
    # in S units is sqrt(c (n-1)/n) for the UIT and sqrt(c/n) for T^2
    c_scale = math.sqrt(crit / n) if kind == "t2" else math.sqrt(crit * (n - 1) / n)

    # (i) convexity: collect accepted points, pair them, test midpoints
    acc_m, acc_s, have = [], [], 0
    while have < 2 * trials:
        m, s = _probe_candidates(n, p, 4096, rng, c_scale)
        ok = _acceptance_stat(kind, n, m, s) <= crit
        acc_m.append(m[ok])
        acc_s.append(s[ok])
        have += int(ok.sum())
    am = np.concatenate(acc_m)[: 2 * trials]
    ac = np.concatenate(acc_s)[: 2 * trials]
    mid_m = 0.5 * (am[0::2] + am[1::2])
    mid_s = 0.5 * (ac[0::2] + ac[1::2])
    mid_stat = _acceptance_stat(kind, n, mid_m, mid_s)
    excess = mid_stat - crit
    bad = excess > 1e-9 * crit
    violations = int(np.sum(bad))
    examples = []
    for i in np.flatnonzero(bad)[:3]:
        examples.append({"x1": am[2 * i], "s1": ac[2 * i], "x2": am[2 * i + 1], "s2": ac[2 * i + 1],
                         "midpoint_stat": mid_stat[i]})
    convexity = {"trials": trials, "violations": violations, "max_excess": float(np.max(excess)),
                 "critical_value": crit, "examples": examples}

    # (i') sections: both endpoints share S, so only x_bar is averaged
    sec_m, sec_s, have = [], [], 0
    while have < trials:
        m1, s = _probe_candidates(n, p, 4096, rng, c_scale)
        m2 = _probe_means(s, rng, c_scale)
        ok = (_acceptance_stat(kind, n, m1, s) <= crit) & (_acceptance_stat(kind, n, m2, s) <= crit)
        sec_m.append(0.5 * (m1[ok] + m2[ok]))
        sec_s.append(s[ok])
        have += int(ok.sum())
    sec_stat = _acceptance_stat(kind, n, np.concatenate(sec_m)[:trials], np.concatenate(sec_s)[:trials])
    sec_viol = int(np.sum(sec_stat - crit > 1e-9 * crit))
    section = {"trials": trials, "violations": sec_viol}

    # (ii) polar-cone points: S^{-1} x <= 0 (orthant) or x = -lambda S e_p (half-space)
    count = trials
    m, s = _probe_candidates(n, p, count, rng, c_scale)
    if cone == "orthant":
        u = -np.abs(rng.standard_normal((count, p))) * np.exp(rng.normal(0.0, 2.0, (count, 1)))
    else:
        u = np.zeros((count, p))
        u[:, -1] = -np.exp(rng.normal(0.0, 2.0, count))
    x = np.einsum("rij,rj->ri", s, u)
    stats_u = batch_statistics(n, x, s, (cone,))
    ustat = stats_u[f"uit_{cone}"]
    t2 = stats_u["t2"]
    zero = ustat <= 1e-10 * np.maximum(t2, 1.0)
    eaton = {"points": count, "zero_statistic": int(zero.sum()), "accepted": int(np.sum(ustat <= uc)),
             "t2_rejected": int(np.sum(t2 > t2c))}

    # (iii) rays t * S u, u in the polar cone: find where T^2 leaves its bounded region
    rays = []
    for i in range(min(5, count)):
        for scale in 2.0 ** np.arange(-4, 40):
            xr = (scale * x[i])[None, :]
            st = batch_statistics(n, xr, s[i][None], (cone,))
            if st["t2"][0] > t2c:
                rays.append({"ray": i, "scale": float(scale), "t2": float(st["t2"][0]),
                             "uit": float(st[f"uit_{cone}"][0]), "uit_accepts": bool(st[f"uit_{cone}"][0] <= uc)})
                break
    contrast = {"t2_critical": t2c, "uit_critical": uc, "escapes": rays,
                "found": any(r["uit_accepts"] for r in rays)}

    params = {"kind": kind, "n": n, "p": p, "trials": trials, "seed": seed, "alpha": alpha}
    assertions = [
        _assertion("zero joint (x_bar, S) midpoint convexity violations", violations == 0, violations=violations),
        _assertion("zero fixed-S midpoint convexity violations", sec_viol == 0, violations=sec_viol),
    ]
    if kind != "t2":
        assertions.append(_assertion("polar-cone points give U = 0 and are accepted",
                                     eaton["zero_statistic"] == count and eaton["accepted"] == count))
    assertions.append(_assertion("a polar-cone ray point accepted by the UIT is rejected by T^2", contrast["found"]))
    return _report("geometry", params, {"convexity": convexity, "section_convexity": section, "eaton": eaton, "t2_contrast": contrast}, assertions)


def sup_approach(kind, p: int, n: int, alpha: float, K: int, reps: int, seed: int, workers=None) -> dict:
    """Orthant null rejection at the fixed max-principle critical value along ``concentrating_sigma``."""
    if K < 3:
        raise DomainError("sup_approach needs K >= 3")
    kind = TestKind(kind)
    c = nd.critval_max(kind, "orthant", alpha, n, p)
    stream = derive_stream(SeedSpec(seed), _STREAM_SIM)
    rows = []
    for k in range(K):
        sig = concentrating_sigma(p, k)
        rate = float(np.mean(simulate(n, None, sig, reps, stream, ("orthant",), workers)[f"{kind.value}_orthant"] >= c))
        rows.append({"k": k, "rho": float(sig[0, 1]) if p > 1 else 0.0, "rate": rate, "se": binom_se(rate, reps)})
    mono = all(
        b["rate"] >= a["rate"] - Z_BAND * math.hypot(a["se"], b["se"]) for a, b in zip(rows, rows[1:])
    )
    band = Z_BAND * binom_se(alpha, reps)
    last = rows[-1]["rate"]
    assertions = [
        _assertion("rejection nondecreasing along the sequence within 3 SE", mono),
        _assertion("final rejection within 3 SE of alpha", abs(last - alpha) <= band, final=last, band=band),
        _assertion("rejection at Sigma = I below alpha", rows[0]["rate"] < alpha, rate=rows[0]["rate"]),
    ]
    params = {"kind": kind.value, "p": p, "n": n, "alpha": alpha, "K": K, "reps": reps, "seed": seed}
    return _report("supapproach", params, {"critical_value": c, "rows": rows}, assertions)


def fuit_size(p: int, n: int, sigma, alpha: float, reps: int, seed: int, workers=None) -> dict:
    """Null size of the Bonferroni orthant FUIT."""
    sigma = np.asarray(sigma, dtype=float)
    crit = nd.fuit_critical(alpha, n, p)
    stat = simulate(n, None, sigma, reps, derive_stream(SeedSpec(seed), _STREAM_SIM), (), workers)["fuit"]
    rate = float(np.mean(stat >= crit))
    se = binom_se(rate, reps)
    ok = rate <= alpha + Z_BAND * binom_se(alpha, reps)
    params = {"p": p, "n": n, "sigma": sigma, "alpha": alpha, "reps": reps, "seed": seed}
    return _report("fuit_size", params, {"critical_value": crit, "rate": rate, "se": se},
                   [_assertion("FUIT size <= alpha + 3 SE", ok, rate=rate)])


def bayes_calibration(kind, n: int, p: int, alpha: float, reps: int, seed: int, m: int = 0,
                      weight_reps: int = 200_000, workers=None) -> dict:
    """Compound-null rejection at the Bayes-weighted critical value (inverted Wishart prior)."""
    kind = TestKind(kind)
    prior = bw.InvWishartPrior(SymPD(np.eye(p)), m or p + 2)
    base = SeedSpec(seed)
    weights = bw.bayes_weights(prior, n, p, reps=weight_reps, seed=derive_stream(base, _STREAM_WEIGHTS), workers=workers)
    c = bw.critval_bayes(kind, alpha, weights)
    stat = simulate_compound(n, prior, reps, derive_stream(base, _STREAM_SIM), ("orthant",), workers)[f"{kind.value}_orthant"]
    rate = float(np.mean(stat >= c))
    band = Z_BAND * binom_se(alpha, reps)
    two_point = nd.MixtureWeights.exact(nd.max_principle_weights(p))
    c_deg = bw.critval_bayes(kind, alpha, two_point, n=n)
    c_max = nd.critval_max(kind, "orthant", alpha, n, p)
    params = {"kind": kind.value, "n": n, "p": p, "alpha": alpha, "reps": reps, "seed": seed, "m": prior.m,
              "weight_reps": weight_reps}
    assertions = [
        _assertion("compound-null rejection within 3 SE of alpha", abs(rate - alpha) <= band, rate=rate, band=band),
        _assertion("two-point weights reproduce critval_max", abs(c_deg - c_max) <= 1e-9, c_two_point=c_deg, c_max=c_max),
    ]
    results = {"b": weights.b, "b_se": weights.se, "critical_value": c, "rate": rate, "se": binom_se(rate, reps)}
    return _report("bayes", params, results, assertions)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2) + "\n"


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def curve_csv(report: dict) -> str | None:
    """One row per grid point for reports that carry a curve."""
    rows = report["results"].get("rows") if isinstance(report.get("results"), dict) else None
    if not rows:
        return None
    keys = [k for k in rows[0] if not isinstance(rows[0][k], (list, dict))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    has_theta = "theta" in rows[0]
    p = len(rows[0]["theta"]) if has_theta else 0
    w.writerow([f"theta{j + 1}" for j in range(p)] + keys + ["fingerprint"])
    for r in rows:
        vals = [f"{v:.17g}" for v in r["theta"]] if has_theta else []
        for k in keys:
            v = r[k]
            vals.append(f"{v:.17g}" if isinstance(v, float) else str(v))
        w.writerow(vals + [report["fingerprint"]])
    return buf.getvalue()


def write_report(report: dict, out_dir: str) -> list:
    """Write ``<experiment>-<fingerprint>.json`` (and ``.csv`` when there is a curve)."""
    base = os.path.join(out_dir, f"{report['experiment']}-{report['fingerprint']}")
    paths = [base + ".json"]
    atomic_write(paths[0], dumps(report))
    text = curve_csv(report)
    if text is not None:
        paths.append(base + ".csv")
        atomic_write(paths[1], text)
    return paths
