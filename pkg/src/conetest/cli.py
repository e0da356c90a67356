"""Command-line interface: ``conetest test | tables | experiment``.

Exit codes: 0 success, 2 usage or data error, 3 a statistical assertion of
an experiment failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import bayesweights as bw
from . import mcengine as mc
from . import nulldist as nd
from . import teststats as ts
from .cones import Cone, ConeKind
from .errors import ConeTestError, ConditioningError, DomainError
from .matkit import SampleStats, SeedSpec, SymPD, derive_stream, fresh_seed

SCHEMA = 1
EXIT_OK, EXIT_DATA, EXIT_STAT = 0, 2, 3
MAX_REPS = 10_000_000

_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class DataError(Exception):
    """Bad input data or arguments; maps to exit code 2."""


# --------------------------------------------------------------------------
# Input
# --------------------------------------------------------------------------


def parse_number(text: str) -> float:
    """Decimal with ``.`` radix and optional exponent; no locale forms, no inf/nan."""
    t = text.strip()
    if not _NUMBER.match(t):
        raise ValueError(f"not a decimal number: {text!r}")
    return float(t)


def read_matrix(text: str, source: str = "<input>") -> np.ndarray:
    """Parse CSV rows of numbers; a non-numeric first row is taken as a header."""
    rows = [r for r in csv.reader(io.StringIO(text))]
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{source}: no data rows")
    first_line, first = numbered[0]
    try:
        [parse_number(c) for c in first]
    except ValueError:
        numbered = numbered[1:]
        if not numbered:
            raise DataError(f"{source}: header but no data rows")
    width = len(numbered[0][1])
    out = []
    for line, row in numbered:
        if len(row) != width:
            raise DataError(f"{source}: line {line}: expected {width} columns, found {len(row)} (ragged row)")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                vals.append(parse_number(cell))
            except ValueError:
                raise DataError(f"{source}: line {line}, column {col}: non-numeric cell {cell!r}") from None
        out.append(vals)
    return np.array(out, dtype=float)


def load_dataset(path: str) -> SampleStats:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    x = read_matrix(text, path)
    n, p = x.shape
    if n < p + 2:
        raise DataError(f"{path}: n = {n} rows but p = {p} columns needs n >= p + 2 = {p + 2}")
    try:
        return SampleStats.from_data(x)
    except ConditioningError as e:
        raise DataError(f"{path}: sample covariance is singular ({e})") from None


def parse_prior(text: str | None, p: int) -> bw.InvWishartPrior:
    if text is None:
        return bw.InvWishartPrior.default(p)
    m = re.fullmatch(r"invwishart:m=(\d+)", text.strip())
    if not m:
        raise DataError(f"--prior must look like invwishart:m=<int>, got {text!r}")
    try:
        return bw.InvWishartPrior(SymPD(np.eye(p)), int(m.group(1)))
    except DomainError as e:
        raise DataError(str(e)) from None


def parse_sigma(text: str | None, p: int) -> np.ndarray:
    """``identity``, ``equi:<rho>``, ``mmatrix`` or a CSV file with a p x p matrix."""
    if text is None or text == "identity":
        return np.eye(p)
    if text.startswith("equi:"):
        try:
            rho = parse_number(text[5:])
        except ValueError:
            raise DataError(f"bad correlation in --sigma {text!r}") from None
        if not -1.0 / (p - 1 if p > 1 else 1) < rho < 1.0:
            raise DataError(f"equicorrelation {rho} is not positive definite for p={p}")
        return mc.equicorrelation(p, rho)
    if text == "mmatrix":
        return mc.m_matrix_inverse(p)
    try:
        with open(text, encoding="utf-8", newline="") as fh:
            m = read_matrix(fh.read(), text)
    except OSError as e:
        raise DataError(f"cannot read {text}: {e.strerror}") from None
    if m.shape != (p, p):
        raise DataError(f"{text}: expected a {p}x{p} matrix, got {m.shape[0]}x{m.shape[1]}")
    try:
        SymPD(m)
    except ConeTestError as e:
        raise DataError(f"{text}: {e}") from None
    return m


def parse_list(text: str, conv, name: str) -> list:
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DataError(f"bad value in --{name} {text!r}") from None


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def emit(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        mc.atomic_write(out, text)


def _json(obj) -> str:
    return json.dumps(mc._plain(obj), sort_keys=True, indent=2) + "\n"


def _flat_csv(record: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = sorted(record)
    w.writerow(keys)
    w.writerow([json.dumps(mc._plain(record[k])) if isinstance(record[k], (list, dict)) else record[k] for k in keys])
    return buf.getvalue()


# --------------------------------------------------------------------------
# test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    kind: str
    cone: str
    alpha: float
    critmethod: str = "max"
    prior: str | None = None
    reps: int = 100_000
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DataError(f"--alpha must lie in (0, 1), got {self.alpha}")
        if self.kind == "t2" and self.cone != "global":
            raise DataError("--kind t2 goes with --cone global")
        if self.kind != "t2" and self.cone == "global":
            raise DataError(f"--kind {self.kind} needs --cone orthant or halfspace (global alternative: --kind t2)")
        if self.critmethod == "bayes" and self.kind not in ("lrt", "uit"):
            raise DataError("--critmethod bayes applies to --kind lrt or uit")
        if self.critmethod == "bayes" and self.cone != "orthant":
            raise DataError("--critmethod bayes applies to the orthant (the half-space level is already exact)")
        if not 10_000 <= self.reps <= MAX_REPS and self.critmethod == "bayes":
            raise DataError(f"--reps must lie in [10^4, {MAX_REPS}] for Bayes weights")


def run_test(stats: SampleStats, cfg: RunConfig) -> dict:
    n, p = stats.n, stats.p
    cone = Cone(cfg.cone, p)
    out = {"schema": SCHEMA, "kind": cfg.kind, "cone": cfg.cone, "n": n, "p": p, "alpha": cfg.alpha,
           "critmethod": cfg.critmethod}
    if cfg.kind == "t2":
        res = ts.hotelling_t2(stats)
        crit = nd.t2_critical(cfg.alpha, n, p)
        pv, conservative = nd.t2_pvalue(res.value, n, p), False
        reject = res.value >= crit
    elif cfg.kind == "fuit":
        res = ts.fuit(stats, cone)
        crit = nd.fuit_critical(cfg.alpha, n, p)
        reject = ts.fuit_reject(res, cfg.alpha, n)
        vec = np.asarray(res.components["tested"])
        tails = sps.t.sf(vec, n - 1)
        if cone.kind is ConeKind.HALFSPACE:
            tails[:-1] *= 2.0
            out["critical_value_two_sided"] = float(sps.t.isf(cfg.alpha / p / 2.0, n - 1))
        pv, conservative = float(min(1.0, p * tails.min())), True
        out["t"] = res.components["t"]
    else:
        res = ts.uit(stats, cone) if cfg.kind == "uit" else ts.lrt(stats, cone)
        if cfg.critmethod == "bayes":
            seed = cfg.seed if cfg.seed is not None else fresh_seed()
            prior = parse_prior(cfg.prior, p)
            weights = bw.bayes_weights(prior, n, p, reps=cfg.reps, seed=derive_stream(SeedSpec(seed), 5))
            crit = bw.critval_bayes(cfg.kind, cfg.alpha, weights)
            pv, conservative = bw.bayes_pvalue(cfg.kind, res.value, weights), False
            out.update(seed=seed, prior=prior.label, reps=cfg.reps, weights=weights.w)
        else:
            crit = nd.critval_max(cfg.kind, cfg.cone, cfg.alpha, n, p)
            pvr = nd.sup_pvalue(cfg.kind, cfg.cone, res.value, n, p)
            pv, conservative = pvr.value, pvr.conservative
        reject = res.value >= crit
    out.update(value=res.value, face=res.face.one_based(), critical_value=crit,
               decision="reject" if reject else "accept", p_value=pv, conservative=conservative)
    return out


def cmd_test(args) -> int:
    if not args.input:
        raise DataError("test needs --input <csv>")
    cfg = RunConfig(args.kind, args.cone, args.alpha, args.critmethod, args.prior, args.reps or 100_000, args.seed)
    stats = load_dataset(args.input)
    try:
        result = run_test(stats, cfg)
    except DomainError as e:
        raise DataError(str(e)) from None
    emit(_json(result) if args.format == "json" else _flat_csv(result), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------


def cmd_tables(args) -> int:
    p, n = args.p, args.n
    if p < 1 or (n is not None and n < p + 2):
        raise DataError("need p >= 1 and n >= p + 2")
    seed = args.seed if args.seed is not None else fresh_seed()
    reps = args.reps or 100_000
    if not 10_000 <= reps <= MAX_REPS:
        raise DataError(f"--reps must lie in [10^4, {MAX_REPS}]")
    if args.table == "weights":
        if args.critmethod == "bayes":
            if n is None:
                raise DataError("Bayes weights need --n")
            prior = parse_prior(args.prior, p)
            w = bw.bayes_weights(prior, n, p, reps=reps, seed=SeedSpec(seed))
            text = w.to_csv({"n": n, "seed": seed})
        else:
            w = nd.mixture_weights(parse_sigma(args.sigma, p), reps, SeedSpec(seed))
            text = w.to_csv({"seed": seed})
        emit(text, args.out)
        return EXIT_OK
    if n is None:
        raise DataError("critical-value tables need --n")
    alphas = parse_list(args.alphas, parse_number, "alphas")
    if not alphas or any(not 0.0 < a < 1.0 for a in alphas):
        raise DataError("--alphas must be values in (0, 1)")
    kinds = [args.kind] if args.kind in ("lrt", "uit") else ["lrt", "uit"]
    header = ["alpha"] + kinds + ["method", "n", "p"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.critmethod == "bayes":
        prior = parse_prior(args.prior, p)
        weights = bw.bayes_weights(prior, n, p, reps=reps, seed=SeedSpec(seed))
        method = f"bayes:{prior.label}:reps={reps}:seed={seed}"
        solve = lambda k, a: bw.critval_bayes(k, a, weights)
    else:
        method = "max"
        solve = lambda k, a: nd.critval_max(k, "orthant", a, n, p)
    w.writerow(header)
    for a in sorted(alphas):
        try:
            row = [solve(k, a) for k in kinds]
        except DomainError as e:
            raise DataError(str(e)) from None
        w.writerow([repr(a)] + [f"{c:.17g}" for c in row] + [method, n, p])
    emit(buf.getvalue(), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------


def cmd_experiment(args) -> int:
    name = args.name
    seed = args.seed if args.seed is not None else fresh_seed()
    p, n, alpha = args.p, args.n or args.p + 10, args.alpha
    reps = args.reps or 20_000
    kind = args.kind if args.kind in ("lrt", "uit") else "uit"
    if not 1000 <= reps <= MAX_REPS:
        raise DataError(f"--reps must lie in [10^3, {MAX_REPS}]")
    sigma = parse_sigma(args.sigma, p)
    try:
        if name == "null":
            spec = mc.ExperimentSpec(kind=kind, cone=args.cone if args.cone != "global" else "orthant",
                                     n=n, p=p, sigma=sigma, alpha=alpha, reps=reps, seed=seed)
            report = mc.validate_null(spec)
        elif name in ("power", "domination"):
            grid = mc.alternative_grid(p, args.points)
            common = dict(kind=kind, n=n, p=p, sigma=sigma, thetas=grid, alpha=alpha, reps=reps, seed=seed)
            a = mc.ExperimentSpec(cone="orthant", **common)
            b = mc.ExperimentSpec(cone="halfspace", **common)
            report = mc.domination_report(a, b)
        elif name == "similarity":
            sigmas = mc.random_sigmas(p, args.trials or 10, SeedSpec(seed))
            thetas = mc.alternative_grid(p, 9)[1:]
            report = mc.similarity_and_bias(kind, n, p, sigmas, thetas, alpha, reps, seed)
        elif name == "geometry":
            gk = {"orthant": "uit-orthant", "halfspace": "uit-halfspace", "global": "t2"}[args.cone]
            report = mc.geometry_probe(gk, n, p, args.trials or 10_000, seed, alpha)
        elif name == "supapproach":
            report = mc.sup_approach(kind, p, n, alpha, args.K, reps, seed)
        elif name == "fuit":
            report = mc.fuit_size(p, n, sigma, alpha, reps, seed)
        elif name == "bayes":
            m = parse_prior(args.prior, p).m
            report = mc.bayes_calibration(kind, n, p, alpha, reps, seed, m)
        else:
            raise DataError(f"unknown experiment {name!r}")
    except DomainError as e:
        raise DataError(str(e)) from None
    paths = mc.write_report(report, args.out or "reports")
    summary = {"schema": SCHEMA, "experiment": name, "fingerprint": report["fingerprint"], "seed": seed,
               "passed": report["passed"], "files": paths,
               "assertions": [{"name": a["name"], "passed": a["passed"]} for a in report["assertions"]]}
    sys.stdout.write(_json(summary))
    return EXIT_OK if report["passed"] else EXIT_STAT


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

EXPERIMENTS = ("null", "power", "domination", "similarity", "geometry", "supapproach", "fuit", "bayes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conetest", description="Tests of a normal mean against cone alternatives.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--kind", choices=["t2", "lrt", "uit", "fuit"], default="uit")
        sp.add_argument("--cone", choices=["global", "orthant", "halfspace"], default="orthant")
        sp.add_argument("--critmethod", choices=["max", "bayes"], default="max")
        sp.add_argument("--prior", help="invwishart:m=<int> (scale matrix I)")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=["json", "csv"], default="json")

    t = sub.add_parser("test", help="run one test on a CSV dataset")
    common(t)
    t.add_argument("--input")

    tb = sub.add_parser("tables", help="mixture-weight or critical-value tables (CSV)")
    common(tb)
    tb.add_argument("--table", choices=["weights", "critvals"], default="critvals")
    tb.add_argument("--p", type=int, default=2)
    tb.add_argument("--n", type=int)
    tb.add_argument("--sigma")
    tb.add_argument("--alphas", default="0.01,0.025,0.05,0.1")

    ex = sub.add_parser("experiment", help="run a Monte Carlo experiment and write its report")
    common(ex)
    ex.add_argument("name")
    ex.add_argument("--p", type=int, default=2)
    ex.add_argument("--n", type=int)
    ex.add_argument("--sigma")
    ex.add_argument("--trials", type=int)
    ex.add_argument("--K", type=int, default=5)
    ex.add_argument("--points", type=int, default=20)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_DATA
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("conetest: error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_DATA
    handler = {"test": cmd_test, "tables": cmd_tables, "experiment": cmd_experiment}[args.command]
    try:
        return handler(args)
    except DataError as e:
        print(f"conetest: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ConeTestError as e:
        print(f"conetest: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
