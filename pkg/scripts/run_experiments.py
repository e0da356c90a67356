"""Run the full desk-scale experiment set and write reports.

    python3 scripts/run_experiments.py --out reports --seed 271828

Each experiment writes ``<name>-<fingerprint>.json`` (and a ``.csv`` curve
where there is one) into ``--out``. A one-line summary per report goes to
stdout; the exit status is 3 if any statistical assertion failed.
"""
import argparse
import sys
import time

import numpy as np

from conetest import mcengine as mc
from conetest.matkit import SeedSpec, derive_stream


def experiments(seed: int, reps: int):
    for idx, (p, n) in enumerate([(2, 12), (3, 20)]):
        for j, sigma in enumerate(mc.random_sigmas(p, 5, derive_stream(SeedSpec(seed), idx))):
            spec = mc.ExperimentSpec(kind="uit", cone="orthant", n=n, p=p, sigma=sigma, reps=reps,
                                     seed=seed + 10 * idx + j)
            yield lambda spec=spec: mc.validate_null(spec)
    for kind in ("uit", "lrt"):
        common = dict(kind=kind, n=12, p=2, thetas=mc.alternative_grid(2, 20), reps=reps, seed=seed)
        yield lambda common=common: mc.domination_report(mc.ExperimentSpec(cone="orthant", **common),
                                                         mc.ExperimentSpec(cone="halfspace", **common))
    sigmas = mc.random_sigmas(3, 10, derive_stream(SeedSpec(seed), 5))
    for kind in ("lrt", "uit"):
        yield lambda kind=kind: mc.similarity_and_bias(kind, 15, 3, sigmas, mc.alternative_grid(3, 5)[1:],
                                                       0.05, reps, seed)
    for p in (2, 3):
        yield lambda p=p: mc.sup_approach("uit", p, 12, 0.05, 5, reps, seed)
    for p in (2, 5):
        for sigma in (np.eye(p), mc.m_matrix_inverse(p)):
            yield lambda p=p, sigma=sigma: mc.fuit_size(p, 12, sigma, 0.05, reps, seed)
    for kind in ("uit", "lrt"):
        yield lambda kind=kind: mc.bayes_calibration(kind, 12, 2, 0.05, reps, seed)
    for kind in ("uit-orthant", "uit-halfspace", "t2"):
        yield lambda kind=kind: mc.geometry_probe(kind, 12, 2, 10_000, seed)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="reports")
    ap.add_argument("--seed", type=int, default=271828)
    ap.add_argument("--reps", type=int, default=100_000)
    args = ap.parse_args(argv)
    failed = 0
    for run in experiments(args.seed, args.reps):
        t0 = time.time()
        report = run()
        paths = mc.write_report(report, args.out)
        bad = [a["name"] for a in report["assertions"] if not a["passed"]]
        failed += bool(bad)
        status = "ok" if not bad else "FAILED: " + "; ".join(bad)
        print(f"{report['experiment']:<12} {report['fingerprint']} {time.time() - t0:6.1f}s  {status}  {paths[0]}")
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
