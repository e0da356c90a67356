"""Tests of a multivariate normal mean against cone alternatives with unknown covariance."""
from .cones import Algorithm, Cone, ConeKind, Metric, ProjectionResult, dual_member, project
from .errors import ConditioningError, ConeTestError, DomainError, NotPositiveDefiniteError, NumericalError, SolverError
from .matkit import PartitionIndex, SampleStats, SeedSpec, SymPD, derive_stream, schur_stats
from .nulldist import (
    MixtureWeights,
    PValue,
    TestKind,
    critval_max,
    fuit_critical,
    g_cdf,
    g_tail,
    gstar_tail,
    mixture_weights,
    null_tail,
    sup_pvalue,
    t2_critical,
)
from .teststats import StatisticResult, StatKind, fuit, hotelling_t2, lrt, uit
from .bayesweights import BayesWeights, HaarPrior, InvWishartPrior, bayes_weights, critval_bayes

__version__ = "0.1.0"
