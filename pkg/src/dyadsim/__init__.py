"""Dyadic simulation trees for efficient range-summability of i.i.d. RVs.

Gaussian, Cauchy and single-step random-walk targets; a range-update
Lp-norm streaming sketch (p = 1, 2); a Gaussian-random-walk LSH for L1
distance; and a verification harness for the distributional claims.
"""

from .distributions import (
    CAUCHY,
    GAUSSIAN,
    RANDOM_WALK,
    KernelStats,
    SamplingError,
    build_rw_tables,
)
from .dst import Dst, DstBank, DstConfig, Prefix, dyadic_cover
from .lsh import GrwLshFunction, collision_curve, collision_probability_exact
from .sketch import ExactCounters, LpSketch, parse_stream
from .verify import IdealDst, ks_statistic, theoretical_cdf

__all__ = [
    "GAUSSIAN",
    "CAUCHY",
    "RANDOM_WALK",
    "Prefix",
    "dyadic_cover",
    "DstConfig",
    "Dst",
    "DstBank",
    "KernelStats",
    "SamplingError",
    "build_rw_tables",
    "LpSketch",
    "ExactCounters",
    "parse_stream",
    "GrwLshFunction",
    "collision_curve",
    "collision_probability_exact",
    "IdealDst",
    "ks_statistic",
    "theoretical_cdf",
]

__version__ = "0.1.0"
