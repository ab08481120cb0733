import json
import math

import numpy as np
import pytest
from scipy.stats import kstest

from dyadsim import DstConfig, IdealDst
from dyadsim import verify as V


def test_ks_statistic_single_sample():
    stat = V.ks_statistic([0.0], lambda x: np.full(len(np.atleast_1d(x)), 0.3))
    assert abs(stat - 0.7) < 1e-12


def test_ks_statistic_all_at_median():
    cdf = V.theoretical_cdf("gaussian", 1)
    stat = V.ks_statistic(np.zeros(100), cdf)
    assert abs(stat - 0.5) < 1e-12


def test_ks_statistic_perfect_grid():
    # samples at exact cdf quantiles (i - 0.5)/n -> statistic = 0.5/n
    n = 1000
    from scipy.special import ndtri

    samples = ndtri((np.arange(n) + 0.5) / n)
    stat = V.ks_statistic(samples, V.theoretical_cdf("gaussian", 1))
    assert abs(stat - 0.5 / n) < 1e-9


def test_ks_statistic_matches_scipy(rng):
    samples = rng.normal(0, 2, 500)
    ours = V.ks_statistic(samples, V.theoretical_cdf("gaussian", 4))
    theirs = kstest(samples, lambda x: V.theoretical_cdf("gaussian", 4)(x)).statistic
    assert abs(ours - theirs) < 1e-12


def test_ks_empty_error():
    with pytest.raises(ValueError):
        V.ks_statistic([], lambda x: x)


def test_ks_critical_value():
    # c(0.01) ~ 1.628
    assert abs(V.ks_critical(10_000, 0.01) - 1.628 / 100) < 2e-4


def test_theoretical_cdfs_examples():
    assert abs(V.theoretical_cdf("gaussian", 1)(0.0) - 0.5) < 1e-12
    assert abs(V.theoretical_cdf("cauchy", 2)(2.0) - 0.75) < 1e-12
    rw2 = V.theoretical_cdf("rw", 2)
    assert abs(rw2(0) - 0.75) < 1e-12  # P[S <= 0] = 1/4 + 1/2
    assert rw2(-3) == 0.0 and rw2(2) == 1.0
    assert abs(rw2(1.5) - 0.75) < 1e-12  # step function between support points


def test_rw_exact_pmf():
    support, probs = V.rw_exact_pmf(6)
    assert support.tolist() == list(range(-6, 7, 2))
    assert abs(probs.sum() - 1.0) < 1e-12
    assert abs(probs[3] - math.comb(6, 3) / 64) < 1e-12


def test_chi_square_bins_pooling():
    probs = np.array([0.001, 0.009, 0.49, 0.49, 0.009, 0.001])
    groups = V.chi_square_bins(probs, 1000, min_expected=5.0)
    assert [sorted(g) for g in groups][0] == [0, 1]
    assert sum(len(g) for g in groups) == 6


def test_split_theorem_all_distributions():
    for dist, n in (("gaussian", 8), ("cauchy", 4), ("rw", 2)):
        rep = V.passes_with_retry(
            lambda s, d=dist, nn=n: V.check_split_theorem(d, nn, trials=8000, harness_seed=s)
        )
        assert rep["pass"], (dist, rep)
        json.dumps(rep)  # must be JSON-serializable


def test_split_theorem_rw_includes_exact_joint():
    rep = V.check_split_theorem("rw", 1, trials=6000)
    names = [c["test"] for c in rep["checks"]]
    assert "split-joint-exact" in names


def test_marginal_theorem_rw_small_universe():
    rep = V.passes_with_retry(
        lambda s: V.check_marginal_theorem("rw", 3, 9, 4, trials=20_000, harness_seed=s)
    )
    assert rep["pass"], rep


def test_marginal_theorem_continuous():
    for dist in ("gaussian", "cauchy"):
        rep = V.passes_with_retry(
            lambda s, d=dist: V.check_marginal_theorem(d, 5, 14, 5, trials=6000, harness_seed=s)
        )
        assert rep["pass"], (dist, rep)


def test_kwise_theorems():
    rep = V.passes_with_retry(
        lambda s: V.check_kwise_theorem(2, 1, "gaussian", 6, trials=20_000, harness_seed=s)
    )
    assert rep["pass"], rep
    rep = V.passes_with_retry(
        lambda s: V.check_kwise_theorem(2, 4, "rw", 4, trials=20_000, harness_seed=s)
    )
    assert rep["pass"], rep
    rep = V.passes_with_retry(
        lambda s: V.check_kwise_theorem(4, 2, "gaussian", 6, trials=30_000, harness_seed=s)
    )
    assert rep["pass"], rep


def test_ideal_dst_consistency():
    ideal = IdealDst(DstConfig(6, "rw", master_seed=0), harness_seed=42)
    vals = [ideal.singleton(i) for i in range(64)]
    assert vals == [ideal.singleton(i) for i in range(64)]  # memoized
    assert sum(vals) == ideal.range_sum(0, 64)  # exact additivity for rw
    assert ideal.range_sum(3, 17) == ideal.range_sum(3, 10) + ideal.range_sum(10, 17)
    # interleaved queries do not disturb earlier values
    v1 = ideal.range_sum(5, 40)
    ideal.range_sum(0, 64)
    assert ideal.range_sum(5, 40) == v1


def test_ideal_dst_distinct_seeds_differ():
    a = IdealDst(DstConfig(6, "gaussian"), harness_seed=1)
    b = IdealDst(DstConfig(6, "gaussian"), harness_seed=2)
    assert a.range_sum(0, 64) != b.range_sum(0, 64)


def test_ideal_equivalence_battery():
    rep = V.passes_with_retry(
        lambda s: V.check_ideal_equivalence(6, trials=4000, harness_seed=s)
    )
    assert rep["pass"], rep
    variants = {c["params"]["variant"] for c in rep["checks"]}
    assert variants == {"ideal", "hashed"}


def test_reports_are_seed_reproducible():
    r1 = V.check_split_theorem("gaussian", 4, trials=2000, harness_seed=7)
    r2 = V.check_split_theorem("gaussian", 4, trials=2000, harness_seed=7)
    assert r1 == r2
    r3 = V.check_split_theorem("gaussian", 4, trials=2000, harness_seed=8)
    assert r3["checks"][0]["statistic"] != r1["checks"][0]["statistic"]


def test_node_marginal_law_mid_level():
    # a level-2 node of a U=64 tree is the sum of 16 leaves: X^{*16}
    from dyadsim import DstBank, Prefix

    config = DstConfig(6, "gaussian", master_seed=5)
    bank = DstBank.derived(config, 6000, salt=9)
    vals = bank.node_values(Prefix(2, 3))
    stat = V.ks_statistic(vals, V.theoretical_cdf("gaussian", 16))
    assert stat < V.ks_critical(6000, 0.01), stat


def test_marginal_theorem_poly2_large_universe():
    rep = V.passes_with_retry(
        lambda s: V.check_marginal_theorem("gaussian", 623390, 623490, 20,
                                           trials=5000, harness_seed=s)
    )
    assert rep["pass"], rep
    assert rep["params"]["hash_family"] == "poly2"
