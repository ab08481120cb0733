import math

import numpy as np
import pytest
from scipy.integrate import quad

from dyadsim import distributions as D
from dyadsim.verify import chi_square_report, ks_critical, ks_statistic, theoretical_cdf


def fresh_draw(rng):
    def draw(t, sub, k=1, _rng=rng):
        size = draw.size if sub is None else len(sub)
        return _rng.integers(0, 2**64, size=k * size, dtype=np.uint64)

    return draw


# ---------------------------------------------------------------------------
# Box-Muller / Gaussian

def test_box_muller_zero_noise():
    # u1 = 1 (hi32 = 2^32 - 1), u2 = 0 -> g = 0
    c = np.array([0xFFFFFFFF00000000], dtype=np.uint64)
    assert D.std_normal_from_bits(c)[0] == 0.0


def test_box_muller_uniform_extraction():
    c = np.array([(5 << 32) | 7], dtype=np.uint64)
    u1, u2 = D.box_muller_uniforms(c)
    assert u1[0] == 6.0 / 2**32
    assert u2[0] == 7.0 / 2**32


def test_gaussian_split_math_example():
    # u1 = e^-2, u2 = 0 -> g = sqrt(4)*cos(0) = 2; z=0, n=2 -> L = sqrt(1)*2 = 2
    hi = int(round(math.exp(-2.0) * 2**32)) - 1
    c = np.array([hi << 32], dtype=np.uint64)

    def draw(t, sub, k=1):
        return c

    out = D.gaussian_split(np.array([0.0]), 2, draw)
    assert abs(out[0] - 2.0) < 1e-7


def test_gaussian_split_zero_noise_gives_half_parent():
    c = np.array([0xFFFFFFFF00000000], dtype=np.uint64)

    def draw(t, sub, k=1):
        return np.repeat(c, draw.m)

    draw.m = 3
    z = np.array([3.0, -8.0, 0.25])
    out = D.gaussian_split(z, 4, draw)
    assert np.array_equal(out, z / 2)


def test_gaussian_split_moments(rng):
    n_samples = 200_000
    draw = fresh_draw(rng)
    draw.size = n_samples
    z = np.full(n_samples, 3.0)
    out = D.gaussian_split(z, 8, draw)
    # L ~ N(z/2, n/2) = N(1.5, 4)
    assert abs(out.mean() - 1.5) < 4 * math.sqrt(4 / n_samples)
    assert abs(out.var() - 4.0) < 0.1


# ---------------------------------------------------------------------------
# Cauchy

def cauchy_conditional_pdf(x, z, n):
    return (n / (2 * math.pi)) * (z * z + 4 * n * n) / ((n * n + x * x) * (n * n + (z - x) ** 2))


def test_cauchy_conditional_pdf_normalizes():
    for z, n in ((0.0, 4), (11.3, 2), (-250.0, 64)):
        total, err = quad(cauchy_conditional_pdf, -np.inf, np.inf, args=(z, n), limit=400)
        assert abs(total - 1.0) < 1e-8


def test_cauchy_acceptance_is_one_at_half_parent():
    # the target/proposal ratio peaks at x = z/2 where it equals Q = 2
    for z, n in ((0.0, 1), (10.0, 4), (-7.0, 16)):
        x = z / 2
        ratio = (4 * n * n + z * z) / (2 * n * n + z * z / 2 + 2 * (x - z / 2) ** 2)
        assert abs(ratio - 2.0) < 1e-12


def test_cauchy_root_median_zero():
    # u = 0.5 -> tan(0) = 0; top 53 bits of c = 2^52 gives u = (2^52+0.5)/2^53
    c = np.array([1 << 63], dtype=np.uint64)
    v = D.root_sample(D.CAUCHY, 4, c)
    assert abs(v[0]) < 1e-9


def test_gaussian_root_zero():
    c = np.array([0xFFFFFFFF00000000], dtype=np.uint64)
    assert D.root_sample(D.GAUSSIAN, 10, c)[0] == 0.0


def test_cauchy_split_acceptance_rate(rng):
    n_samples = 100_000
    draw = fresh_draw(rng)
    draw.size = n_samples
    z = 8.0 * rng.standard_cauchy(n_samples)  # parent ~ Cauchy(0, 2n), n = 4
    stats = D.KernelStats()
    D.cauchy_split(z, 4, draw, 128, stats)
    rate = stats.accepts / stats.proposals
    se = math.sqrt(0.25 / stats.proposals)
    # the mean acceptance is exactly 1/2; require >= 1/2 up to Monte-Carlo noise
    assert rate >= 0.5 - 3 * se, rate
    assert abs(rate - 0.5) < 4 * se, rate


def test_cauchy_split_distribution_chi_square(rng):
    # z = 0, n = 4 fixed; accepted samples vs the conditional density
    n_samples = 100_000
    z, n = 0.0, 4
    draw = fresh_draw(rng)
    draw.size = n_samples
    out = D.cauchy_split(np.full(n_samples, z), n, draw, 128)
    edges = np.concatenate(([-np.inf], np.arange(-40, 41, 2.0), [np.inf]))
    counts, _ = np.histogram(out, edges)
    probs = np.array([
        quad(cauchy_conditional_pdf, lo, hi, args=(z, n), limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
    probs /= probs.sum()
    rep = chi_square_report("cauchy-split", counts, probs, alpha=0.01)
    assert rep["pass"], rep


def test_cauchy_split_marginals_ks(rng):
    # z ~ X^{*2n} => L and z - L both ~ Cauchy(0, n)
    n_samples = 50_000
    n = 4
    z = 2 * n * rng.standard_cauchy(n_samples)
    draw = fresh_draw(rng)
    draw.size = n_samples
    left = D.cauchy_split(z, n, draw, 128)
    for side in (left, z - left):
        stat = ks_statistic(side, theoretical_cdf(D.CAUCHY, n))
        assert stat < ks_critical(n_samples, 0.01), stat


# ---------------------------------------------------------------------------
# random walk

def test_rw_pmf_table_small():
    t = D.build_unconditional_table(2)
    assert t.support.tolist() == [-2, 0, 2]
    assert np.allclose(t.pmf, [0.25, 0.5, 0.25])
    t4 = D.build_unconditional_table(4)
    assert abs(t4.pmf.sum() - 1.0) < 1e-12
    assert t4.cdf[-1] == 1.0


def test_rw_root_two_leaves(rng):
    tables = D.build_rw_tables(1)
    c = rng.integers(0, 2**64, 40_000, dtype=np.uint64)
    v = D.root_sample(D.RANDOM_WALK, 1, c, tables)
    counts = np.array([(v == k).sum() for k in (-2, 0, 2)])
    assert counts.sum() == 40_000
    rep = chi_square_report("rw-root", counts, [0.25, 0.5, 0.25], alpha=0.01)
    assert rep["pass"], rep


def test_rw_split_forced_values():
    tables = D.build_rw_tables(2)

    def draw(t, sub, k=1):
        return np.array([123456789], dtype=np.uint64)

    out = D.rw_split(np.array([2.0]), 1, tables, draw, 128)
    assert out[0] == 1.0  # both width-1 leaves forced to +1
    out = D.rw_split(np.array([-2.0]), 1, tables, draw, 128)
    assert out[0] == -1.0


def test_rw_split_half_half(rng):
    # f(x | z=0) at n=1: C(1,0)C(1,1)/C(2,1) = 1/2 per side
    tables = D.build_rw_tables(2)
    draw = fresh_draw(rng)
    draw.size = 50_000
    out = D.rw_split(np.zeros(50_000), 1, tables, draw, 128)
    assert set(np.unique(out)) == {-1.0, 1.0}
    rep = chi_square_report("rw-half", [(out == -1).sum(), (out == 1).sum()], [0.5, 0.5])
    assert rep["pass"], rep


def test_rw_split_support_and_parity_errors():
    tables = D.build_rw_tables(4)
    draw = lambda t, sub, k=1: np.array([1], dtype=np.uint64)
    with pytest.raises(ValueError):
        D.rw_split(np.array([3.0]), 2, tables, draw, 128)  # odd parent
    with pytest.raises(ValueError):
        D.rw_split(np.array([10.0]), 2, tables, draw, 128)  # |z| > 2n


def test_rw_conditional_pmf_sums_to_one():
    for n in (1, 2, 4, 8):
        for z in range(-2 * n, 2 * n + 1, 2):
            x = np.arange(max(-n, z - n), min(n, z + n) + 1, 2, dtype=np.int64)
            logp = (D._log_binom(n, (n - x) // 2) + D._log_binom(n, (n - z + x) // 2)
                    - D._log_binom(2 * n, n - z // 2))
            total = np.exp(logp).sum()
            assert abs(total - 1.0) < 1e-12, (n, z, total)


def probable_max_ratio(n):
    """Max of f/psi over |z| <= 6*sqrt(2n) (even) and proposal-reachable x."""
    win_z = int(D.RW_RATIO_Z_SIGMAS * math.sqrt(2 * n))
    win_x = int(math.ceil(D.PROBABLE_WINDOW_SIGMAS * math.sqrt(n)))
    worst = -np.inf
    for z in range(-win_z - (win_z % 2), win_z + 1, 2):
        mu = 2 * ((z + 3) // 4)
        x = np.arange(mu - win_x, mu + win_x + 1, 1, dtype=np.int64)
        x = x[((n - x) % 2 == 0) & (np.abs(x) <= n) & (np.abs(z - x) <= n)]
        if not len(x):
            continue
        r = D.rw_split_log_ratio(n, x, np.full(len(x), z))
        worst = max(worst, float(np.max(r)))
    return math.exp(worst)


def test_rw_ratio_bound_at_256():
    assert probable_max_ratio(256) <= D.RW_REJECTION_Q + 1e-9


def test_rw_ratio_tends_to_sqrt2():
    r = probable_max_ratio(4096)
    assert r < probable_max_ratio(256)
    assert abs(r - math.sqrt(2)) < 0.02


def test_rw_rejection_acceptance_rate(rng):
    n = 256
    n_samples = 60_000
    tables = D.build_rw_tables(9)
    parent = D.build_unconditional_table(2 * n)
    z = parent.support[np.searchsorted(parent.cdf, rng.random(n_samples))].astype(np.float64)
    draw = fresh_draw(rng)
    draw.size = n_samples
    stats = D.KernelStats()
    D.rw_split(z, n, tables, draw, 128, stats)
    rate = stats.accepts / stats.proposals
    se = math.sqrt(0.25 / stats.proposals)
    assert rate >= 1.0 / D.RW_REJECTION_Q - 3 * se, rate


def test_rw_methods_agree_at_boundary(rng):
    # tabular inverse transform vs rejection at the same n: same conditional law
    n = 256
    n_samples = 40_000
    tables = D.build_rw_tables(9)
    z = np.full(n_samples, 6.0)
    d1 = fresh_draw(rng)
    d1.size = n_samples
    by_table = D.rw_split(z, n, tables, d1, 128, force_method="table")
    d2 = fresh_draw(rng)
    d2.size = n_samples
    by_reject = D.rw_split(z, n, tables, d2, 128, force_method="reject")
    support = np.arange(6 - n, n + 1, 2, dtype=np.int64)
    logp = (D._log_binom(n, (n - support) // 2) + D._log_binom(n, (n - 6 + support) // 2)
            - D._log_binom(2 * n, n - 3))
    probs = np.exp(logp)
    probs /= probs.sum()
    for label, out in (("table", by_table), ("reject", by_reject)):
        counts = np.zeros(len(support))
        idx = np.searchsorted(support, np.rint(out).astype(np.int64))
        np.add.at(counts, idx, 1)
        rep = chi_square_report(f"rw-{label}", counts, probs, alpha=0.005)
        assert rep["pass"], (label, rep)


def test_split_theorem_rw_exact_joint(rng):
    # enumerate all 2^(2n) sign vectors at n=2: joint law of (L, z-L)
    import itertools

    n = 2
    joint = {}
    for signs in itertools.product((-1, 1), repeat=2 * n):
        key = (sum(signs[:n]), sum(signs[n:]))
        joint[key] = joint.get(key, 0.0) + 0.5 ** (2 * n)
    tables = D.build_rw_tables(2)
    parent = D.build_unconditional_table(2 * n)
    n_samples = 60_000
    z = parent.support[np.searchsorted(parent.cdf, rng.random(n_samples))].astype(np.float64)
    draw = fresh_draw(rng)
    draw.size = n_samples
    left = D.rw_split(z, n, tables, draw, 128)
    right = z - left
    keys = sorted(joint)
    probs = np.array([joint[k] for k in keys])
    counts = np.zeros(len(keys))
    idx = {k: i for i, k in enumerate(keys)}
    for lv, rv in zip(left, right):
        counts[idx[(int(lv), int(rv))]] += 1
    rep = chi_square_report("rw-joint", counts, probs, alpha=0.01)
    assert rep["pass"], rep


def test_build_rw_tables_footprint_and_examples():
    D.build_rw_tables.cache_clear()
    import time

    t0 = time.perf_counter()
    tables = D.build_rw_tables(20)
    dt = time.perf_counter() - t0
    assert dt < 5.0
    assert tables.nbytes <= 32 * 2**20, tables.nbytes
    assert set(tables.conditional) == {2**j for j in range(8)}  # n <= 128
    assert set(tables.unconditional) == {2**j for j in range(21)}
    with pytest.raises(ValueError):
        D.build_rw_tables(53)


def test_sampling_error_when_attempts_exhausted():
    def never_accept(t, sub, k=1):
        size = 1 if sub is None else len(sub)
        # v = top: (2^32-1 +.5)/2^32 ~ 1 -> always rejects
        return np.full(k * size, 0xFFFFFFFF, dtype=np.uint64)

    with pytest.raises(D.SamplingError):
        D.cauchy_split(np.array([0.0]), 4, never_accept, 8)
