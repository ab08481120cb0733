"""Gaussian-random-walk LSH for L1 distance.

The raw hash of an integer point s = (s_1, ..., s_m) is
f(s) = sum_j S_j[0, s_j) over m independent Gaussian trees, and the bucket
is g(s) = floor((f(s) + B) / W) for a width W and an offset B drawn
uniformly from [0, W] at construction.  For two points at L1 distance d1,
f(s) - f(q) is distributed N(0, d1), which makes the collision probability
a monotonically decreasing function of the distance.
"""

from __future__ import annotations

import math

import numpy as np

from . import distributions as dists
from .dst import DstBank, DstConfig
from .hashing import derive_seed

_B_SALT = 0x42


def _unit_from_seed(seed64):
    return ((int(seed64) >> 11) + 0.5) / 2.0**53


def bucket_of(raw, offset, width):
    """floor((raw + offset) / width), toward minus infinity."""
    return math.floor((raw + offset) / width)


class GrwLshFunction:
    """One LSH function: m Gaussian trees, a bucket width W and offset B."""

    def __init__(self, m, universe_log, width, seed=0, hash_family="fast"):
        if m < 1:
            raise ValueError("need at least one coordinate")
        if not width > 0:
            raise ValueError("bucket width must be positive")
        self.m = m
        self.universe_log = universe_log
        self.width = float(width)
        self.seed = seed
        self.config = DstConfig(universe_log, dists.GAUSSIAN, master_seed=seed, hash_family=hash_family)
        self._bank = DstBank.derived(self.config, m)
        self.offset = self.width * _unit_from_seed(derive_seed(seed, _B_SALT))
        self._zeros = np.zeros(m, dtype=np.uint64)

    def _check_point(self, s):
        s = np.asarray(s, dtype=np.int64)
        if s.shape != (self.m,):
            raise ValueError(f"point must have {self.m} coordinates")
        if np.any(s < 0) or np.any(s > self.config.universe):
            raise ValueError(f"coordinates must lie in [0, {self.config.universe}]")
        return s.astype(np.uint64)

    def raw_hash(self, s):
        """f(s) = sum_j S_j[0, s_j)."""
        s = self._check_point(s)
        return float(np.sum(self._bank.range_sums(self._zeros, s)))

    def lsh_value(self, s):
        """g(s) = floor((f(s) + B) / W)."""
        return bucket_of(self.raw_hash(s), self.offset, self.width)


def raw_difference_samples(lo, hi, universe_log, n_trials, seed=0):
    """Samples of f(s) - f(q) over fresh construction seeds, where s and q
    agree except on one coordinate spanning [lo, hi).  Distributed N(0, hi - lo)."""
    config = DstConfig(universe_log, dists.GAUSSIAN, master_seed=seed)
    bank = DstBank.derived(config, n_trials)
    return -bank.range_sums(lo, hi)


def collision_curve(width, distances, trials, universe_log=20, seed=0):
    """Monte-Carlo Pr[g(s) = g(q)] for points one coordinate apart.

    Per trial a fresh function (new tree seed and new offset B) hashes
    s = (0, ...) and q = s + D on the first coordinate.  Trial t of
    distance index i reproduces ``GrwLshFunction(1, universe_log, width,
    seed=derive_seed(derive_seed(seed, i), t))`` bit for bit.  Returns a
    list of (D, probability, standard_error).
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    out = []
    for i, d in enumerate(distances):
        if not 0 <= d <= (1 << universe_log):
            raise ValueError(f"distance {d} outside the coordinate universe")
        fn_seeds = derive_seed(derive_seed(seed, i), np.arange(trials, dtype=np.uint64))
        config = DstConfig(universe_log, dists.GAUSSIAN, master_seed=int(fn_seeds[0]))
        bank = DstBank(config, derive_seed(fn_seeds, 0))
        raw_q = bank.range_sums(0, d)  # f(s) = 0 at the all-zeros point
        offs = width * ((derive_seed(fn_seeds, _B_SALT) >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53
        coll = np.floor(offs / width) == np.floor((raw_q + offs) / width)
        p = float(np.mean(coll))
        stderr = math.sqrt(max(p * (1.0 - p), 1e-12) / trials)
        out.append((int(d), p, stderr))
    return out


def collision_probability_exact(width, distance):
    """Closed-form Pr[g(s) = g(q)] when f(s) - f(q) ~ N(0, D): with
    c = W / sqrt(D),  p = 2*Phi(c) - 1 - 2*(1 - exp(-c^2/2)) / (c*sqrt(2*pi)).
    Serves as the independent oracle for the Monte-Carlo curve."""
    if distance == 0:
        return 1.0
    c = width / math.sqrt(distance)
    phi_c = 0.5 * (1.0 + math.erf(c / math.sqrt(2.0)))
    return 2.0 * phi_c - 1.0 - 2.0 * (1.0 - math.exp(-0.5 * c * c)) / (c * math.sqrt(2.0 * math.pi))
