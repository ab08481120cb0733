"""Range-update Lp-norm sketch: r accumulators over r independent trees.

A range update ([a, b), delta) increments every accumulator A_j by
delta * S_j[a, b), where S_j is the range-sum of the j-th tree -- Gaussian
trees for the L2 norm, Cauchy trees for L1.  After any stream, A_j equals
sum_i sigma_i * Xـi^(j) for the implied counter vector sigma, so

    L2: mean(A_j^2) estimates d2^2 (the squared L2 norm),
    L1: median(|A_j|) estimates d1 (since A_j ~ Cauchy(0, d1)).

Updates mutate the accumulators; a sketch is single-writer.  Sketches with
identical configuration and seed merge by accumulator-wise addition.
"""

from __future__ import annotations

import io

import numpy as np

from . import distributions as dists
from .dst import DstBank, DstConfig

L1 = "l1"
L2 = "l2"

_EXACT_COUNTER_MAX_LOG = 24
_FORMAT_VERSION = 1


class LpSketch:
    """r accumulators backed by r independent trees of one configuration."""

    def __init__(self, p, r, universe_log, seed=0, hash_family="fast"):
        if p not in (L1, L2):
            raise ValueError(f"p must be {L1!r} or {L2!r}")
        if r < 1:
            raise ValueError("need at least one accumulator")
        self.p = p
        self.r = r
        self.universe_log = universe_log
        self.seed = seed
        distribution = dists.CAUCHY if p == L1 else dists.GAUSSIAN
        self.config = DstConfig(universe_log, distribution, master_seed=seed, hash_family=hash_family)
        self._bank = DstBank.derived(self.config, r)
        self.accumulators = np.zeros(r)

    # -- updates --------------------------------------------------------------

    def update(self, a, b, delta):
        """Apply the range update ([a, b), delta): A_j += delta * S_j[a, b)."""
        delta = float(delta)
        if not np.isfinite(delta):
            raise ValueError("update delta must be finite")
        if a == b or delta == 0.0:
            if not 0 <= a <= b <= self.config.universe:
                raise ValueError("range outside universe")
            return
        self.accumulators += delta * self._bank.range_sums(a, b)

    def update_many(self, a, b, delta, chunk=None):
        """Batch of range updates.

        The default walks the lanes in lockstep one update at a time (the
        fastest path here); an integer ``chunk`` instead batches that many
        updates jointly across all lanes through the general walk.  The two
        paths see identical range-sum values and differ only in float
        summation order.
        """
        a = np.asarray(a, dtype=np.uint64)
        b = np.asarray(b, dtype=np.uint64)
        delta = np.asarray(delta, dtype=np.float64)
        if not (len(a) == len(b) == len(delta)):
            raise ValueError("update arrays must have equal length")
        if np.any(a > b) or np.any(b > np.uint64(self.config.universe)):
            raise ValueError("some range lies outside the universe")
        if not np.all(np.isfinite(delta)):
            raise ValueError("update deltas must be finite")
        if chunk is None:
            for aa, bb, dd in zip(a, b, delta):
                self.accumulators += dd * self._bank._walk_shared(int(aa), int(bb))
            return
        r = self.r
        rows = np.tile(np.arange(r, dtype=np.intp), chunk)
        for lo in range(0, len(a), chunk):
            hi = min(lo + chunk, len(a))
            m = hi - lo
            aa = np.repeat(a[lo:hi], r)
            bb = np.repeat(b[lo:hi], r)
            vals = self._bank._walk_vector(aa, bb, rows[: m * r])
            self.accumulators += delta[lo:hi] @ vals.reshape(m, r)

    # -- estimators -----------------------------------------------------------

    def estimate_l2(self):
        """Mean of squared accumulators: an estimate of d2^2."""
        if self.p != L2:
            raise ValueError("estimate_l2 needs an L2 (Gaussian) sketch")
        return float(np.mean(self.accumulators**2))

    def estimate_l1(self):
        """Median of |A_1..A_r| (even r: midpoint of the central pair)."""
        if self.p != L1:
            raise ValueError("estimate_l1 needs an L1 (Cauchy) sketch")
        return float(np.median(np.abs(self.accumulators)))

    def estimate(self):
        return self.estimate_l1() if self.p == L1 else self.estimate_l2()

    # -- merging and persistence ----------------------------------------------

    def _signature(self):
        return (self.p, self.r, self.universe_log, self.seed, self.config.hash_family)

    def merge(self, other):
        """Sum of two sketches of the same configuration: equals the sketch
        of the concatenated streams exactly."""
        if self._signature() != other._signature():
            raise ValueError("can only merge sketches with identical p, r, universe and seed")
        out = LpSketch(self.p, self.r, self.universe_log, self.seed, self.config.hash_family)
        out.accumulators = self.accumulators + other.accumulators
        return out

    def dumps(self):
        """Portable decimal-text export: versioned header plus accumulators."""
        buf = io.StringIO()
        buf.write(f"lpsketch v{_FORMAT_VERSION} p={self.p} r={self.r} "
                  f"ulog={self.universe_log} seed={self.seed} hash={self.config.hash_family}\n")
        for v in self.accumulators:
            buf.write(repr(float(v)) + "\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text):
        lines = text.strip().splitlines()
        head = lines[0].split()
        if head[0] != "lpsketch" or head[1] != f"v{_FORMAT_VERSION}":
            raise ValueError("not a sketch export in a supported version")
        kv = dict(part.split("=", 1) for part in head[2:])
        out = cls(kv["p"], int(kv["r"]), int(kv["ulog"]), int(kv["seed"]), kv.get("hash", "fast"))
        acc = np.array([float(s) for s in lines[1:]])
        if len(acc) != out.r:
            raise ValueError(f"expected {out.r} accumulators, found {len(acc)}")
        out.accumulators = acc
        return out


class ExactCounters:
    """Ground-truth oracle: a materialized counter vector for small universes.

    Updates land in a difference array; the norms come from the prefix-sum
    reconstruction, so a stream of range updates costs O(1) each.
    """

    def __init__(self, universe_log):
        if universe_log > _EXACT_COUNTER_MAX_LOG:
            raise ValueError(f"exact counters materialize the universe; need universe_log <= {_EXACT_COUNTER_MAX_LOG}")
        self.universe_log = universe_log
        self.universe = 1 << universe_log
        self._diff = np.zeros(self.universe + 1)

    def update(self, a, b, delta):
        if not 0 <= a <= b <= self.universe:
            raise ValueError("range outside universe")
        self._diff[a] += delta
        self._diff[b] -= delta

    def update_many(self, a, b, delta):
        np.add.at(self._diff, np.asarray(a, dtype=np.int64), delta)
        np.subtract.at(self._diff, np.asarray(b, dtype=np.int64), delta)

    def counters(self):
        return np.cumsum(self._diff[:-1])

    def norms(self):
        """(d1, d2) of the current counter vector, exactly."""
        sigma = self.counters()
        return float(np.sum(np.abs(sigma))), float(np.sqrt(np.sum(sigma**2)))


def parse_stream(lines):
    """Stream file format: one `a b delta` per line; '#' starts a comment."""
    a, b, d = [], [], []
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected 'a b delta', got {raw!r}")
        a.append(int(parts[0]))
        b.append(int(parts[1]))
        d.append(float(parts[2]))
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64), np.array(d)
