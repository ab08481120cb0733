"""Dyadic simulation trees: top-down generation of range-summable RVs.

A tree of height log2(U) sits over the universe [0, U).  The root carries
S[0, U) ~ X^{*U}; every node's value is split into its two children by the
distribution kernels in :mod:`dyadsim.distributions`, with all randomness
hash-derived from (level, node index, attempt).  Queries are pure: any node
evaluated twice yields the identical value, a non-leaf always equals the
sum of its children (exactly for the integer-valued random walk), and an
arbitrary range-sum S[a, b) costs at most two splits per level -- at most
2*log2(U) splits total -- via a two-boundary walk.

Everything is vectorized over "lanes".  A lane is one independent tree
(a :class:`DstBank` evaluating one query across many trees, as the sketch
and the LSH do) or one query (a single :class:`Dst` answering many queries
at once).  Values are bit-identical regardless of how queries are batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import distributions as dists
from .distributions import KernelStats, SamplingError, build_rw_tables, root_sample, split_left
from .hashing import MAX_ATTEMPT_BITS, derive_level_seeds, derive_seed, parse_family

__all__ = [
    "Prefix",
    "dyadic_cover",
    "DstConfig",
    "Dst",
    "DstBank",
    "KernelStats",
    "SamplingError",
]


@dataclass(frozen=True, order=True)
class Prefix:
    """A tree node named by (level, index): the dyadic range
    [index * U/2^level, (index+1) * U/2^level).  The root is (0, 0)."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("prefix level must be nonnegative")
        if not 0 <= self.index < (1 << self.level):
            raise ValueError(f"prefix index {self.index} out of range at level {self.level}")

    def width(self, universe_log):
        if self.level > universe_log:
            raise ValueError(f"prefix level {self.level} below the leaves of a 2^{universe_log} universe")
        return 1 << (universe_log - self.level)

    def span(self, universe_log):
        w = self.width(universe_log)
        return self.index * w, (self.index + 1) * w

    def children(self):
        return Prefix(self.level + 1, 2 * self.index), Prefix(self.level + 1, 2 * self.index + 1)

    def parent(self):
        if self.level == 0:
            raise ValueError("the root has no parent")
        return Prefix(self.level - 1, self.index // 2)


def dyadic_cover(a, b, universe_log):
    """The unique minimum partition of [a, b) into dyadic ranges.

    Greedy from the left: the widest dyadic block starting at ``a`` that
    fits in the remainder.  At most one block of each width on each side,
    hence at most 2*log2(U) blocks.
    """
    universe = 1 << universe_log
    a, b = int(a), int(b)
    if not 0 <= a <= b <= universe:
        raise ValueError(f"range [{a}, {b}) outside universe [0, {universe}]")
    out = []
    while a < b:
        align = (a & -a) or universe
        w = min(align, 1 << ((b - a).bit_length() - 1))
        out.append(Prefix(universe_log - w.bit_length() + 1, a // w))
        a += w
    return out


@dataclass(frozen=True)
class DstConfig:
    """Immutable description of one simulation tree.

    Two trees with equal configs produce bit-identical values for every
    query.  ``hash_family`` is "fast" or "polyK" (k >= 2); the attempt
    budget must fit the 7 attempt bits of the key encoding.
    """

    universe_log: int
    distribution: str
    master_seed: int = 0
    hash_family: str = "fast"
    max_reject_attempts: int = 100

    def __post_init__(self):
        if not 1 <= self.universe_log <= 63:
            raise ValueError("universe_log must lie in [1, 63]; a one-element universe has nothing to split")
        if self.distribution not in dists.DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.distribution == dists.RANDOM_WALK and self.universe_log > 52:
            raise ValueError("random-walk trees need universe_log <= 52 to keep integer sums exact")
        parse_family(self.hash_family)
        if not 1 <= self.max_reject_attempts <= (1 << MAX_ATTEMPT_BITS):
            raise ValueError(f"max_reject_attempts must lie in [1, {1 << MAX_ATTEMPT_BITS}]")

    @property
    def universe(self):
        return 1 << self.universe_log


def _bit_length(x):
    """Per-element bit length of a uint64 ndarray."""
    x = x.astype(np.uint64, copy=True)
    out = np.zeros(x.shape, dtype=np.int64)
    for s in (32, 16, 8, 4, 2, 1):
        big = x >= (np.uint64(1) << np.uint64(s))
        out += np.where(big, s, 0)
        x = np.where(big, x >> np.uint64(s), x)
    return out + x.astype(np.int64)


def _ntz_int(x, cap):
    return cap if x == 0 else (x & -x).bit_length() - 1


class DstBank:
    """A stack of independent, identically configured trees (lanes).

    Shared-range queries (scalar a, b) walk all lanes in lockstep;
    per-lane queries (arrays a, b of length n_lanes) run the general
    two-boundary walk.  Both produce the same values lane for lane.
    """

    def __init__(self, config, lane_seeds):
        self.config = config
        seeds = np.atleast_1d(np.asarray(lane_seeds, dtype=np.uint64))
        self.n_lanes = seeds.shape[0]
        # one hash function per split level plus one stream for the root draw
        self.spec = derive_level_seeds(seeds, config.universe_log + 1, config.hash_family)
        self.tables = build_rw_tables(config.universe_log) if config.distribution == dists.RANDOM_WALK else None
        self._rows1 = np.arange(self.n_lanes, dtype=np.intp)
        self._rows2 = np.tile(self._rows1, 2)

    @classmethod
    def derived(cls, config, n_lanes, salt=0):
        """n_lanes independent trees seeded by mixing the config's master seed."""
        base = derive_seed(config.master_seed, salt) if salt else config.master_seed
        return cls(config, derive_seed(np.uint64(base & ((1 << 64) - 1)), np.arange(n_lanes, dtype=np.uint64)))

    # -- randomness plumbing ------------------------------------------------

    def _root_values(self, rows, count=1):
        """rows=None means lane 0, repeated ``count`` times (single-lane banks)."""
        level = self.config.universe_log
        if rows is None:
            c = self.spec.draw_single(level, np.zeros(count, dtype=np.uint64))
        else:
            c = self.spec.draw(level, rows, np.zeros(len(rows), dtype=np.uint64))
        return root_sample(self.config.distribution, level, c, self.tables)

    def _split(self, level, z, rows, keys, stats):
        """rows=None routes through the gather-free single-lane hash path."""
        spec = self.spec

        def draw(t, sub, k=1):
            kk = keys if sub is None else keys[sub]
            if k == 1:
                karr = kk if t == 0 else kk | np.uint64(t)
            else:
                # attempt-major layout: reshape(k, -1) recovers the rounds
                karr = (kk[None, :] | np.arange(t, t + k, dtype=np.uint64)[:, None]).ravel()
            if rows is None:
                return spec.draw_single(level, karr)
            rr = rows if sub is None else rows[sub]
            return spec.draw(level, rr if k == 1 else np.tile(rr, k), karr)

        n_child = 1 << (self.config.universe_log - level - 1)
        return split_left(self.config.distribution, z, n_child, self.tables,
                          draw, self.config.max_reject_attempts, stats)

    def _split_shared(self, level, z, part_keys, stats):
        """Split len(part_keys) nodes across every lane in lockstep; the
        lane-major layout lets the hash read seed columns without gathers."""
        spec, n = self.spec, self.n_lanes
        m = len(part_keys)
        base = np.empty(m * n, dtype=np.uint64)
        for i, pk in enumerate(part_keys):
            base[i * n:(i + 1) * n] = pk
        rows = self._rows1 if m == 1 else self._rows2

        def draw(t, sub, k=1):
            if sub is None:
                if k == 1:
                    return spec.draw_all(level, base if t == 0 else base | np.uint64(t), m)
                karr = (base[None, :] | np.arange(t, t + k, dtype=np.uint64)[:, None]).ravel()
                return spec.draw_all(level, karr, m * k)
            kk = base[sub]
            rr = rows[sub]
            if k == 1:
                return spec.draw(level, rr, kk | np.uint64(t))
            karr = (kk[None, :] | np.arange(t, t + k, dtype=np.uint64)[:, None]).ravel()
            return spec.draw(level, np.tile(rr, k), karr)

        n_child = 1 << (self.config.universe_log - level - 1)
        return split_left(self.config.distribution, z, n_child, self.tables,
                          draw, self.config.max_reject_attempts, stats)

    # -- shared-range walk (scalar a, b; all lanes in lockstep) --------------

    def _walk_shared(self, a, b, count_splits=False, stats=None):
        """One range, every lane.  The walk structure (which nodes split at
        which level) is computed once in plain integers; per level the
        kernel runs across all lanes.  Values are bit-identical to the
        per-lane walk's."""
        cfg = self.config
        L, U = cfg.universe_log, cfg.universe
        a, b = int(a), int(b)
        if not 0 <= a <= b <= U:
            raise ValueError(f"range [{a}, {b}) outside universe [0, {U}]")
        n = self.n_lanes
        if a == b:
            return (np.zeros(n), 0) if count_splits else np.zeros(n)

        w = b - a
        dyad = (w & (w - 1)) == 0 and (a & (w - 1)) == 0
        bm1 = b - 1
        ld = L - (a ^ bm1).bit_length()
        splits = 0
        c0 = self.spec.draw_all(self.config.universe_log, np.zeros(self.n_lanes, dtype=np.uint64))
        vj = root_sample(self.config.distribution, self.config.universe_log, c0, self.tables)

        if dyad:
            terminal = L - w.bit_length() + 1
            for level in range(terminal):
                x = self._split_shared(level, vj, [(a >> (L - level)) << MAX_ATTEMPT_BITS], stats)
                splits += 1
                vj = (vj - x) if (a >> (L - level - 1)) & 1 else x
            return (vj, splits) if count_splits else vj

        la = max(ld + 1, L - _ntz_int(a, L))
        lb = max(ld + 1, L - _ntz_int(b, L))
        va = vb = None
        for level in range(ld + 1):
            x = self._split_shared(level, vj, [(a >> (L - level)) << MAX_ATTEMPT_BITS], stats)
            splits += 1
            if level == ld:
                va, vb = x, vj - x
            else:
                vj = (vj - x) if (a >> (L - level - 1)) & 1 else x

        acc_a = np.zeros(n)
        acc_b = np.zeros(n)
        for level in range(ld + 1, max(la, lb)):
            step_a = level < la
            step_b = level < lb
            shift = L - level
            if step_a and step_b:
                z = np.concatenate((va, vb))
                x = self._split_shared(level, z, [(a >> shift) << MAX_ATTEMPT_BITS,
                                                  (bm1 >> shift) << MAX_ATTEMPT_BITS], stats)
                xa, xb = x[:n], x[n:]
            elif step_a:
                xa = self._split_shared(level, va, [(a >> shift) << MAX_ATTEMPT_BITS], stats)
            else:
                xb = self._split_shared(level, vb, [(bm1 >> shift) << MAX_ATTEMPT_BITS], stats)
            splits += int(step_a) + int(step_b)
            cb = shift - 1
            if step_a:
                if (a >> cb) & 1:
                    va = va - xa
                else:
                    acc_a += va - xa
                    va = xa
            if step_b:
                if (bm1 >> cb) & 1:
                    acc_b += xb
                    vb = vb - xb
                else:
                    vb = xb

        side_a = acc_a + va
        side_b = acc_b + vb
        acc = (side_a + side_b) if la <= lb else (side_b + side_a)
        return (acc, splits) if count_splits else acc

    # -- general walk (per-lane ranges) ---------------------------------------

    def _walk_vector(self, a, b, rows=None, count_splits=False, stats=None):
        """Two-pass boundary walk over per-lane ranges.

        Pass 1 descends the joint path (the common prefix of a and b-1) in
        each lane; dyadic ranges terminate there and the rest emit one
        worklist entry per boundary.  Pass 2 advances all boundary entries
        level-synchronously under one shared rule: descend into the child
        holding the boundary, collecting the sibling that lies inside the
        range (the right child on the a side, the left child on the b
        side).  At most two splits per lane per level.
        """
        cfg = self.config
        L, U = cfg.universe_log, cfg.universe
        a = np.asarray(a, dtype=np.uint64)
        b = np.asarray(b, dtype=np.uint64)
        a, b = np.broadcast_arrays(a, b)
        n = a.shape[0]
        single = rows is None and self.n_lanes == 1
        if rows is None and not single:
            if n != self.n_lanes:
                raise ValueError("per-lane query length must match the number of lanes")
            rows = self._rows1
        if np.any(a > b) or np.any(b > np.uint64(U)):
            raise ValueError(f"some range lies outside the universe [0, {U}]")

        acc = np.zeros(n)
        splits = np.zeros(n, dtype=np.int64) if count_splits else None
        nonempty = a != b
        if not nonempty.any():
            return (acc, splits) if count_splits else acc

        w = b - a
        w_safe = np.where(nonempty, w, np.uint64(1))
        pow2 = (w_safe & (w_safe - np.uint64(1))) == np.uint64(0)
        dyad = nonempty & pow2 & ((a & (w_safe - np.uint64(1))) == np.uint64(0))
        terminal = np.where(dyad, L - _bit_length(w_safe) + 1, L + 1)
        bm1 = b - np.uint64(1)
        ld = L - _bit_length(a ^ np.where(nonempty, bm1, a))
        ntz_a = np.where(a == 0, L, _bit_length(a & (np.uint64(0) - a)) - 1)
        ntz_b = np.minimum(np.where(b == 0, L, _bit_length(b & (np.uint64(0) - b)) - 1), L)
        la = np.maximum(ld + 1, L - ntz_a)
        lb = np.maximum(ld + 1, L - ntz_b)

        key_shift = np.uint64(MAX_ATTEMPT_BITS)

        # ---- pass 1: joint descent ----
        jl = np.flatnonzero(nonempty)
        vj = self._root_values(None if single else rows[jl], count=len(jl))
        ja, jb = a[jl], bm1[jl]
        jld, jtl = ld[jl], terminal[jl]
        jrow = None if single else rows[jl]
        born = [None] * (L + 2)  # pass-2 entry batches keyed by birth level
        for level in range(L + 1):
            done = jtl == level
            if done.any():
                sel = done.nonzero()[0]
                acc[jl[sel]] += vj[sel]
                keep = ~done
                jl, ja, jb, vj = jl[keep], ja[keep], jb[keep], vj[keep]
                jld, jtl = jld[keep], jtl[keep]
                if not single:
                    jrow = jrow[keep]
            if level == L or len(jl) == 0:
                break
            shift = np.uint64(L - level)
            x = self._split(level, vj, jrow, (ja >> shift) << key_shift, stats)
            if count_splits:
                splits[jl] += 1
            bit = ((ja >> np.uint64(L - level - 1)) & np.uint64(1)).astype(bool)
            new_vj = np.where(bit, vj - x, x)
            emit = jld == level
            if emit.any():
                sel = emit.nonzero()[0]
                lanes = jl[sel]
                born[level + 1] = (
                    np.concatenate((lanes, lanes)),
                    np.concatenate((ja[sel], jb[sel])),              # boundary minus one
                    np.concatenate((x[sel], vj[sel] - x[sel])),      # entry node values
                    np.concatenate((la[lanes], lb[lanes])),          # termination levels
                    np.concatenate((np.zeros(len(sel)), np.ones(len(sel)))),  # b-side flag
                    None if single else np.concatenate((jrow[sel], jrow[sel])),
                )
                keep = ~emit
                jl, ja, jb = jl[keep], ja[keep], jb[keep]
                jld, jtl = jld[keep], jtl[keep]
                new_vj = new_vj[keep]
                if not single:
                    jrow = jrow[keep]
            vj = new_vj

        # ---- pass 2: boundary walks ----
        first = next((i for i, e in enumerate(born) if e is not None), None)
        if first is None:
            return (acc, splits) if count_splits else acc
        lane = np.empty(0, dtype=np.intp)
        cm1 = np.empty(0, dtype=np.uint64)
        val = runacc = isb = isa = np.empty(0)
        term = np.empty(0, dtype=np.int64)
        row = None if single else np.empty(0, dtype=np.intp)
        scnt = np.empty(0, dtype=np.int64)
        fin_lane, fin_val, fin_cnt = [], [], []
        for level in range(first, L + 1):
            batch = born[level]
            if batch is not None:
                lane = np.concatenate((lane, batch[0]))
                cm1 = np.concatenate((cm1, batch[1]))
                val = np.concatenate((val, batch[2]))
                term = np.concatenate((term, batch[3]))
                isb = np.concatenate((isb, batch[4]))
                isa = 1.0 - isb
                runacc = np.concatenate((runacc, np.zeros(len(batch[0]))))
                if not single:
                    row = np.concatenate((row, batch[5]))
                if count_splits:
                    scnt = np.concatenate((scnt, np.zeros(len(batch[0]), dtype=np.int64)))
            if len(lane) == 0:
                continue
            done = term == level
            if done.any():
                fin_lane.append(lane[done])
                fin_val.append(runacc[done] + val[done])
                if count_splits:
                    fin_cnt.append(scnt[done])
                keep = ~done
                lane, cm1, val, term = lane[keep], cm1[keep], val[keep], term[keep]
                isb, runacc = isb[keep], runacc[keep]
                isa = 1.0 - isb
                if not single:
                    row = row[keep]
                if count_splits:
                    scnt = scnt[keep]
            if level == L or len(lane) == 0:
                continue
            shift = np.uint64(L - level)
            x = self._split(level, val, row, (cm1 >> shift) << key_shift, stats)
            if count_splits:
                scnt += 1
            bit = ((cm1 >> np.uint64(L - level - 1)) & np.uint64(1)).astype(bool)
            rest = val - x
            # the inside sibling: right child on the a side, left child on b
            runacc += np.where(bit, x * isb, rest * isa)
            val = np.where(bit, rest, x)
        if fin_lane:
            np.add.at(acc, np.concatenate(fin_lane), np.concatenate(fin_val))
            if count_splits:
                np.add.at(splits, np.concatenate(fin_lane), np.concatenate(fin_cnt))
        return (acc, splits) if count_splits else acc

    # -- public queries -------------------------------------------------------

    def range_sums(self, a, b, count_splits=False, stats=None):
        """S[a, b) in every lane.  Scalar (a, b) hits the lockstep walk;
        arrays of length n_lanes give each lane its own range."""
        if np.ndim(a) == 0 and np.ndim(b) == 0:
            return self._walk_shared(a, b, count_splits, stats)
        return self._walk_vector(a, b, None, count_splits, stats)

    def node_values(self, prefix):
        """Value of one tree node in every lane."""
        lo, hi = prefix.span(self.config.universe_log)
        return self._walk_shared(lo, hi)

    def singletons(self, i):
        i = int(i)
        if not 0 <= i < self.config.universe:
            raise IndexError(f"singleton index {i} outside [0, {self.config.universe})")
        return self._walk_shared(i, i + 1)


class Dst:
    """One simulation tree; scalar query API plus batched multi-query calls."""

    def __init__(self, config):
        self.config = config
        self._bank = DstBank(config, [config.master_seed & ((1 << 64) - 1)])

    def range_sum(self, a, b):
        return float(self._bank._walk_shared(a, b)[0])

    def range_sum_with_splits(self, a, b):
        vals, splits = self._bank._walk_shared(a, b, count_splits=True)
        return float(vals[0]), splits

    def range_sums(self, a, b, count_splits=False, stats=None):
        """Many queries against this one tree, walked level-synchronously."""
        a = np.atleast_1d(np.asarray(a, dtype=np.uint64))
        b = np.atleast_1d(np.asarray(b, dtype=np.uint64))
        return self._bank._walk_vector(a, b, None, count_splits, stats)

    def node_value(self, prefix):
        return float(self._bank.node_values(prefix)[0])

    def singleton(self, i):
        return float(self._bank.singletons(i)[0])
