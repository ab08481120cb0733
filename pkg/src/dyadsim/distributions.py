"""Distribution-specific root draws and binary split kernels.

A node holding the sum S = z of 2n i.i.d. variables is split by drawing the
left half-sum L from the conditional law

    f(L = x | S = z) = rho_n(x) * rho_n(z - x) / rho_2n(z),

where rho_n is the density (or pmf) of the n-fold convolution of the target
distribution; the right half is z - L.  Closed forms:

* Gaussian: the conditional law is N(z/2, n/2), so L = z/2 + sqrt(n/2) * g
  with g a standard normal produced by Box-Muller.  One attempt, never
  rejects.
* Cauchy: rejection sampling.  Proposal Y equals Y' or Y' + z with
  probability 1/2 each, Y' = n * tan(pi * (u - 1/2)) ~ Cauchy(0, n).  The
  target/proposal ratio is (4n^2 + z^2) / (2n^2 + z^2/2 + 2(x - z/2)^2),
  which never exceeds Q = 2, so each attempt accepts with probability
  exactly 1/2 on average.
* Random walk (uniform +-1 steps): for n <= 128 a tabular inverse transform
  on the exact conditional pmf (using the symmetry f(x|z) = f(-x|-z) to
  halve the table count); for n >= 256 rejection sampling with proposal
  Y = Y' + 2*ceil(z/4), Y' ~ n-step-walk drawn from a precomputed cdf
  table, and Q = 1.47.  Binomial ratios are evaluated in log space via
  log-gamma, so each density costs O(1).

All randomness enters through 64-bit strings C.  The bit extractions are
fixed and documented next to each kernel; they are part of the package's
bit-exactness contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

GAUSSIAN = "gaussian"
CAUCHY = "cauchy"
RANDOM_WALK = "rw"
DISTRIBUTIONS = (GAUSSIAN, CAUCHY, RANDOM_WALK)

RW_SMALL_N_MAX = 128      # tabular inverse transform up to here, rejection above
RW_REJECTION_Q = 1.47     # proposal constant for n >= 256; max ratio tends to sqrt(2)
CAUCHY_Q = 2.0
PROBABLE_WINDOW_SIGMAS = 8.0   # table support |x| <= 8*sqrt(n): excluded tail < 1e-14
# The f/psi ratio stays below Q for parent values within 6 sigma of X^{*2n}
# (the bound is tight at n = 256: ratio 1.4697 at |z| = 6*sqrt(2n)); beyond
# that -- reachable with probability < 1e-9 per node -- the acceptance
# probability is clamped at 1.
RW_RATIO_Z_SIGMAS = 6.0
_PMF_FLOOR = 1e-300

_MASK32 = np.uint64(0xFFFFFFFF)
_TWO32 = float(2**32)
_TWO31 = float(2**31)
_TWO53 = float(2**53)


class SamplingError(RuntimeError):
    """A rejection sampler exhausted its attempt budget (probability ~2^-100)."""


@dataclass
class KernelStats:
    """Mutable counters threaded through split kernels by benchmarks/tests."""

    splits: int = 0
    proposals: int = 0
    accepts: int = 0


# ---------------------------------------------------------------------------
# uniform extraction from 64-bit strings

def box_muller_uniforms(c):
    """C -> (u1, u2) with u1 = (hi32 + 1)/2^32 in (0, 1], u2 = lo32/2^32 in [0, 1)."""
    c = np.asarray(c, dtype=np.uint64)
    u1 = ((c >> np.uint64(32)).astype(np.float64) + 1.0) / _TWO32
    u2 = (c & _MASK32).astype(np.float64) / _TWO32
    return u1, u2


def std_normal_from_bits(c):
    """Box-Muller: g = sqrt(-2 ln u1) * cos(2 pi u2).  In-place on temporaries."""
    c = np.asarray(c, dtype=np.uint64)
    g = (c >> np.uint64(32)).astype(np.float64)
    g += 1.0
    g *= 1.0 / _TWO32
    np.log(g, out=g)
    g *= -2.0
    np.sqrt(g, out=g)
    u2 = (c & _MASK32).astype(np.float64)
    u2 *= 2.0 * np.pi / _TWO32
    np.cos(u2, out=u2)
    g *= u2
    return g


def _unit_open_53(c):
    """Top 53 bits -> u = (bits + 0.5)/2^53, uniform on (0, 1)."""
    return ((np.asarray(c, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53


# ---------------------------------------------------------------------------
# random-walk pmf tables

def _log_binom(n, k):
    """log C(n, k) via log-gamma; k may be an ndarray (values outside [0, n] -> -inf)."""
    k = np.asarray(k, dtype=np.float64)
    valid = (k >= 0) & (k <= n)
    kk = np.where(valid, k, 0.0)
    out = gammaln(n + 1.0) - gammaln(kk + 1.0) - gammaln(n - kk + 1.0)
    return np.where(valid, out, -np.inf)


@dataclass(eq=False)
class RwPmfTable:
    """Truncated pmf/cdf of the n-step walk over its probable-value window.

    support is the even-offset grid {x : |x| <= window, x == n (mod 2)};
    the excluded tail mass is below 1e-14 and the cdf is renormalized so
    its last entry is exactly 1.  log_factorials caches log(i!) over the
    binomial-index window of the support; log_binom caches log C(n, k)
    over a wider window so the rejection sampler evaluates densities with
    table lookups instead of log-gamma calls.
    """

    n: int
    support: np.ndarray
    pmf: np.ndarray
    cdf: np.ndarray
    log_factorials: np.ndarray
    k_lo: int
    log_binom: np.ndarray
    lb_lo: int

    def sample(self, u):
        """Inverse transform: smallest support point with cdf >= u."""
        idx = np.searchsorted(self.cdf, u, side="left")
        return self.support[idx]

    def log_binom_at(self, k):
        """log C(n, k) via the cached window, log-gamma on the rare misses."""
        idx = k - self.lb_lo
        inside = (idx >= 0) & (idx < len(self.log_binom))
        out = self.log_binom[np.clip(idx, 0, len(self.log_binom) - 1)]
        if not inside.all():
            miss = ~inside
            out[miss] = _log_binom(self.n, k[miss])
        return out

    @property
    def nbytes(self):
        return (self.support.nbytes + self.pmf.nbytes + self.cdf.nbytes
                + self.log_factorials.nbytes + self.log_binom.nbytes)


def build_unconditional_table(n):
    """Exact (up to truncation) table for the n-step walk X^{*n}."""
    half_width = min(n, int(math.ceil(PROBABLE_WINDOW_SIGMAS * math.sqrt(n))))
    lo = -half_width if (half_width % 2 == n % 2) else -(half_width - 1)
    support = np.arange(lo, -lo + 1, 2, dtype=np.int64)
    k = (n - support) // 2  # number of -1 steps
    k_lo, k_hi = int(k.min()), int(k.max())
    log_factorials = gammaln(np.arange(k_lo, k_hi + 1, dtype=np.float64) + 1.0)
    log_n_fact = float(gammaln(n + 1.0))
    log_pmf = (log_n_fact - log_factorials[k - k_lo] - log_factorials[(n - k) - k_lo]
               - n * math.log(2.0))
    pmf = np.exp(log_pmf)
    pmf[pmf < _PMF_FLOOR] = 0.0
    pmf /= pmf.sum()
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    margin = min(n, int(math.ceil(2.5 * PROBABLE_WINDOW_SIGMAS * math.sqrt(n))))
    lb_lo = max(0, n // 2 - margin)
    lb_hi = min(n, n // 2 + margin)
    ks = np.arange(lb_lo, lb_hi + 1, dtype=np.float64)
    log_binom = log_n_fact - gammaln(ks + 1.0) - gammaln(n - ks + 1.0)
    return RwPmfTable(n, support, pmf, cdf, log_factorials, k_lo, log_binom, lb_lo)


@dataclass(eq=False)
class RwCondTable:
    """Per-(n, z) conditional cdfs for the tabular inverse transform,
    packed for one shared binary search.

    Row r holds the conditional law of L given S = 2r on the full support
    {2r - n, ..., n}.  The rows are concatenated as ``r + cdf`` values, so
    every row occupies the disjoint interval (r, r + 1] and one
    searchsorted against ``r + u`` lands inside the right row.  Negative z
    reuses row |z|/2 through the symmetry f(x | z) = f(-x | -z).
    """

    n: int
    flat: np.ndarray
    row_start: np.ndarray

    def sample(self, z, u):
        za = np.abs(z)
        row = za >> 1
        pos = np.searchsorted(self.flat, row + u, side="left")
        idx = pos - self.row_start[row]
        x = (za - self.n) + 2 * idx
        return np.where(z < 0, -x, x)

    @property
    def nbytes(self):
        return self.flat.nbytes + self.row_start.nbytes


def build_conditional_table(n):
    chunks, starts, pos = [], [], 0
    for r in range(n + 1):
        z = 2 * r
        x = np.arange(z - n, n + 1, 2, dtype=np.int64)
        logp = _log_binom(n, (n - x) // 2) + _log_binom(n, (n - z + x) // 2)
        logp -= _log_binom(2 * n, n - z // 2)
        p = np.exp(logp)
        p /= p.sum()
        c = np.cumsum(p)
        c[-1] = 1.0
        chunks.append(r + c)
        starts.append(pos)
        pos += len(c)
    return RwCondTable(n, np.concatenate(chunks), np.array(starts, dtype=np.int64))


@dataclass(eq=False)
class RwTables:
    """All precomputed tables a random-walk tree of a given height needs."""

    universe_log: int
    unconditional: dict
    conditional: dict

    @property
    def nbytes(self):
        total = sum(t.nbytes for t in self.unconditional.values())
        total += sum(t.nbytes for t in self.conditional.values())
        return total


@lru_cache(maxsize=None)
def build_rw_tables(universe_log):
    """Tables for every width n = 2^j <= U: unconditional cdfs throughout
    (proposals and the root), conditional cdfs only for n <= 128."""
    if universe_log > 52:
        raise ValueError("random-walk universes above 2^52 would break exact integer sums")
    unconditional = {}
    conditional = {}
    for j in range(universe_log + 1):
        n = 1 << j
        unconditional[n] = build_unconditional_table(n)
        if 1 <= n <= RW_SMALL_N_MAX and j < universe_log:
            conditional[n] = build_conditional_table(n)
    return RwTables(universe_log, unconditional, conditional)


def rw_log_pmf(n, x):
    """log pmf of the n-step walk at integer points x (exact, no truncation)."""
    x = np.asarray(x, dtype=np.int64)
    ok = (np.abs(x) <= n) & (((n - x) & 1) == 0)
    k = np.where(ok, (n - x) // 2, 0)
    out = _log_binom(n, k) - n * math.log(2.0)
    return np.where(ok, out, -np.inf)


def rw_split_log_ratio(n, x, z):
    """log of f(x|z) / psi(x|z) for the large-n rejection sampler."""
    x = np.asarray(x, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    mu = 2 * ((z + 3) >> 2)  # 2 * ceil(z / 4)
    log_f = (_log_binom(n, (n - x) // 2) + _log_binom(n, (n - z + x) // 2)
             - _log_binom(2 * n, n - z // 2))
    log_psi = _log_binom(n, (n - (x - mu)) // 2) - n * math.log(2.0)
    return log_f - log_psi


# ---------------------------------------------------------------------------
# root draws

def root_sample(distribution, universe_log, c, tables=None):
    """Draw S[0, U) ~ X^{*U} from the 64-bit string(s) c.

    Gaussian: sqrt(U) * g with g from Box-Muller.  Cauchy: U * tan(pi*(u - 1/2))
    with u the top 53 bits of c.  Random walk: inverse transform on the
    X^{*U} table, u likewise 53-bit.
    """
    u_size = float(1 << universe_log)
    if distribution == GAUSSIAN:
        return math.sqrt(u_size) * std_normal_from_bits(c)
    if distribution == CAUCHY:
        u = _unit_open_53(c)
        return u_size * np.tan(np.pi * (u - 0.5))
    if distribution == RANDOM_WALK:
        u = _unit_open_53(c)
        return tables.unconditional[1 << universe_log].sample(u).astype(np.float64)
    raise ValueError(f"unknown distribution {distribution!r}")


# ---------------------------------------------------------------------------
# split kernels; each takes parent values z (float64 ndarray) and a
# draw(attempt, pending_indices) -> uint64 callback

def gaussian_split(z, n, draw, stats=None):
    """L = z/2 + sqrt(n/2) * g.  Single attempt, never rejects."""
    c = draw(0, None)
    if stats is not None:
        stats.splits += len(z)
    x = std_normal_from_bits(c)
    x *= math.sqrt(0.5 * n)
    x += 0.5 * z
    return x


def _attempt_schedule(m, max_attempts):
    """Round sizes for a shrinking rejection worklist.

    Grouping several attempts into one round and keeping the first
    acceptance reproduces the sequential semantics exactly while saving
    per-round overhead.  One attempt per round while the worklist is large
    (candidate work dominates), escalating once it shrinks.
    """
    t, k = 0, 1
    while t < max_attempts:
        yield t, min(k, max_attempts - t)
        t += k
        if m < 4096 or t >= 3:
            k = min(64, k * 4)


def _first_accept(acc, k):
    """Per lane: index of the first accepting attempt among k stacked rounds."""
    if k == 1:
        return acc, None
    acc = acc.reshape(k, -1)
    return acc.any(axis=0), acc.argmax(axis=0)


def cauchy_split(z, n, draw, max_attempts, stats=None):
    """Rejection sampler for the Cauchy conditional law.

    Each attempt consumes one 64-bit string: bit 63 is the mixture coin,
    bits 32..62 make u = (v31 + 0.5)/2^31 for Y' = n*tan(pi*(u - 1/2)), and
    bits 0..31 make the acceptance uniform (v32 + 0.5)/2^32.  The candidate
    Y = Y' + coin*z is accepted with probability
    (4n^2 + z^2) / (2*(2n^2 + z^2/2 + 2(Y - z/2)^2)), which never exceeds 1.
    """
    out = np.empty_like(z)
    pending = np.arange(len(z))
    zp = z
    # the target/proposal ratio collapses to A / (A + 4 d^2), A = 4n^2 + z^2
    ap = 4.0 * n * n + z * z
    for t, k in _attempt_schedule(len(z), max_attempts):
        c = draw(t, None if t == 0 else pending, k)
        zk = zp if k == 1 else np.tile(zp, k)
        ak = ap if k == 1 else np.tile(ap, k)
        y = ((c >> np.uint64(32)) & np.uint64(0x7FFFFFFF)).astype(np.float64)
        y += 0.5 - float(1 << 30)          # u - 1/2 in units of 2^-31
        y *= np.pi / _TWO31
        np.tan(y, out=y)
        y *= n
        coin = (c >> np.uint64(63)).astype(np.float64)
        coin *= zk
        y += coin
        d = y - 0.5 * zk
        d *= d
        d *= 4.0
        d += ak
        v = (c & _MASK32).astype(np.float64)
        v += 0.5
        v *= 1.0 / _TWO32
        v *= d                             # accept iff v * (A + 4 d^2) < A
        resolved, first = _first_accept(v < ak, k)
        if k == 1:
            rows = np.flatnonzero(resolved)
            vals = y[rows]
        else:
            rows = np.flatnonzero(resolved)
            vals = y.reshape(k, -1)[first[rows], rows]
        if stats is not None:
            stats.proposals += len(resolved) if k == 1 else int(np.where(resolved, first + 1, k).sum())
            stats.accepts += len(rows)
        out[pending[rows]] = vals
        if len(rows) == len(resolved):
            if stats is not None:
                stats.splits += len(z)
            return out
        keep = ~resolved
        pending = pending[keep]
        zp = zp[keep]
        ap = ap[keep]
    raise SamplingError(f"cauchy split: {len(pending)} lanes exhausted {max_attempts} attempts")


def _rw_split_small(z_int, n, tables, draw, stats=None):
    """Tabular inverse transform, n <= 128.  One 53-bit uniform per split."""
    c = draw(0, None)
    u = _unit_open_53(c)
    x = tables.conditional[n].sample(z_int, u)
    if stats is not None:
        stats.splits += len(z_int)
        stats.proposals += len(z_int)
        stats.accepts += len(z_int)
    return x.astype(np.float64)


def _rw_split_reject(z_int, n, tables, draw, max_attempts, stats=None):
    """Rejection sampler, n >= 256.

    Per attempt: top 32 bits -> (v32 + 0.5)/2^32 for the proposal table
    draw, low 32 bits likewise for the acceptance test.  The candidate is
    Y' + 2*ceil(z/4) with Y' an n-step walk from the table; it is accepted
    with probability f/(Q*psi), Q = 1.47, evaluated in log space.  The
    ratio is clamped at 1 for parent values outside the probable window
    (reachable only with probability < 1e-9 per node); inside the window
    it is checked against Q.
    """
    table = tables.unconditional[n]
    table2n = tables.unconditional[2 * n]
    out = np.empty(len(z_int), dtype=np.float64)
    pending = np.arange(len(z_int))
    zp = z_int
    log_q = math.log(RW_REJECTION_Q)
    nlog2 = n * math.log(2.0)
    window = RW_RATIO_Z_SIGMAS * math.sqrt(2 * n)
    ldenom = table2n.log_binom_at(n - z_int // 2)
    # log psi folded into the proposal: psi(x|z) = 2^-n C(n, (n-Y')/2)
    lpsi_support = table.log_binom_at((n - table.support) >> 1) - nlog2
    for t, k in _attempt_schedule(len(z_int), max_attempts):
        c = draw(t, None if t == 0 else pending, k)
        zk = zp if k == 1 else np.tile(zp, k)
        ldk = ldenom if k == 1 else np.tile(ldenom, k)
        mu = 2 * ((zk + 3) >> 2)
        u = ((c >> np.uint64(32)).astype(np.float64) + 0.5) * (1.0 / _TWO32)
        v = ((c & _MASK32).astype(np.float64) + 0.5) * (1.0 / _TWO32)
        pos = np.searchsorted(table.cdf, u, side="left")
        yp = table.support[pos]
        x = yp + mu
        log_f = (table.log_binom_at((n - x) >> 1) + table.log_binom_at((n - zk + x) >> 1)) - ldk
        log_psi = lpsi_support[pos]
        log_ratio = log_f - log_psi
        if __debug__:
            probable = np.abs(zk) <= window
            if probable.any():
                worst = np.max(log_ratio[probable], initial=-np.inf)
                assert worst <= log_q + 1e-9, (
                    f"rw split ratio {math.exp(worst):.4f} exceeds Q={RW_REJECTION_Q} "
                    f"inside the probable window at n={n}")
        gamma = np.exp(np.minimum(log_ratio - log_q, 0.0))
        resolved, first = _first_accept(v < gamma, k)
        rows = np.flatnonzero(resolved)
        if k == 1:
            vals = x[rows]
        else:
            vals = x.reshape(k, -1)[first[rows], rows]
        if stats is not None:
            stats.proposals += len(resolved) if k == 1 else int(np.where(resolved, first + 1, k).sum())
            stats.accepts += len(rows)
        out[pending[rows]] = vals.astype(np.float64)
        if len(rows) == len(resolved):
            if stats is not None:
                stats.splits += len(z_int)
            return out
        keep = ~resolved
        pending = pending[keep]
        zp = zp[keep]
        ldenom = ldenom[keep]
    raise SamplingError(f"rw split: {len(pending)} lanes exhausted {max_attempts} attempts")


def rw_split(z, n, tables, draw, max_attempts, stats=None, force_method=None):
    """Split an integer-valued walk sum; dispatches on the table/rejection
    boundary (n <= 128 tabular, n >= 256 rejection).  ``force_method``
    ("table" or "reject") overrides the dispatch for cross-validation."""
    z_int = np.asarray(z)
    if z_int.dtype != np.int64:
        z_int = np.rint(z_int).astype(np.int64)
    if np.any((z_int & 1) != 0) or np.any(np.abs(z_int) > 2 * n):
        raise ValueError("random-walk parent value must be even with |z| <= 2n")
    method = force_method or ("table" if n <= RW_SMALL_N_MAX else "reject")
    if method == "table":
        tbl = tables.conditional.get(n)
        if tbl is None:
            tables.conditional[n] = tbl = build_conditional_table(n)
        return _rw_split_small(z_int, n, tables, draw, stats)
    return _rw_split_reject(z_int, n, tables, draw, max_attempts, stats)


def split_left(distribution, z, n, tables, draw, max_attempts, stats=None):
    """Dispatch to the distribution's kernel; returns the left children."""
    if distribution == GAUSSIAN:
        return gaussian_split(z, n, draw, stats)
    if distribution == CAUCHY:
        return cauchy_split(z, n, draw, max_attempts, stats)
    if distribution == RANDOM_WALK:
        return rw_split(z, n, tables, draw, max_attempts, stats)
    raise ValueError(f"unknown distribution {distribution!r}")
