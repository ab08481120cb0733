"""Hash machinery that turns (level, node, attempt) into 64-bit split seeds.

Every randomized decision in a simulation tree is driven by a uniform
64-bit string C obtained by hashing the node's index with a per-level hash
function.  Two families are provided:

* ``fast`` -- a seeded SplitMix64 finalizer.  Nanoseconds per value,
  excellent avalanche behaviour, no independence guarantee.  Default for
  applications and benchmarks.
* ``polyK`` (k >= 2) -- degree-(k-1) polynomials over the Mersenne prime
  field GF(2^61 - 1), a provably k-wise independent family.  Used by the
  theorem-checking suites.

Outputs are bit-exact and platform independent.  The constants and the
evaluation order documented here are a public interface: an independent
implementation following this docstring reproduces every value.

Key encoding
    ``key = node_index * 128 + attempt`` with ``attempt < 128``, so the
    retry seeds consumed by rejection sampling stay inside the k-wise
    family over an enlarged key universe.

fast
    ``h(key) = mix64((seed + (key + 1) * GOLDEN) mod 2^64)`` where
    ``GOLDEN = 0x9E3779B97F4A7C15`` and ``mix64`` is the SplitMix64
    finalizer::

        z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
        z ^= z >> 27;  z *= 0x94D049BB133111EB
        z ^= z >> 31

polyK
    ``h(key) = mix64(horner(c, key mod p))`` with ``p = 2^61 - 1`` and
    ``horner(c, x) = (...((c[k-1] * x + c[k-2]) * x + ...) * x + c[0]) mod p``.
    The trailing mix64 stretches the 61-bit field element to 64 bits; a
    fixed bijection applied after the fact cannot break the family's joint
    independence.

Seed derivation
    Per-level seeds expand a 64-bit master seed through the same mixer:
    ``level_seed[l] = h_fast(master, l)``.  Polynomial coefficients for
    level l are drawn from the stream ``v_j = h_fast(level_seed[l], j)``,
    rejecting ``v_j >= 2^64 - 8`` (so that ``v mod p`` is exactly uniform)
    and additionally rejecting zero for the leading coefficient.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MIX_MULT_1 = 0xBF58476D1CE4E5B9
MIX_MULT_2 = 0x94D049BB133111EB
MERSENNE61 = (1 << 61) - 1
MAX_ATTEMPT_BITS = 7  # attempt index packed into the low 7 bits of the key
MAX_ATTEMPTS = 1 << MAX_ATTEMPT_BITS

_U64 = (1 << 64) - 1
# Largest multiple of p below 2^64; the acceptance region for exact
# uniformity of (v mod p).  Equals 2^64 - 8 for p = 2^61 - 1.
_POLY_ACCEPT_BOUND = (_U64 + 1) - ((_U64 + 1) % MERSENNE61)

_G = np.uint64(GOLDEN)
_M1 = np.uint64(MIX_MULT_1)
_M2 = np.uint64(MIX_MULT_2)
_MASK61 = np.uint64(MERSENNE61)
_MASK32 = np.uint64(0xFFFFFFFF)


def mix64(x):
    """SplitMix64 finalizer; accepts a Python int or a uint64 ndarray."""
    if isinstance(x, np.ndarray):
        z = np.bitwise_xor(x, x >> np.uint64(30))
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
        return z
    z = x & _U64
    z = ((z ^ (z >> 30)) * MIX_MULT_1) & _U64
    z = ((z ^ (z >> 27)) * MIX_MULT_2) & _U64
    return z ^ (z >> 31)


def hash_u64(seed, key):
    """The ``fast`` family: mix64 of the key-th SplitMix64 stream element."""
    if isinstance(key, np.ndarray) or isinstance(seed, np.ndarray):
        s = seed if isinstance(seed, np.ndarray) else np.uint64(int(seed) & _U64)
        if isinstance(key, np.ndarray):
            k = key.astype(np.uint64, copy=False) * _G
            k += _G
        else:
            k = np.uint64(((int(key) + 1) * GOLDEN) & _U64)
        return mix64(s + k)
    return mix64((seed + (key + 1) * GOLDEN) & _U64)


def derive_seed(base, index):
    """Derive an independent 64-bit seed from ``base``, one per ``index``."""
    return hash_u64(base, index)


def encode_key(node_index, attempt):
    """Pack (node index, rejection attempt) into one hash key."""
    if isinstance(attempt, int) and not 0 <= attempt < MAX_ATTEMPTS:
        raise ValueError(f"attempt index {attempt} out of range [0, {MAX_ATTEMPTS})")
    if isinstance(node_index, np.ndarray):
        return (node_index.astype(np.uint64) << np.uint64(MAX_ATTEMPT_BITS)) | np.uint64(attempt)
    return (int(node_index) << MAX_ATTEMPT_BITS) | int(attempt)


def _mulmod61(a, b):
    """(a * b) mod (2^61 - 1) on uint64 ndarrays, a, b < 2^61.

    The 128-bit product is assembled from four 32x32 partial products and
    folded with 2^61 == 1 (mod p).
    """
    a = a.astype(np.uint64, copy=False)
    b = b.astype(np.uint64, copy=False)
    a_hi, a_lo = a >> np.uint64(32), a & _MASK32
    b_hi, b_lo = b >> np.uint64(32), b & _MASK32
    p00 = a_lo * b_lo
    mid = a_lo * b_hi + a_hi * b_lo  # < 2^62, no wrap
    p11 = a_hi * b_hi
    lo = p00 + (mid << np.uint64(32))  # wraps mod 2^64
    carry = (lo < p00).astype(np.uint64)
    hi = p11 + (mid >> np.uint64(32)) + carry
    # product = hi * 2^64 + lo;  2^64 == 8 (mod p)
    r = (hi << np.uint64(3)) + (lo >> np.uint64(61)) + (lo & _MASK61)
    r = (r >> np.uint64(61)) + (r & _MASK61)
    r = (r >> np.uint64(61)) + (r & _MASK61)
    return np.where(r >= _MASK61, r - _MASK61, r)


def _mod61(x):
    """x mod (2^61 - 1) for uint64 ndarrays."""
    r = (x >> np.uint64(61)) + (x & _MASK61)
    r = (r >> np.uint64(61)) + (r & _MASK61)
    return np.where(r >= _MASK61, r - _MASK61, r)


def _poly_eval(coeffs, keys):
    """Horner evaluation over GF(2^61 - 1), vectorized.

    coeffs: (..., k) uint64 field elements, broadcastable against keys.
    keys:   uint64 ndarray.
    """
    x = _mod61(keys.astype(np.uint64))
    k = coeffs.shape[-1]
    acc = np.broadcast_to(coeffs[..., k - 1], x.shape).astype(np.uint64, copy=True)
    for j in range(k - 2, -1, -1):
        acc = _mulmod61(acc, x)
        acc = _mod61(acc + coeffs[..., j])
    return acc


def parse_family(name):
    """Validate a hash family name; returns (kind, k) with kind in {fast, poly}."""
    if name == "fast":
        return "fast", 0
    m = re.fullmatch(r"poly(\d+)", name)
    if m:
        k = int(m.group(1))
        if k < 2:
            raise ValueError("polynomial family needs k >= 2; a constant polynomial is not a hash")
        return "poly", k
    raise ValueError(f"unknown hash family {name!r} (expected 'fast' or 'polyK')")


@dataclass(frozen=True, eq=False)
class HashFamilySpec:
    """Per-level hash functions for a stack of simulation-tree lanes.

    ``mixer_seeds`` has shape (lanes, levels); ``poly_coeffs`` has shape
    (lanes, levels, k).  Level ``universe_log`` (one past the last split
    level) feeds the root draw.
    """

    kind: str
    k: int
    levels: int
    lanes: int
    mixer_seeds: np.ndarray | None = field(default=None, repr=False)
    poly_coeffs: np.ndarray | None = field(default=None, repr=False)

    def draw(self, level, rows, keys):
        """Hash ``keys`` (uint64 ndarray) with lane ``rows``' level function."""
        if self.kind == "fast":
            return hash_u64(self.mixer_seeds[rows, level], keys)
        return mix64(_poly_eval(self.poly_coeffs[rows, level, :], keys))

    def draw_single(self, level, keys):
        """Lane 0 only; skips the per-element seed gather."""
        if self.kind == "fast":
            return hash_u64(self.mixer_seeds[0, level], keys)
        return mix64(_poly_eval(self.poly_coeffs[0, level, :], keys))

    def draw_all(self, level, keys, reps=1):
        """All lanes in order, repeated ``reps`` times (len(keys) == lanes*reps);
        a tiled column view instead of a per-element gather."""
        if self.kind == "fast":
            s = self.mixer_seeds[:, level]
            return hash_u64(s if reps == 1 else np.tile(s, reps), keys)
        c = self.poly_coeffs[:, level, :]
        return mix64(_poly_eval(c if reps == 1 else np.tile(c, (reps, 1)), keys))


def derive_level_seeds(master_seeds, levels, family="fast"):
    """Expand master seed(s) into a HashFamilySpec with ``levels`` entries.

    ``master_seeds`` may be a scalar or a uint64 array (one per lane).
    Deterministic: equal inputs produce an identical spec.
    """
    kind, k = parse_family(family)
    masters = np.atleast_1d(np.asarray(master_seeds, dtype=np.uint64))
    lanes = masters.shape[0]
    level_idx = np.arange(levels, dtype=np.uint64)
    level_seeds = hash_u64(masters[:, None], np.broadcast_to(level_idx, (lanes, levels)))
    if kind == "fast":
        return HashFamilySpec(kind, 0, levels, lanes, mixer_seeds=level_seeds)

    coeffs = np.zeros((lanes, levels, k), dtype=np.uint64)
    # Stream position advances past rejected draws so the result stays a
    # pure function of the level seed.
    stream_pos = np.zeros((lanes, levels), dtype=np.uint64)
    for j in range(k):
        need = np.ones((lanes, levels), dtype=bool)
        while need.any():
            v = hash_u64(level_seeds, stream_pos)
            stream_pos += np.uint64(1)
            ok = need & (v < np.uint64(_POLY_ACCEPT_BOUND))
            c = _mod61(v)
            if j == k - 1:
                ok &= c != np.uint64(0)  # leading coefficient must be nonzero
            coeffs[..., j] = np.where(ok, c, coeffs[..., j])
            need &= ~ok
    return HashFamilySpec(kind, k, levels, lanes, poly_coeffs=coeffs)


def hash_node(spec, level, key):
    """Hash one node key with the level's function of lane 0 (scalar API)."""
    if not 0 <= level < spec.levels:
        raise ValueError(f"level {level} outside spec with {spec.levels} levels")
    out = spec.draw(level, np.zeros(1, dtype=np.intp), np.asarray([key], dtype=np.uint64))
    return int(out[0])
