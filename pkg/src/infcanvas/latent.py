"""Coordinate-addressed i.i.d. standard-normal fields over the integer plane.

A value is a pure function of ``(seed, site_id, i, j, c)``::

    h = mix64(seed)
    for v in (site_id, i, j, c, lane):
        h = mix64((h + GOLDEN) ^ u64(v))        # arithmetic mod 2**64
    word(lane) = h

``mix64`` is the SplitMix64 finalizer and ``u64`` is two's-complement
reinterpretation of a signed integer. Two words (lanes 0 and 1) feed one
Box-Muller draw::

    u1 = (word(0) >> 11) * 2**-53, replaced by 2**-53 when it is 0
    u2 = (word(1) >> 11) * 2**-53
    z  = sqrt(-2 ln u1) * cos(2 pi u2)

Only the cosine branch is used, and ``ln`` and ``cos`` are the C library's
scalar functions. docs/FORMATS.md repeats this with test
vectors. Because there is no sequential state, any patch can be materialized
in any order and overlapping patches agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Rect, Tensor3
from .errors import ChannelError, ParameterError

GOLDEN = 0x9E3779B97F4A7C15
MIX_MUL_1 = 0xBF58476D1CE4E5B9
MIX_MUL_2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(MIX_MUL_1)
_U_M2 = np.uint64(MIX_MUL_2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_INV_2_53 = 2.0**-53


def _u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return np.atleast_1d(arr)
    if arr.dtype.kind not in "iu":
        raise ParameterError(f"hash inputs must be integers, got dtype {arr.dtype}")
    return np.atleast_1d(arr.astype(np.int64).astype(np.uint64))


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _S30)
    z = z * _U_M1
    z = z ^ (z >> _S27)
    z = z * _U_M2
    return z ^ (z >> _S31)


def hash_words(seed, site_id, i, j, c, lane) -> np.ndarray:
    """Vectorized 64-bit words; arguments broadcast like numpy arrays."""
    with np.errstate(over="ignore"):
        h = _mix64(_u64(seed))
        for v in (site_id, i, j, c, lane):
            h = _mix64((h + _U_GOLDEN) ^ _u64(v))
    return h


def gaussian(seed, site_id, i, j, c) -> np.ndarray:
    """Standard-normal values at broadcast coordinates (Box-Muller, cosine branch)."""
    w0 = hash_words(seed, site_id, i, j, c, 0)
    w1 = hash_words(seed, site_id, i, j, c, 1)
    u1 = (w0 >> _S11).astype(np.float64) * _INV_2_53
    u1[u1 == 0.0] = _INV_2_53
    u2 = (w1 >> _S11).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * _libm(math.log, u1)) * _libm(math.cos, 2.0 * np.pi * u2)


def _libm(fn, x: np.ndarray) -> np.ndarray:
    # numpy's SIMD log/cos differ from the C library by an ulp on some inputs
    # and CPUs; the field is defined by the scalar functions.
    return np.fromiter(map(fn, x.ravel().tolist()), np.float64, x.size).reshape(x.shape)


def reference_gaussian(seed: int, site_id: int, i: int, j: int, c: int) -> float:
    """Scalar pure-Python rendering of the documented algorithm (used as a cross-check)."""

    def mix(z: int) -> int:
        z ^= z >> 30
        z = (z * MIX_MUL_1) & MASK64
        z ^= z >> 27
        z = (z * MIX_MUL_2) & MASK64
        return z ^ (z >> 31)

    def word(lane: int) -> int:
        h = mix(seed & MASK64)
        for v in (site_id, i, j, c, lane):
            h = mix(((h + GOLDEN) & MASK64) ^ (v & MASK64))
        return h

    u1 = (word(0) >> 11) * _INV_2_53
    if u1 == 0.0:
        u1 = _INV_2_53
    u2 = (word(1) >> 11) * _INV_2_53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class LatentField:
    """One infinite noise process ``z^site(., .)`` with ``channels`` values per pixel."""

    seed: int
    site_id: int
    channels: int

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= MASK64:
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.channels < 1:
            raise ParameterError(f"channels must be positive, got {self.channels}")


def sample_at(f: LatentField, i: int, j: int, c: int) -> float:
    if not 0 <= c < f.channels:
        raise ChannelError(f"channel {c} out of range for field with {f.channels} channels")
    return float(gaussian(np.uint64(f.seed), f.site_id, i, j, c)[0])


def field_values(seeds, site_id: int, channels: int, r: Rect) -> np.ndarray:
    """Raw ``(n, rows, cols, channels)`` block for a batch of seeds."""
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1, 1, 1)
    rows = np.arange(r.row_start, r.row_end, dtype=np.int64).reshape(1, -1, 1, 1)
    cols = np.arange(r.col_start, r.col_end, dtype=np.int64).reshape(1, 1, -1, 1)
    chans = np.arange(channels, dtype=np.int64).reshape(1, 1, 1, -1)
    shape = (seeds.shape[0], r.height(), r.width(), channels)
    # Broadcast before hashing so every element goes through identical code.
    args = np.broadcast_arrays(seeds, rows.astype(np.uint64), cols.astype(np.uint64), chans.astype(np.uint64))
    values = gaussian(args[0], site_id, args[1], args[2], args[3])
    return values.reshape(shape)


def materialize(f: LatentField, r: Rect) -> Tensor3:
    data = field_values([f.seed], f.site_id, f.channels, r)[0]
    return Tensor3(r, data, _owned=True)
