"""
Counter-based random numbers (Philox4x32-10).

Every random quantity in the package is a pure function of
``(seed, domain, stream, counter)``: the 64-bit seed is the Philox key,
the 128-bit counter carries the position (site coordinates or step index)
in its first three words and a ``domain << 28 | stream`` tag in the last.

Domains
-------
ENV    site statuses of a percolation environment (counter = site coords)
WALK   step choices of a walker (counter = step index)
HOLD   exponential holding times of a continuized walk (counter = jump index)
AUX    anything else (pair sampling, seeding of derived streams)
"""
import numpy as np
from numba import njit

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)

ENV = 0
WALK = 1
HOLD = 2
AUX = 3

MAX_STREAM = (1 << 28) - 1
TWO32 = 4294967296.0


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32 with 10 rounds. All arguments are taken modulo 2**32."""
    m = np.uint64(0xFFFFFFFF)
    x0 = np.uint64(c0) & m
    x1 = np.uint64(c1) & m
    x2 = np.uint64(c2) & m
    x3 = np.uint64(c3) & m
    key0 = np.uint64(k0) & m
    key1 = np.uint64(k1) & m
    for _ in range(10):
        p0 = x0 * np.uint64(0xD2511F53)
        p1 = x2 * np.uint64(0xCD9E8D57)
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & m
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & m
        x0 = (hi1 ^ x1 ^ key0) & m
        x1 = lo1
        x2 = (hi0 ^ x3 ^ key1) & m
        x3 = lo0
        key0 = (key0 + np.uint64(0x9E3779B9)) & m
        key1 = (key1 + np.uint64(0xBB67AE85)) & m
    return x0, x1, x2, x3


@njit(cache=True, nogil=True)
def uniform01(c0, c1, c2, c3, k0, k1):
    """Uniform double in the open interval (0, 1) built from 53 random bits."""
    w0, w1, _, _ = philox4x32(c0, c1, c2, c3, k0, k1)
    hi = w0 >> np.uint64(6)  # 26 bits
    lo = w1 >> np.uint64(5)  # 27 bits
    return (float(hi) * 134217728.0 + float(lo) + 0.5) / 9007199254740992.0


def split_seed(seed):
    """Return the two 32-bit Philox key words of a 64-bit seed."""
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def tag(domain, stream=0):
    """Fourth counter word for ``(domain, stream)``."""
    stream = int(stream)
    if not 0 <= stream <= MAX_STREAM:
        raise ValueError(f"stream id must lie in [0, {MAX_STREAM}], got {stream}")
    return (int(domain) << 28) | stream


@njit(cache=True, nogil=True)
def _uniform_block(k0, k1, t, start, count):
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        c = start + i
        out[i] = uniform01(c & 0xFFFFFFFF, c >> 32, 0, t, k0, k1)
    return out


def uniforms(seed, domain, stream, count, start=0):
    """``count`` consecutive uniforms of one stream, counters ``start..start+count-1``."""
    k0, k1 = split_seed(seed)
    return _uniform_block(k0, k1, tag(domain, stream), int(start), int(count))


def exponentials(seed, stream, count, start=0):
    """Rate-1 exponential draws from the HOLD domain."""
    return -np.log(uniforms(seed, HOLD, stream, count, start))


def derive_seed(seed, stream):
    """Child 64-bit seed for an independent sub-experiment (AUX domain)."""
    k0, k1 = split_seed(seed)
    w0, w1, _, _ = philox4x32(0, 0, 0, tag(AUX, stream), k0, k1)
    return int(w0) | (int(w1) << 32)
