"""Counter-based random numbers (Philox4x32-10) for reproducible parallel paths.

Every variate is a pure function of ``(seed, path_index, purpose, counters)``,
so a path can be regenerated alone, in any order, on any number of workers.

Counter layout (four 32-bit words):

    c0  primary counter (base step index, or event number)
    c1  secondary counter (bridge index within a level, or draw attempt)
    c2  (level << 8) | purpose
    c3  path index

The 64-bit master seed is the Philox key.
"""

import math

import numpy as np
from numba import njit

STREAM_ID = "philox4x32-10"

PURPOSE_BROWNIAN = 0
PURPOSE_JUMP = 1
PURPOSE_CATASTROPHE = 2

MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds; all arguments are uint64 holding 32-bit values."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> np.uint64(32)) ^ c1 ^ k0
        n1 = p1 & MASK32
        n2 = (p0 >> np.uint64(32)) ^ c3 ^ k1
        n3 = p0 & MASK32
        c0 = n0
        c1 = n1
        c2 = n2
        c3 = n3
        k0 = (k0 + _W0) & MASK32
        k1 = (k1 + _W1) & MASK32
    return c0, c1, c2, c3


@njit(cache=True, nogil=True)
def _to_unit(hi, lo):
    return (float(hi >> np.uint64(5)) * 67108864.0 + float(lo >> np.uint64(6))) * _INV_2_53


@njit(cache=True, nogil=True)
def uniform_pair(seed, path, purpose, level, n0, n1):
    """Two independent uniforms on [0, 1) for one counter tuple."""
    k0 = np.uint64(seed) & MASK32
    k1 = np.uint64(seed) >> np.uint64(32)
    c2 = (np.uint64(level) << np.uint64(8)) | np.uint64(purpose)
    r0, r1, r2, r3 = philox4x32(np.uint64(n0) & MASK32, np.uint64(n1) & MASK32,
                                c2 & MASK32, np.uint64(path) & MASK32, k0, k1)
    return _to_unit(r0, r1), _to_unit(r2, r3)


@njit(cache=True, nogil=True)
def normal(seed, path, purpose, level, n0, n1):
    """Standard normal via Box-Muller on one uniform pair."""
    u1, u2 = uniform_pair(seed, path, purpose, level, n0, n1)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(_TWO_PI * u2)


def uniforms(seed: int, path: int, purpose: int, n: int, level: int = 0) -> np.ndarray:
    """Vector of ``2 n`` uniforms from counters ``(0..n-1, 0)``; for tests and tooling."""
    out = np.empty(2 * n)
    for i in range(n):
        out[2 * i], out[2 * i + 1] = uniform_pair(seed, path, purpose, level, i, 0)
    return out
