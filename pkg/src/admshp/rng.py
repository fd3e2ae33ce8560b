"""Counter-based random numbers (Philox4x32-10) for reproducible parallel simulation.

Every variate is a pure function of ``(seed, counter)``, so any replicate can
be regenerated on its own and the output never depends on how replicates
are split across workers. Normal variates use the inverse CDF, so each one
consumes exactly one uniform.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["philox4x32", "uniforms", "normals"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : array-like of shape (..., 4), uint32 values
    key : array-like of shape (..., 2), uint32 values

    Returns
    -------
    ndarray of shape (..., 4), dtype uint32
    """
    c = np.asarray(counter, dtype=np.uint64) & _MASK
    k = np.asarray(key, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = (c[..., i] for i in range(4))
    k0, k1 = k[..., 0], k[..., 1]
    for i in range(rounds):
        if i:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _S32, p0 & _MASK
        hi1, lo1 = p1 >> _S32, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def _key(seed: int) -> np.ndarray:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)


def uniforms(seed: int, stream: int, block: int, reps, n: int) -> np.ndarray:
    """Open-interval uniforms of shape ``(len(reps), n)``.

    Replicate ``rep`` of block ``block`` in stream ``stream`` always receives
    the same ``n`` numbers. Each Philox call yields two 53-bit doubles.
    """
    reps = np.asarray(reps, dtype=np.uint64)
    m = (n + 1) // 2
    ctr = np.empty(reps.shape + (m, 4), dtype=np.uint64)
    ctr[..., 0] = np.arange(m, dtype=np.uint64)
    ctr[..., 1] = reps[..., None]
    ctr[..., 2] = np.uint64(block)
    ctr[..., 3] = np.uint64(stream)
    out = philox4x32(ctr, _key(seed)).astype(np.uint64)
    a = (out[..., 0::2] >> np.uint64(5)).astype(np.float64)
    b = (out[..., 1::2] >> np.uint64(6)).astype(np.float64)
    u = (a * 67108864.0 + b + 0.5) / 9007199254740992.0
    return u.reshape(reps.shape + (2 * m,))[..., :n]


def normals(seed: int, stream: int, block: int, reps, n: int) -> np.ndarray:
    """Standard normal variates by inverse CDF of :func:`uniforms`."""
    return ndtri(uniforms(seed, stream, block, reps, n))
