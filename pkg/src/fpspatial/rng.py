"""Counter-based random numbers keyed by lattice coordinates.

Each value is a pure function of ``(master seed, stream, replicate, site)``:
the first three are hashed into a Philox4x32-10 key and the site coordinates
form the counter.  Any site can be drawn in isolation, in any order, on any
worker, and always gets the same number.
"""

from __future__ import annotations

import numpy as np

from .normal import norm_quantile

_MASK64 = (1 << 64) - 1
_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85

# stream tags
IID = 1
INNOVATION = 2


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_key(master_seed: int, stream: int, replicate: int) -> tuple[int, int]:
    """Two 32-bit Philox key words for one (seed, stream, replicate) triple."""
    if master_seed < 0 or replicate < 0:
        raise ValueError("seed and replicate index must be nonnegative")
    h = splitmix64(master_seed & _MASK64)
    h = splitmix64(h ^ (stream & _MASK64))
    h = splitmix64(h ^ (replicate & _MASK64))
    return h & 0xFFFFFFFF, h >> 32


def philox4x32(counter: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function on a ``(n, 4)`` array of 32-bit counter words."""
    c = [np.asarray(counter[:, j], dtype=np.uint64) & _MASK32 for j in range(4)]
    k0, k1 = key[0] & 0xFFFFFFFF, key[1] & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = c[0] * _M0
        p1 = c[2] * _M1
        hi0, lo0 = p0 >> np.uint64(32), p0 & _MASK32
        hi1, lo1 = p1 >> np.uint64(32), p1 & _MASK32
        c = [hi1 ^ c[1] ^ np.uint64(k0), lo1, hi0 ^ c[3] ^ np.uint64(k1), lo0]
    return np.stack(c, axis=1).astype(np.uint32)


def _fold(cols: np.ndarray) -> np.ndarray:
    # mixes coordinates 4..d into one word; only used for d > 4
    h = np.zeros(cols.shape[0], dtype=np.uint64)
    for j in range(cols.shape[1]):
        h = h ^ cols[:, j].astype(np.uint64)
        h = h * np.uint64(0x9E3779B97F4A7C15)
        h = h ^ (h >> np.uint64(29))
    return h & _MASK32


def site_counters(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 1:
        coords = coords[:, None]
    if coords.size and (coords.min() < -(2**31) or coords.max() >= 2**31):
        raise ValueError("site coordinates must fit in 32-bit signed integers")
    n, d = coords.shape
    ctr = np.zeros((n, 4), dtype=np.uint64)
    u = coords.astype(np.uint64) & _MASK32
    if d <= 4:
        ctr[:, :d] = u
    else:
        ctr[:, :3] = u[:, :3]
        ctr[:, 3] = _fold(u[:, 3:])
    return ctr


def site_uniforms(master_seed: int, stream: int, replicate: int, coords: np.ndarray) -> np.ndarray:
    """One uniform on the open interval (0, 1) per site, with 53 random bits."""
    words = philox4x32(site_counters(coords), derive_key(master_seed, stream, replicate))
    hi = (words[:, 0] >> np.uint32(5)).astype(np.float64)
    lo = (words[:, 1] >> np.uint32(6)).astype(np.float64)
    return (hi * 67108864.0 + lo + 0.5) / 9007199254740992.0


def site_normals(master_seed: int, stream: int, replicate: int, coords: np.ndarray) -> np.ndarray:
    """Standard normal draws by inversion of :func:`site_uniforms`."""
    return norm_quantile(site_uniforms(master_seed, stream, replicate, coords))
