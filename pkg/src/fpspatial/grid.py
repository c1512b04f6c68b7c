"""Lattice regions and the one-dimensional bin partitions.

Histogram bins are ``I_k = [(k-1)b, kb)`` and the polygon intervals are
``J_k = [(k-1/2)b, (k+1/2)b)``.  Both index maps are evaluated in exact real
arithmetic: the floating-point quotient ``x / b`` is only a first guess,
corrected with an error-free product so that boundary points always land in
the interval whose closed end they sit on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Site = tuple[int, ...]

_SPLITTER = 134217729.0  # 2**27 + 1


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dekker's product: returns ``(p, e)`` with ``a * b == p + e`` exactly."""
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def _scaled_le(t: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact test of ``t * b <= x``."""
    p, e = _two_product(t, b)
    return e <= x - p


def _exact_floor(x: np.ndarray, b: np.ndarray, shift: float) -> np.ndarray:
    """Largest integer ``q`` with ``(q - shift) * b <= x`` in exact arithmetic."""
    q = np.floor(x / b + shift)
    for _ in range(2):
        too_high = ~_scaled_le(q - shift, b, x)
        q = np.where(too_high, q - 1.0, q)
        too_low = _scaled_le(q + 1.0 - shift, b, x)
        q = np.where(too_low, q + 1.0, q)
    return q.astype(np.int64)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("bin/polygon index requires finite x")


@dataclass(frozen=True)
class BinGrid:
    """Histogram partition with common bin width ``bin_width``."""

    bin_width: float

    def __post_init__(self):
        b = float(self.bin_width)
        if not (np.isfinite(b) and b > 0.0):
            raise ValueError(f"bin width must be positive and finite, got {self.bin_width!r}")
        object.__setattr__(self, "bin_width", b)

    def bin_interval(self, k: int) -> tuple[float, float]:
        """Endpoints of ``I_k`` (left-closed, right-open)."""
        return ((k - 1) * self.bin_width, k * self.bin_width)

    def polygon_interval(self, k: int) -> tuple[float, float]:
        """Endpoints of ``J_k`` (left-closed, right-open)."""
        return ((k - 0.5) * self.bin_width, (k + 0.5) * self.bin_width)


@dataclass(frozen=True)
class PolygonWeights:
    """Interpolation weights of the polygon on ``J_k``.

    ``a`` multiplies the height of bin ``k`` and ``a_bar`` that of bin ``k+1``.
    """

    k: int
    a: float
    a_bar: float


def bin_indices(x, g: BinGrid) -> np.ndarray:
    """Vectorized :func:`bin_index`."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    b = np.full_like(x, g.bin_width)
    return _exact_floor(x, b, 0.0) + 1


def bin_index(x: float, g: BinGrid) -> int:
    """Index ``k`` of the histogram bin ``[(k-1)b, kb)`` containing ``x``."""
    return int(bin_indices(np.array([x]), g)[0])


def polygon_indices(x, g: BinGrid) -> np.ndarray:
    """Vectorized :func:`polygon_index`."""
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    b = np.full_like(x, g.bin_width)
    return _exact_floor(x, b, 0.5)


def polygon_index(x: float, g: BinGrid) -> int:
    """Index ``k`` of the polygon interval ``[(k-1/2)b, (k+1/2)b)`` containing ``x``."""
    return int(polygon_indices(np.array([x]), g)[0])


def polygon_weights_array(x, g: BinGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`polygon_weights`; returns ``(k, a, a_bar)`` arrays."""
    x = np.asarray(x, dtype=np.float64)
    k = polygon_indices(x, g)
    # offset of x from the centre of J_k, in units of b; |t| <= 1/2
    t = np.clip(x / g.bin_width - k, -0.5, 0.5)
    return k, 0.5 - t, 0.5 + t


def polygon_weights(x: float, g: BinGrid) -> PolygonWeights:
    k, a, a_bar = polygon_weights_array(np.array([x]), g)
    return PolygonWeights(int(k[0]), float(a[0]), float(a_bar[0]))


# --------------------------------------------------------------------------
# lattice geometry


def sup_distance(i: Sequence[int], j: Sequence[int]) -> int:
    """Sup-norm distance ``max_k |i_k - j_k|`` between two lattice sites."""
    if len(i) != len(j):
        raise ValueError(f"dimension mismatch: {len(i)} vs {len(j)}")
    if len(i) == 0:
        raise ValueError("sites must have dimension >= 1")
    return max(abs(int(a) - int(b)) for a, b in zip(i, j))


class SiteSet:
    """A finite set of distinct sites of ``Z^d``, kept in lexicographic order.

    Any shape is allowed; the constructors below only cover the common cases.
    """

    __slots__ = ("_sites",)

    def __init__(self, sites, d: int | None = None):
        arr = np.asarray(sites, dtype=np.int64)
        if arr.ndim == 1 and d is not None and d == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("a SiteSet needs at least one site given as rows of coordinates")
        if arr.shape[1] < 1:
            raise ValueError("sites must have dimension >= 1")
        if d is not None and arr.shape[1] != d:
            raise ValueError(f"expected dimension {d}, got sites of dimension {arr.shape[1]}")
        uniq = np.unique(arr, axis=0)
        if uniq.shape[0] != arr.shape[0]:
            raise ValueError("duplicate sites in SiteSet")
        uniq.setflags(write=False)
        self._sites = uniq

    # -- constructors -----------------------------------------------------

    @classmethod
    def rectangle(cls, shape: Sequence[int], origin: Sequence[int] | None = None) -> SiteSet:
        """Box ``origin + [0, n_1) x ... x [0, n_d)``."""
        shape = [int(n) for n in shape]
        if not shape or min(shape) < 1:
            raise ValueError(f"rectangle sides must be positive, got {shape}")
        origin = [0] * len(shape) if origin is None else [int(o) for o in origin]
        axes = [np.arange(o, o + n, dtype=np.int64) for o, n in zip(origin, shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1))

    @classmethod
    def ball(cls, center: Sequence[int], radius: int) -> SiteSet:
        """Sup-norm ball ``{i : |i - center| <= radius}``."""
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        center = [int(c) for c in center]
        return cls.rectangle([2 * radius + 1] * len(center), [c - radius for c in center])

    @classmethod
    def random_connected(cls, d: int, size: int, seed: int) -> SiteSet:
        """Random nearest-neighbour-connected set of ``size`` sites grown from the origin."""
        if d < 1 or size < 1:
            raise ValueError("need d >= 1 and size >= 1")
        rng = np.random.default_rng(seed)
        start = (0,) * d
        chosen = {start}
        order = [start]
        frontier: list[Site] = []
        in_frontier: set[Site] = set()

        def push_neighbours(site):
            for axis in range(d):
                for step in (-1, 1):
                    nb = list(site)
                    nb[axis] += step
                    nb = tuple(nb)
                    if nb not in chosen and nb not in in_frontier:
                        in_frontier.add(nb)
                        frontier.append(nb)

        push_neighbours(start)
        while len(order) < size:
            idx = int(rng.integers(len(frontier)))
            site = frontier[idx]
            frontier[idx] = frontier[-1]
            frontier.pop()
            in_frontier.discard(site)
            chosen.add(site)
            order.append(site)
            push_neighbours(site)
        return cls(order)

    @classmethod
    def from_json(cls, obj: dict) -> SiteSet:
        return cls(obj["sites"], d=int(obj["d"]))

    def to_json(self) -> dict:
        return {"d": self.dimension, "sites": self._sites.tolist()}

    # -- queries ----------------------------------------------------------

    @property
    def sites(self) -> np.ndarray:
        """``(n, d)`` read-only integer array, lexicographically sorted."""
        return self._sites

    @property
    def dimension(self) -> int:
        return int(self._sites.shape[1])

    def __len__(self) -> int:
        return int(self._sites.shape[0])

    def __iter__(self):
        return (tuple(int(c) for c in row) for row in self._sites)

    def __eq__(self, other) -> bool:
        return isinstance(other, SiteSet) and np.array_equal(self._sites, other._sites)

    def __hash__(self):
        return hash(self._sites.tobytes())

    def __repr__(self) -> str:
        return f"SiteSet(d={self.dimension}, n={len(self)})"

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise ``(min, max)`` corners."""
        return self._sites.min(axis=0), self._sites.max(axis=0)

    def is_rectangle(self) -> bool:
        lo, hi = self.bounding_box()
        return int(np.prod(hi - lo + 1)) == len(self)

    def dilate(self, m: int) -> SiteSet:
        """``{i + u : i in self, |u| <= m}``."""
        if m < 0:
            raise ValueError("dilation radius must be nonnegative")
        if m == 0:
            return self
        offsets = SiteSet.ball([0] * self.dimension, m).sites
        pts = (self._sites[:, None, :] + offsets[None, :, :]).reshape(-1, self.dimension)
        return SiteSet(np.unique(pts, axis=0))


def _as_site_array(B) -> np.ndarray:
    if isinstance(B, SiteSet):
        return B.sites
    arr = np.asarray(list(B) if not isinstance(B, np.ndarray) else B, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("set distance needs nonempty site sets")
    return arr.reshape(arr.shape[0], -1)


def set_distance(B1: SiteSet | Iterable[Sequence[int]], B2: SiteSet | Iterable[Sequence[int]]) -> int:
    """Minimum sup-norm distance between two nonempty site sets."""
    a = _as_site_array(B1)
    c = _as_site_array(B2)
    if a.shape[0] == 0 or c.shape[0] == 0:
        raise ValueError("set distance needs nonempty site sets")
    if a.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {c.shape[1]}")
    if a.shape[0] > c.shape[0]:
        a, c = c, a
    best = None
    chunk = max(1, 2_000_000 // max(1, c.shape[0]))
    for start in range(0, a.shape[0], chunk):
        block = a[start:start + chunk]
        dist = np.abs(block[:, None, :] - c[None, :, :]).max(axis=2).min()
        best = int(dist) if best is None else min(best, int(dist))
    return best
