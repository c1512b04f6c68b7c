"""Histogram, frequency polygon and the normalized polygon estimator.

For ``x`` in ``J_k`` the polygon interpolates the heights of bins ``k`` and
``k+1``::

    f_{n,k}(x) = (a nu_k + a_bar nu_{k+1}) / (N b),   a = 1/2 + k - x/b

and the normalized estimator divides by ``sigma_{n,k}(x)`` with
``sigma^2 = (1/2 + 2 (k - x/b)^2) f(x)``.  Anything that needs the true
``f`` (normalization, centering, oracles) takes a :class:`TargetDensity`
explicitly; with real data only the raw histogram and polygon are available.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .densities import TargetDensity, interval_probability
from .fields import FieldSample
from .grid import BinGrid, bin_indices, polygon_weights_array


@dataclass(frozen=True, eq=False)
class BinCounts:
    """Occupation numbers ``nu_s`` of the histogram bins (zero bins omitted)."""

    grid: BinGrid
    counts: Mapping[int, int]
    total: int

    def __post_init__(self):
        if self.total < 1:
            raise ValueError("bin counts need at least one observation")
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("negative count")
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not add up to the total")

    def __getitem__(self, s: int) -> int:
        return self.counts.get(int(s), 0)

    def lookup(self, s: np.ndarray) -> np.ndarray:
        """Vectorized ``nu_s``."""
        if not self.counts:
            return np.zeros(np.shape(s), dtype=np.int64)
        keys = np.fromiter(sorted(self.counts), dtype=np.int64)
        vals = np.array([self.counts[k] for k in keys.tolist()], dtype=np.int64)
        s = np.asarray(s, dtype=np.int64)
        pos = np.clip(np.searchsorted(keys, s), 0, len(keys) - 1)
        return np.where(keys[pos] == s, vals[pos], 0)

    def heights(self) -> dict[int, float]:
        """Histogram heights ``nu_s / (N b)``."""
        nb = self.total * self.grid.bin_width
        return {s: c / nb for s, c in sorted(self.counts.items())}


def bin_counts(sample: FieldSample | Sequence[float] | np.ndarray, g: BinGrid) -> BinCounts:
    """Count observations per histogram bin."""
    values = sample.values if isinstance(sample, FieldSample) else np.asarray(sample, dtype=np.float64)
    values = np.ravel(values)
    if values.size == 0:
        raise ValueError("cannot bin an empty sample")
    keys, cnt = np.unique(bin_indices(values, g), return_counts=True)
    return BinCounts(g, dict(zip(keys.tolist(), cnt.tolist())), int(values.size))


def merge_counts(parts: Sequence[BinCounts]) -> BinCounts:
    """Combine counts of disjoint shards of one sample."""
    if not parts:
        raise ValueError("nothing to merge")
    g = parts[0].grid
    merged: dict[int, int] = {}
    for p in parts:
        if p.grid != g:
            raise ValueError("cannot merge counts on different grids")
        for s, c in p.counts.items():
            merged[s] = merged.get(s, 0) + c
    return BinCounts(g, dict(sorted(merged.items())), sum(p.total for p in parts))


def fp_evaluate(counts: BinCounts, x):
    """Raw frequency polygon at ``x`` (scalar or array)."""
    k, a, a_bar = polygon_weights_array(np.atleast_1d(np.asarray(x, dtype=np.float64)), counts.grid)
    nb = counts.total * counts.grid.bin_width
    out = (a * counts.lookup(k) + a_bar * counts.lookup(k + 1)) / nb
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class SigmaKernel:
    k: int
    x: float
    value: float


def sigma_kernel(x: float, g: BinGrid, fx: float) -> SigmaKernel:
    """Asymptotic variance factor ``(1/2 + 2 (k - x/b)^2) f(x)`` on ``J_k``."""
    if not fx > 0:
        raise ValueError(f"sigma kernel needs f(x) > 0, got {fx}")
    k, a, _ = polygon_weights_array(np.array([x], dtype=np.float64), g)
    t = 0.5 - a[0]  # = x/b - k
    return SigmaKernel(int(k[0]), float(x), float((0.5 + 2.0 * t * t) * fx))


def _positive_pdf(f: TargetDensity, x: float) -> float:
    fx = float(f.pdf(x))
    if not fx > 0:
        raise ValueError(
            f"normalized estimator is defined only where f(x) > 0; f({x}) = {fx}")
    return fx


def expected_fp(f: TargetDensity, g: BinGrid, x: float) -> float:
    """Exact mean ``(a p_k + a_bar p_{k+1}) / b`` of the polygon at ``x``.

    Holds for any stationary field whose marginal is ``f``.
    """
    k, a, a_bar = polygon_weights_array(np.array([x], dtype=np.float64), g)
    k = int(k[0])
    p_k = interval_probability(f, *g.bin_interval(k))
    p_k1 = interval_probability(f, *g.bin_interval(k + 1))
    return (float(a[0]) * p_k + float(a_bar[0]) * p_k1) / g.bin_width


@dataclass(frozen=True)
class VarianceOracle:
    """``w = N b Var(f_{n,k}(x))`` for an i.i.d. sample, and ``w / sigma^2``."""

    k: int
    a: float
    a_bar: float
    p_k: float
    p_k1: float
    w: float
    sigma2: float | None
    ratio: float | None


def iid_variance_oracle(f: TargetDensity, g: BinGrid, x: float) -> VarianceOracle:
    k, a, a_bar = polygon_weights_array(np.array([x], dtype=np.float64), g)
    k, a, a_bar = int(k[0]), float(a[0]), float(a_bar[0])
    b = g.bin_width
    p_k = interval_probability(f, *g.bin_interval(k))
    p_k1 = interval_probability(f, *g.bin_interval(k + 1))
    w = (a * a * p_k * (1 - p_k) + a_bar * a_bar * p_k1 * (1 - p_k1) - 2 * a * a_bar * p_k * p_k1) / b
    fx = float(f.pdf(x))
    if fx > 0:
        s2 = sigma_kernel(x, g, fx).value
        return VarianceOracle(k, a, a_bar, p_k, p_k1, w, s2, w / s2)
    return VarianceOracle(k, a, a_bar, p_k, p_k1, w, None, None)


@dataclass(frozen=True)
class PointPlan:
    """Everything about one evaluation point that does not depend on the data."""

    x: float
    k: int
    a: float
    a_bar: float
    sigma: float
    mean_fp: float


def point_plan(f: TargetDensity, g: BinGrid, x: float) -> PointPlan:
    fx = _positive_pdf(f, x)
    k, a, a_bar = polygon_weights_array(np.array([x], dtype=np.float64), g)
    sig = math.sqrt(sigma_kernel(x, g, fx).value)
    return PointPlan(float(x), int(k[0]), float(a[0]), float(a_bar[0]), sig, expected_fp(f, g, x))


def _fp_from_plan(plan: PointPlan, nu_k, nu_k1, total: int, b: float):
    return (plan.a * nu_k + plan.a_bar * nu_k1) / (total * b)


def fn_from_counts(plan: PointPlan, nu_k, nu_k1, total: int, b: float):
    """Normalized estimator from the two relevant bin counts."""
    return _fp_from_plan(plan, nu_k, nu_k1, total, b) / plan.sigma


def clt_from_counts(plan: PointPlan, nu_k, nu_k1, total: int, b: float):
    """Centered and scaled statistic ``sqrt(N b) (f_n(x) - E f_n(x))``."""
    fn = fn_from_counts(plan, nu_k, nu_k1, total, b)
    return math.sqrt(total * b) * (fn - plan.mean_fp / plan.sigma)


def fn_normalized(counts: BinCounts, x: float, f: TargetDensity) -> float:
    """``f_{n,k}(x) / sigma_{n,k}(x)``; requires the true density (simulation mode)."""
    plan = point_plan(f, counts.grid, x)
    return float(fn_from_counts(plan, counts[plan.k], counts[plan.k + 1], counts.total,
                                counts.grid.bin_width))


def clt_statistic(counts: BinCounts, x: float, f: TargetDensity) -> float:
    plan = point_plan(f, counts.grid, x)
    return float(clt_from_counts(plan, counts[plan.k], counts[plan.k + 1], counts.total,
                                 counts.grid.bin_width))


def fp_integral(counts: BinCounts) -> float:
    """Integral of the polygon over the real line, by exact piecewise-linear integration.

    On ``J_k`` the polygon is linear with end values ``h_k`` and ``h_{k+1}``,
    so its integral there is ``b (h_k + h_{k+1}) / 2``.
    """
    if not counts.counts:
        return 0.0
    b = counts.grid.bin_width
    nb = counts.total * b
    lo, hi = min(counts.counts), max(counts.counts)
    return math.fsum(b * (counts[k] + counts[k + 1]) / (2.0 * nb) for k in range(lo - 1, hi + 1))


# --------------------------------------------------------------------------
# CSV exports


def histogram_csv(counts: BinCounts) -> str:
    """Rows ``k, left_edge, count, histogram_height`` for every bin between the extremes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "left_edge", "count", "histogram_height"])
    b = counts.grid.bin_width
    nb = counts.total * b
    lo, hi = min(counts.counts), max(counts.counts)
    for k in range(lo, hi + 1):
        c = counts[k]
        w.writerow([k, repr((k - 1) * b), c, repr(c / nb)])
    return buf.getvalue()


def evaluation_grid(counts: BinCounts, points_per_bin: int = 10) -> np.ndarray:
    """Grid over ``[min_edge - b, max_edge + b]`` with ``points_per_bin`` steps per bin."""
    if points_per_bin < 1:
        raise ValueError("points_per_bin must be >= 1")
    b = counts.grid.bin_width
    lo = (min(counts.counts) - 2) * b
    hi = (max(counts.counts) + 1) * b
    n = int(round((hi - lo) / b)) * points_per_bin
    return lo + (hi - lo) * np.arange(n + 1) / n


def polygon_grid_csv(counts: BinCounts, xs: np.ndarray, f: TargetDensity | None = None) -> str:
    """Rows ``x, fp_value`` and, in simulation mode, ``fn_value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fp = fp_evaluate(counts, xs)
    if f is None:
        w.writerow(["x", "fp_value"])
        for x, v in zip(xs.tolist(), fp.tolist()):
            w.writerow([repr(x), repr(v)])
        return buf.getvalue()
    w.writerow(["x", "fp_value", "fn_value"])
    for x, v in zip(xs.tolist(), fp.tolist()):
        fx = float(f.pdf(x))
        fn = repr(v / math.sqrt(sigma_kernel(x, counts.grid, fx).value)) if fx > 0 else ""
        w.writerow([repr(x), repr(v), fn])
    return buf.getvalue()
