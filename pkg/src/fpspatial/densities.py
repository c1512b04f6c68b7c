"""Target marginal densities and their bin probabilities.

Every built-in density has a closed-form CDF, so bin masses are exact CDF
differences.  :class:`GenericDensity` covers a user-supplied pdf through
adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import BinGrid, polygon_index
from .normal import norm_cdf, norm_pdf, norm_quantile
from .quadrature import adaptive_simpson


class TargetDensity:
    """Base class for a univariate marginal density ``f``.

    Subclasses implement ``pdf``, ``cdf`` and ``quantile`` (array in, array
    out) and ``derivative_bound(lo, hi)``, an upper bound of ``|f'|`` on
    ``[lo, hi]``.
    """

    name: str = "density"
    closed_form_cdf: bool = True

    @property
    def params(self) -> list[float]:
        return []

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def quantile(self, p):
        raise NotImplementedError

    def derivative_bound(self, lo: float, hi: float) -> float:
        raise NotImplementedError

    def from_standard_normal(self, z):
        """Map standard normal values to this law by the probability integral transform."""
        return self.quantile(norm_cdf(z))

    def to_json(self) -> dict:
        return {"density": self.name, "params": list(self.params)}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join(repr(p) for p in self.params)})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params == other.params

    def __hash__(self):
        return hash((type(self).__name__, tuple(self.params)))


def _out(x, like):
    return float(np.asarray(x).reshape(-1)[0]) if np.ndim(like) == 0 else x


class Uniform(TargetDensity):
    name = "uniform"

    def __init__(self, lo: float = 0.0, hi: float = 1.0):
        if not hi > lo:
            raise ValueError("uniform density needs hi > lo")
        self.lo, self.hi = float(lo), float(hi)

    @property
    def params(self):
        return [self.lo, self.hi]

    @property
    def support(self):
        return (self.lo, self.hi)

    def pdf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        out = np.where((xa >= self.lo) & (xa < self.hi), 1.0 / (self.hi - self.lo), 0.0)
        return _out(out, x)

    def cdf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        out = np.clip((xa - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return _out(out, x)

    def quantile(self, p):
        pa = np.asarray(p, dtype=np.float64)
        out = self.lo + pa * (self.hi - self.lo)
        return _out(out, p)

    def derivative_bound(self, lo, hi):
        return 0.0


class Triangular(TargetDensity):
    """``f(u) = 2(1 - u)`` on ``[0, 1]``."""

    name = "triangular"

    @property
    def support(self):
        return (0.0, 1.0)

    def pdf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        out = np.where((xa >= 0.0) & (xa <= 1.0), 2.0 * (1.0 - xa), 0.0)
        return _out(out, x)

    def cdf(self, x):
        xa = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        out = 1.0 - (1.0 - xa) ** 2
        return _out(out, x)

    def quantile(self, p):
        pa = np.asarray(p, dtype=np.float64)
        out = 1.0 - np.sqrt(1.0 - pa)
        return _out(out, p)

    def derivative_bound(self, lo, hi):
        return 2.0


class Normal(TargetDensity):
    name = "normal"

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        if not sigma > 0:
            raise ValueError("normal density needs sigma > 0")
        self.mu, self.sigma = float(mu), float(sigma)

    @property
    def params(self):
        return [self.mu, self.sigma]

    def pdf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        return _out(norm_pdf((xa - self.mu) / self.sigma) / self.sigma, x)

    def cdf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        return _out(norm_cdf((xa - self.mu) / self.sigma), x)

    def sf(self, x):
        xa = np.asarray(x, dtype=np.float64)
        return _out(norm_cdf((self.mu - xa) / self.sigma), x)

    def quantile(self, p):
        return _out(self.mu + self.sigma * np.asarray(norm_quantile(p)), p)

    def from_standard_normal(self, z):
        # affine map is exact; no round trip through the CDF
        return self.mu + self.sigma * np.asarray(z, dtype=np.float64)

    def derivative_bound(self, lo, hi):
        # |f'| = t phi(t) / sigma^2 with t = |u - mu| / sigma, maximal at t = 1
        zl, zh = (lo - self.mu) / self.sigma, (hi - self.mu) / self.sigma
        cands = [abs(zl), abs(zh)]
        if zl <= 1.0 <= zh or zl <= -1.0 <= zh:
            cands.append(1.0)
        return max(t * norm_pdf(t) for t in cands) / self.sigma**2


class NormalMixture(TargetDensity):
    """``w N(mu1, s1^2) + (1 - w) N(mu2, s2^2)``."""

    name = "normal_mixture"

    def __init__(self, w: float = 0.5, mu1: float = -1.0, s1: float = 1.0,
                 mu2: float = 1.0, s2: float = 1.0):
        if not 0.0 < w < 1.0:
            raise ValueError("mixture weight must lie in (0, 1)")
        self.w = float(w)
        self.c1, self.c2 = Normal(mu1, s1), Normal(mu2, s2)

    @property
    def params(self):
        return [self.w, self.c1.mu, self.c1.sigma, self.c2.mu, self.c2.sigma]

    def pdf(self, x):
        return self.w * self.c1.pdf(x) + (1 - self.w) * self.c2.pdf(x)

    def cdf(self, x):
        return self.w * self.c1.cdf(x) + (1 - self.w) * self.c2.cdf(x)

    def sf(self, x):
        return self.w * self.c1.sf(x) + (1 - self.w) * self.c2.sf(x)

    def quantile(self, p):
        pa = np.atleast_1d(np.asarray(p, dtype=np.float64))
        q1, q2 = np.asarray(self.c1.quantile(pa)), np.asarray(self.c2.quantile(pa))
        lo, hi = np.minimum(q1, q2), np.maximum(q1, q2)
        x = 0.5 * (lo + hi)
        finite = np.isfinite(x)
        x = np.where(finite, x, lo)
        active = finite & (hi > lo)
        for _ in range(200):
            if not np.any(active):
                break
            xa = x[active]
            g = np.asarray(self.cdf(xa)) - pa[active]
            lo_a = np.where(g < 0, xa, lo[active])
            hi_a = np.where(g > 0, xa, hi[active])
            step = g / np.maximum(np.asarray(self.pdf(xa)), 1e-300)
            newton = xa - step
            inside = (newton > lo_a) & (newton < hi_a)
            nxt = np.where(inside, newton, 0.5 * (lo_a + hi_a))
            lo[active], hi[active] = lo_a, hi_a
            done = (np.abs(nxt - xa) <= 4e-16 * (1.0 + np.abs(xa))) | (g == 0)
            x[active] = np.where(g == 0, xa, nxt)
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        return _out(x, p)

    def derivative_bound(self, lo, hi):
        return self.w * self.c1.derivative_bound(lo, hi) + (1 - self.w) * self.c2.derivative_bound(lo, hi)


class GenericDensity(TargetDensity):
    """A density given only by its pdf on a finite support.

    The CDF is obtained by adaptive quadrature and the quantile by bisection,
    so this class is slow and meant for oracles and one-off checks.
    """

    closed_form_cdf = False

    def __init__(self, pdf: Callable[[float], float], support: tuple[float, float],
                 derivative_bound: float | Callable[[float, float], float], name: str = "generic",
                 tol: float = 1e-10):
        lo, hi = support
        if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
            raise ValueError("GenericDensity needs a finite support interval")
        self._pdf = pdf
        self._support = (float(lo), float(hi))
        self._dbound = derivative_bound
        self.name = name
        self.tol = tol

    @property
    def support(self):
        return self._support

    def pdf(self, x):
        lo, hi = self._support
        if np.ndim(x) == 0:
            return float(self._pdf(float(x))) if lo <= x <= hi else 0.0
        return np.array([self.pdf(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def integrate(self, a: float, b: float) -> float:
        lo, hi = self._support
        a, b = max(a, lo), min(b, hi)
        if b <= a:
            return 0.0
        return adaptive_simpson(lambda u: float(self._pdf(u)), a, b, tol=self.tol)[0]

    def cdf(self, x):
        if np.ndim(x) == 0:
            return min(1.0, max(0.0, self.integrate(self._support[0], float(x))))
        return np.array([self.cdf(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def quantile(self, p):
        if np.ndim(p) != 0:
            return np.array([self.quantile(float(v)) for v in np.ravel(p)]).reshape(np.shape(p))
        lo, hi = self._support
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) < p:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def derivative_bound(self, lo, hi):
        return self._dbound(lo, hi) if callable(self._dbound) else float(self._dbound)


DENSITIES: dict[str, type[TargetDensity]] = {
    "uniform": Uniform,
    "triangular": Triangular,
    "normal": Normal,
    "normal_mixture": NormalMixture,
}


def make_density(name: str, params=()) -> TargetDensity:
    """Build a built-in density from its config name and parameter list."""
    try:
        cls = DENSITIES[name]
    except KeyError:
        raise ValueError(f"unknown density {name!r}; choose one of {sorted(DENSITIES)}") from None
    return cls(*params)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BinProbability:
    s: int
    p: float


def interval_probability(f: TargetDensity, lo: float, hi: float) -> float:
    """``P(lo <= X < hi)`` for ``X ~ f``."""
    if hi <= lo:
        return 0.0
    slo, shi = f.support
    if hi <= slo or lo >= shi:
        return 0.0
    if not f.closed_form_cdf:
        return f.integrate(lo, hi)
    if lo >= _median(f):
        # upper tail: difference of survival functions keeps relative accuracy
        p = f.sf(lo) - f.sf(hi)
    else:
        p = f.cdf(hi) - f.cdf(lo)
    return min(1.0, max(0.0, float(p)))


def _median(f: TargetDensity) -> float:
    if isinstance(f, Normal):
        return f.mu
    return float(f.quantile(0.5))


def bin_probability(f: TargetDensity, g: BinGrid, s: int) -> BinProbability:
    """Mass of the histogram bin ``I_s = [(s-1)b, sb)`` under ``f``."""
    lo, hi = g.bin_interval(s)
    return BinProbability(int(s), interval_probability(f, lo, hi))


@dataclass(frozen=True)
class TaylorEnvelope:
    """Result of :func:`taylor_bounds_check`."""

    k: int
    kappa: float
    lower: float
    upper: float
    p_k: float
    p_k1: float

    @property
    def slack(self) -> float:
        """Rounding allowance of a few ulps of the envelope scale."""
        return 8.0 * np.finfo(float).eps * self.upper

    @property
    def holds(self) -> bool:
        return all(self.lower - self.slack <= p <= self.upper + self.slack
                   for p in (self.p_k, self.p_k1))


def taylor_bounds_check(f: TargetDensity, g: BinGrid, x: float) -> TaylorEnvelope:
    """Check ``max(0, f(x)b - kappa b^2) <= p_j <= f(x)b + kappa b^2`` for ``j = k, k+1``.

    ``kappa`` is the density's derivative bound on ``[x - 2b, x + 2b]``,
    which covers both bins adjacent to ``x``.
    """
    fx = float(f.pdf(x))
    if not fx > 0:
        raise ValueError(f"f(x) must be positive, got f({x}) = {fx}")
    b = g.bin_width
    k = polygon_index(x, g)
    kappa = float(f.derivative_bound(x - 2 * b, x + 2 * b))
    return TaylorEnvelope(
        k=k,
        kappa=kappa,
        lower=max(0.0, fx * b - kappa * b * b),
        upper=fx * b + kappa * b * b,
        p_k=bin_probability(f, g, k).p,
        p_k1=bin_probability(f, g, k + 1).p,
    )
