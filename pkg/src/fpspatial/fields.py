"""Stationary random fields with an exactly known marginal law.

Two generators are provided: an i.i.d. field and an ``m``-dependent
Gaussian moving average ``G_i = sum_{|u| <= m} c_u eps_{i+u}`` pushed
through the probability integral transform ``X_i = F^{-1}(Phi(G_i / s))``.
Innovations are drawn per absolute lattice site from the counter-based
generator in :mod:`fpspatial.rng`, so overlapping windows agree without
storing any field state.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .densities import TargetDensity, make_density
from .grid import BinGrid, SiteSet, sup_distance
from .mixing import INF, FiniteRange, MixingProfile
from .normal import norm_cdf, norm_pdf, norm_quantile
from .quadrature import adaptive_simpson

IID = "iid"
MA = "m_dependent_gaussian_ma"


@dataclass(frozen=True, eq=False)
class FieldModel:
    """Generator description: kind, marginal law, range ``m`` and MA weights.

    ``weights`` has shape ``(2m+1,) * d`` and is indexed by ``u + m``.
    """

    kind: str
    marginal: TargetDensity
    m: int = 0
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == IID:
            if self.m != 0 or self.weights is not None:
                raise ValueError("iid model takes no range or weights")
            return
        if self.kind != MA:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("moving-average model needs m >= 1")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim < 1 or any(n != 2 * self.m + 1 for n in w.shape):
            raise ValueError(f"weights must have shape (2m+1,)*d = ({2 * self.m + 1},)*d, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if not np.any(w != 0):
            raise ValueError("moving-average weights are all zero")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def iid(cls, marginal: TargetDensity) -> FieldModel:
        return cls(IID, marginal)

    @classmethod
    def moving_average(cls, marginal: TargetDensity, m: int, d: int, weights=None) -> FieldModel:
        """MA model; ``weights=None`` gives the flat window (all ones)."""
        shape = (2 * m + 1,) * d
        w = np.ones(shape) if weights is None else np.asarray(weights, dtype=np.float64).reshape(shape)
        return cls(MA, marginal, m, w)

    @property
    def dimension(self) -> int | None:
        return None if self.weights is None else self.weights.ndim

    @property
    def model_id(self) -> str:
        law = f"{self.marginal.name}({','.join(repr(p) for p in self.marginal.params)})"
        if self.kind == IID:
            return f"iid:{law}"
        return f"ma:m={self.m}:d={self.dimension}:{law}"

    @property
    def innovation_sd(self) -> float:
        return float(np.sqrt(np.sum(self.weights**2)))

    def correlation(self, offset) -> float:
        """Correlation of ``G_0`` and ``G_j`` for lattice offset ``j``."""
        if self.kind == IID:
            return 1.0 if not any(offset) else 0.0
        offset = tuple(int(o) for o in offset)
        if len(offset) != self.dimension:
            raise ValueError("offset dimension does not match the model")
        if sup_distance(offset, (0,) * len(offset)) > 2 * self.m:
            return 0.0
        w = self.weights
        n = w.shape[0]
        # sum_u c_u c_{u+j}
        src = tuple(slice(max(0, -o), min(n, n - o)) for o in offset)
        dst = tuple(slice(max(0, o), min(n, n + o)) for o in offset)
        return float(np.sum(w[src] * w[dst]) / np.sum(w**2))

    @property
    def mixing(self) -> MixingProfile:
        return certify_mixing(self)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "marginal": self.marginal.to_json()}
        if self.kind == MA:
            out.update(m=self.m, d=self.dimension, weights=self.weights.ravel().tolist())
        return out

    @classmethod
    def from_json(cls, obj: dict) -> FieldModel:
        marg = obj["marginal"]
        marginal = make_density(marg["density"], marg.get("params", []))
        if obj["kind"] == IID:
            return cls.iid(marginal)
        m, d = int(obj["m"]), int(obj["d"])
        weights = obj.get("weights", "ones")
        return cls.moving_average(marginal, m, d, None if weights == "ones" else weights)


def certify_mixing(model: FieldModel, kind: str = "alpha") -> MixingProfile:
    """Certified ``tau = inf`` bound profile of the model's mixing coefficients.

    Beyond distance ``2m`` the field is independent, so the bound is 0; inside
    it is the trivial bound (1/4 for alpha, 1 for rho).
    """
    m0 = 0 if model.kind == IID else 2 * model.m
    return MixingProfile(kind, INF, FiniteRange(m0))


@dataclass(frozen=True, eq=False)
class FieldSample:
    """Observed values, aligned with ``region.sites`` (lexicographic order)."""

    region: SiteSet
    values: np.ndarray
    model_id: str
    seed: int
    replicate: int = 0

    def __post_init__(self):
        if self.values.shape != (len(self.region),):
            raise ValueError("one value per site is required")

    def as_dict(self) -> dict:
        return {site: float(v) for site, v in zip(self.region, self.values)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.region.dimension
        w.writerow([f"i{k + 1}" for k in range(d)] + ["value"])
        for row, v in zip(self.region.sites.tolist(), self.values.tolist()):
            w.writerow(row + [repr(v)])
        return buf.getvalue()


def sample_iid(marginal: TargetDensity, region: SiteSet, seed: int, replicate: int = 0) -> FieldSample:
    """Independent draws ``F^{-1}(U_i)``, one counter-based uniform per site."""
    u = rng.site_uniforms(seed, rng.IID, replicate, region.sites)
    values = np.asarray(marginal.quantile(u), dtype=np.float64)
    return FieldSample(region, values, FieldModel.iid(marginal).model_id, seed, replicate)


def _offsets(m: int, d: int) -> np.ndarray:
    return SiteSet.ball([0] * d, m).sites


def gaussian_field(model: FieldModel, region: SiteSet, seed: int, replicate: int = 0) -> np.ndarray:
    """Unstandardized moving average ``G_i`` at every site of ``region``."""
    if model.kind != MA:
        raise ValueError("gaussian_field needs a moving-average model")
    d, m = model.dimension, model.m
    if region.dimension != d:
        raise ValueError(f"region has dimension {region.dimension}, model has {d}")
    sites = region.sites
    lo, hi = region.bounding_box()
    lo, hi = lo - m, hi + m
    box_shape = tuple(int(n) for n in hi - lo + 1)
    box_size = math.prod(box_shape)
    offsets = _offsets(m, d)
    coefs = model.weights[tuple((offsets + m).T)]

    G = np.zeros(len(region))
    if box_size <= 4 * len(region) * len(offsets):
        axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.ravel() for g in mesh], axis=1)
        eps = rng.site_normals(seed, rng.INNOVATION, replicate, coords).reshape(box_shape)
        base = sites - lo
        for u, c in zip(offsets, coefs):
            if c != 0.0:
                G += c * eps[tuple((base + u).T)]
    else:
        dil = region.dilate(m).sites
        eps = rng.site_normals(seed, rng.INNOVATION, replicate, dil)
        strides = np.cumprod((1,) + box_shape[::-1][:-1])[::-1].astype(np.int64)
        keys = (dil - lo) @ strides
        for u, c in zip(offsets, coefs):
            if c != 0.0:
                idx = np.searchsorted(keys, (sites + u - lo) @ strides)
                G += c * eps[idx]
    return G


def sample_m_dependent(model: FieldModel, region: SiteSet, seed: int, replicate: int = 0) -> FieldSample:
    """Moving-average field mapped to the model's marginal law."""
    G = gaussian_field(model, region, seed, replicate)
    values = np.asarray(model.marginal.from_standard_normal(G / model.innovation_sd), dtype=np.float64)
    return FieldSample(region, values, model.model_id, seed, replicate)


def sample(model: FieldModel, region: SiteSet, seed: int, replicate: int = 0) -> FieldSample:
    if model.kind == IID:
        return sample_iid(model.marginal, region, seed, replicate)
    return sample_m_dependent(model, region, seed, replicate)


def joint_bin_probability(model: FieldModel, offset, g: BinGrid, s: int, t: int) -> float:
    """``P(X_0 in I_s, X_j in I_t)`` for a moving-average model.

    The pair ``(G_0, G_j)`` is bivariate normal with the model correlation, so
    the probability is a one-dimensional integral of a conditional normal
    probability, evaluated by adaptive Simpson.
    """
    F = model.marginal
    rho = model.correlation(offset)

    def zlim(k):
        lo, hi = g.bin_interval(k)
        return (float(norm_quantile(min(1.0, max(0.0, float(F.cdf(lo)))))),
                float(norm_quantile(min(1.0, max(0.0, float(F.cdf(hi)))))))

    a0, a1 = zlim(s)
    c0, c1 = zlim(t)
    if a1 <= a0 or c1 <= c0:
        return 0.0
    if rho == 0.0:
        return float(norm_cdf(a1) - norm_cdf(a0)) * float(norm_cdf(c1) - norm_cdf(c0))
    if abs(rho) >= 1.0:
        raise ValueError("degenerate pair: |correlation| = 1")
    r = math.sqrt(1.0 - rho * rho)

    def integrand(z):
        return norm_pdf(z) * (norm_cdf((c1 - rho * z) / r) - norm_cdf((c0 - rho * z) / r))

    lo, hi = max(a0, -12.0), min(a1, 12.0)
    if hi <= lo:
        return 0.0
    return adaptive_simpson(integrand, lo, hi, tol=1e-13)[0]
