"""Monte Carlo checks of the variance limit and of the multivariate CLT.

Replicate ``r`` of an experiment is a pure function of
``(config, master_seed, r)``.  Work is split into contiguous replicate blocks
that can run in separate processes; the blocks are reassembled in replicate
order before any reduction, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .estimator import PointPlan, clt_from_counts, fn_from_counts, iid_variance_oracle, point_plan
from .fields import IID, FieldModel, certify_mixing, sample
from .grid import BinGrid, SiteSet, bin_indices
from .mixing import HypothesisResult, MixingProfile, hypothesis_check
from .normal import norm_cdf

log = logging.getLogger(__name__)

MIN_RELIABLE_REPLICATES = 30


class HypothesisRefused(RuntimeError):
    """The model's mixing profile does not meet the hypotheses of the checked result."""

    def __init__(self, result: HypothesisResult):
        super().__init__(
            f"mixing profile fails {result.theorem}: {result.certificate.get('reason', 'divergent sum')}")
        self.result = result


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float


def kolmogorov_sf(lam: float) -> float:
    """``P(K > lam)`` for the Kolmogorov distribution, by its two theta series."""
    if lam < 0.1:  # the CDF is below 1e-50 here
        return 1.0
    if lam < 1.18:
        # 1 - sqrt(2 pi)/lam * sum_k exp(-(2k-1)^2 pi^2 / (8 lam^2))
        c = -math.pi**2 / (8.0 * lam * lam)
        s = 0.0
        for k in range(1, 100):
            term = math.exp(c * (2 * k - 1) ** 2)
            s += term
            if term < 1e-17 * s:
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s = 0.0
    for k in range(1, 100):
        term = math.exp(-2.0 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_statistic(values, cdf: Callable) -> float:
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    F = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    return float(max(d_plus, d_minus, 0.0))


def ks_test(values, null: str | Callable = "std_normal") -> KSResult:
    """Two-sided one-sample KS test with the asymptotic Kolmogorov p-value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 8:
        raise ValueError(f"KS test needs at least 8 values, got {values.size}")
    if null == "std_normal":
        cdf = norm_cdf
    elif callable(null):
        cdf = null
    else:
        raise ValueError(f"unknown null distribution {null!r}")
    D = ks_statistic(values, cdf)
    return KSResult(D, kolmogorov_sf(math.sqrt(values.size) * D))


# --------------------------------------------------------------------------
# configuration and report


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """One Monte Carlo experiment.

    Exactly one of ``bin_width`` and ``gamma`` is set; with ``gamma`` the bin
    width is ``|region| ** -gamma``.  ``mixing_profile`` replaces the
    generator's certified profile when the caller wants to check a declared
    (weaker) mixing assumption.
    """

    model: FieldModel
    region: SiteSet
    eval_points: tuple[float, ...]
    replicates: int
    master_seed: int
    bin_width: float | None = None
    gamma: float | None = None
    workers: int = 1
    override_hypotheses: bool = False
    mixing_profile: MixingProfile | None = None
    checks: dict = field(default_factory=dict)
    raw: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "eval_points", tuple(float(x) for x in self.eval_points))
        if (self.bin_width is None) == (self.gamma is None):
            raise ValueError("give exactly one of bin_width and gamma")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")
        if not self.eval_points:
            raise ValueError("need at least one evaluation point")
        if len(set(self.eval_points)) != len(self.eval_points):
            raise ValueError("evaluation points must be distinct")
        for x in self.eval_points:
            if not float(self.model.marginal.pdf(x)) > 0:
                raise ValueError(f"evaluation point {x} has f(x) = 0 under the model marginal")
        if self.model.dimension is not None and self.model.dimension != self.region.dimension:
            raise ValueError("model and region dimensions differ")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def grid(self) -> BinGrid:
        if self.bin_width is not None:
            return BinGrid(self.bin_width)
        return BinGrid(len(self.region) ** (-self.gamma))

    @property
    def profile(self) -> MixingProfile:
        return self.mixing_profile or certify_mixing(self.model)


def _num(v: float) -> float | None:
    return None if math.isnan(v) else v


@dataclass
class ExperimentReport:
    kind: str
    eval_points: list[float]
    n_sites: int
    bin_width: float
    replicates: int
    statistics: np.ndarray          # R x r, clt statistics
    fn_values: np.ndarray           # R x r, normalized estimator
    mean: np.ndarray
    covariance: np.ndarray
    scaled_variance: np.ndarray
    oracle_ratio: list[float | None]
    ks: list[KSResult]
    hypothesis: HypothesisResult
    warnings: list[str]
    checks: dict
    config: dict | None
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self, include_runtime: bool = False) -> dict:
        out = {
            "kind": self.kind,
            "eval_points": self.eval_points,
            "n_sites": self.n_sites,
            "bin_width": self.bin_width,
            "n_b": self.n_sites * self.bin_width,
            "replicates": self.replicates,
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "scaled_variance": self.scaled_variance.tolist(),
            "oracle_ratio": self.oracle_ratio,
            "ks": [{"statistic": _num(k.statistic), "p_value": _num(k.p_value)} for k in self.ks],
            "hypothesis": self.hypothesis.to_json(),
            "warnings": self.warnings,
            "checks": self.checks,
            "passed": self.passed,
            "config": self.config,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def statistics_csv(self, which: str = "statistics") -> str:
        mat = self.statistics if which == "statistics" else self.fn_values
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate"] + [f"x={x!r}" for x in self.eval_points])
        for r, row in enumerate(mat.tolist()):
            w.writerow([r] + [repr(v) for v in row])
        return buf.getvalue()


# --------------------------------------------------------------------------
# replicate engine


def _replicate_block(model: FieldModel, region: SiteSet, grid: BinGrid,
                     plans: Sequence[PointPlan], seed: int, start: int, stop: int):
    r = len(plans)
    fn = np.empty((stop - start, r))
    clt = np.empty((stop - start, r))
    n = len(region)
    b = grid.bin_width
    for row, rep in enumerate(range(start, stop)):
        values = sample(model, region, seed, rep).values
        bins = bin_indices(values, grid)
        for j, plan in enumerate(plans):
            nu_k = int(np.count_nonzero(bins == plan.k))
            nu_k1 = int(np.count_nonzero(bins == plan.k + 1))
            fn[row, j] = fn_from_counts(plan, nu_k, nu_k1, n, b)
            clt[row, j] = clt_from_counts(plan, nu_k, nu_k1, n, b)
    return fn, clt


def _blocks(total: int, workers: int) -> list[tuple[int, int]]:
    nblocks = min(total, max(1, 4 * workers))
    edges = np.linspace(0, total, nblocks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def simulate_statistics(model: FieldModel, region: SiteSet, grid: BinGrid, eval_points: Sequence[float],
                        replicates: int, seed: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``(fn_values, clt_statistics)``, both ``replicates x len(eval_points)``."""
    plans = [point_plan(model.marginal, grid, x) for x in eval_points]
    if workers == 1:
        return _replicate_block(model, region, grid, plans, seed, 0, replicates)
    blocks = _blocks(replicates, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_replicate_block, model, region, grid, plans, seed, a, b)
                   for a, b in blocks]
        parts = [f.result() for f in futures]
    return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def sample_covariance(mat: np.ndarray) -> np.ndarray:
    """Unbiased ``(R - 1)``-normalized covariance of the columns of ``mat``."""
    mat = np.asarray(mat, dtype=np.float64)
    R = mat.shape[0]
    if R < 2:
        raise ValueError("covariance needs at least 2 rows")
    centered = mat - mat.mean(axis=0)
    cov = centered.T @ centered / (R - 1)
    return 0.5 * (cov + cov.T)


def _check_hypothesis(cfg: ExperimentConfig, theorem: str, warnings: list[str]) -> HypothesisResult:
    profile = cfg.profile
    result = hypothesis_check(profile, cfg.region.dimension, theorem)
    if not result.holds:
        if not cfg.override_hypotheses:
            raise HypothesisRefused(result)
        msg = f"hypothesis {theorem} fails for the mixing profile; run forced by override"
        log.warning(msg)
        warnings.append(msg)
    return result


def _run(cfg: ExperimentConfig, kind: str, theorem: str) -> ExperimentReport:
    warnings: list[str] = []
    hyp = _check_hypothesis(cfg, theorem, warnings)
    grid = cfg.grid
    t0 = time.perf_counter()
    fn, clt = simulate_statistics(cfg.model, cfg.region, grid, cfg.eval_points,
                                  cfg.replicates, cfg.master_seed, cfg.workers)
    runtime = time.perf_counter() - t0
    n = len(cfg.region)
    R = cfg.replicates
    if R < MIN_RELIABLE_REPLICATES:
        msg = f"only {R} replicates: variance estimates are very wide"
        log.warning(msg)
        warnings.append(msg)
    scaled = n * grid.bin_width * np.var(fn, axis=0, ddof=1)
    if cfg.model.kind == IID:
        oracle = [iid_variance_oracle(cfg.model.marginal, grid, x).ratio for x in cfg.eval_points]
    else:
        oracle = [None] * len(cfg.eval_points)
    ks = [ks_test(clt[:, j]) if R >= 8 else KSResult(math.nan, math.nan)
          for j in range(len(cfg.eval_points))]
    cov = sample_covariance(clt)
    report = ExperimentReport(
        kind=kind, eval_points=list(cfg.eval_points), n_sites=n, bin_width=grid.bin_width,
        replicates=R, statistics=clt, fn_values=fn, mean=clt.mean(axis=0), covariance=cov,
        scaled_variance=scaled, oracle_ratio=oracle, ks=ks, hypothesis=hyp, warnings=warnings,
        checks={}, config=cfg.raw, runtime=runtime)
    report.checks = _evaluate_checks(report, cfg.checks)
    return report


def _evaluate_checks(report: ExperimentReport, thresholds: dict) -> dict:
    checks = {}
    if report.kind == "variance":
        lo, hi = thresholds.get("scaled_variance", (0.9, 1.1))
        for x, v in zip(report.eval_points, report.scaled_variance.tolist()):
            checks[f"scaled_variance@{x!r}"] = {
                "value": v, "threshold": [lo, hi], "passed": bool(lo <= v <= hi)}
    else:
        alpha = thresholds.get("ks_alpha", 0.01)
        for x, k in zip(report.eval_points, report.ks):
            checks[f"ks_p_value@{x!r}"] = {
                "value": _num(k.p_value), "threshold": alpha, "passed": bool(k.p_value > alpha)}
        tol = thresholds.get("max_offdiag", 0.1)
        r = len(report.eval_points)
        if r > 1:
            off = max(abs(report.covariance[i, j]) for i in range(r) for j in range(r) if i != j)
            checks["max_offdiag_covariance"] = {"value": float(off), "threshold": tol, "passed": bool(off < tol)}
    return checks


def run_variance_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Scaled variance ``N b Var(f_n(x))`` per evaluation point.

    Refuses to run (``HypothesisRefused``) unless the mixing profile meets
    the alpha condition with ``tau = 1`` or ``cfg.override_hypotheses`` is set.
    """
    return _run(cfg, "variance", "prop1_i")


def run_clt_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Joint law of the centered, scaled estimator at all evaluation points."""
    return _run(cfg, "clt", "thm1_i")


# --------------------------------------------------------------------------
# schedule sweep


@dataclass
class SweepTable:
    gamma: float
    rows: list[dict]
    approaching_one: bool

    def to_json(self) -> dict:
        return {"gamma": self.gamma, "rows": self.rows, "approaching_one": self.approaching_one}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["n_sites", "bin_width", "n_b", "scaled_variance", "ks_p_value", "oracle_ratio"]
        w.writerow(cols)
        for row in self.rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        return buf.getvalue()


def run_schedule_sweep(cfg: ExperimentConfig, sizes: Sequence, gamma: float) -> SweepTable:
    """Repeat the variance experiment on growing rectangles with ``b = N^-gamma``.

    ``sizes`` holds rectangle shapes (or side lengths of cubes of the
    config's dimension), in increasing order of cardinality.  Only the first
    evaluation point is tracked.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(
            f"gamma must lie strictly between 0 and 1 (got {gamma}): "
            "gamma >= 1 keeps N b bounded, gamma <= 0 keeps b from shrinking")
    d = cfg.region.dimension
    shapes = [[int(s)] * d if np.ndim(s) == 0 else [int(v) for v in s] for s in sizes]
    ns = [math.prod(s) for s in shapes]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("sizes must be strictly increasing")
    rows = []
    for shape in shapes:
        sub = replace(cfg, region=SiteSet.rectangle(shape), bin_width=None, gamma=gamma,
                      eval_points=cfg.eval_points[:1], raw=None)
        rep = run_variance_experiment(sub)
        rows.append({
            "n_sites": rep.n_sites,
            "bin_width": rep.bin_width,
            "n_b": rep.n_sites * rep.bin_width,
            "scaled_variance": float(rep.scaled_variance[0]),
            "ks_p_value": rep.ks[0].p_value,
            "oracle_ratio": rep.oracle_ratio[0],
        })
    gaps = [abs(1.0 - r["scaled_variance"]) for r in rows]
    approaching = all(b < a for a, b in zip(gaps, gaps[1:]))
    return SweepTable(gamma, rows, approaching)
