import itertools
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from fpspatial.densities import Normal, Triangular, Uniform, bin_probability
from fpspatial.estimator import clt_from_counts, point_plan
from fpspatial.experiments import (
    ExperimentConfig,
    HypothesisRefused,
    kolmogorov_sf,
    ks_statistic,
    ks_test,
    run_clt_experiment,
    run_schedule_sweep,
    run_variance_experiment,
    sample_covariance,
    simulate_statistics,
)
from fpspatial.fields import FieldModel, sample_iid
from fpspatial.grid import BinGrid, SiteSet
from fpspatial.mixing import Polynomial, alpha_profile
from fpspatial.normal import norm_cdf, norm_quantile


def small_cfg(**kw) -> ExperimentConfig:
    base = dict(model=FieldModel.iid(Normal()), region=SiteSet.rectangle([32, 32]),
                eval_points=(0.5,), replicates=200, master_seed=99, bin_width=1 / 32)
    base.update(kw)
    return ExperimentConfig(**base)


# -- Kolmogorov-Smirnov -------------------------------------------------------------


def test_ks_equioscillating_quantiles():
    n = 50
    values = norm_quantile((np.arange(1, n + 1) - 0.5) / n)
    assert ks_statistic(values, norm_cdf) == pytest.approx(1 / (2 * n), abs=1e-12)


def test_ks_three_points_hand_value():
    assert ks_statistic([-1.0, 0.0, 1.0], norm_cdf) == pytest.approx(1 / 3 - float(norm_cdf(-1.0)), abs=1e-12)
    assert ks_statistic([-1.0, 0.0, 1.0], norm_cdf) == pytest.approx(0.1746, abs=1e-4)


def test_ks_point_mass():
    assert ks_statistic(np.zeros(20), norm_cdf) == pytest.approx(0.5)


@given(st.floats(0.0, 5.0))
def test_kolmogorov_tail_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(float(special.kolmogorov(lam)), abs=1e-12)


def test_kolmogorov_tail_is_monotone_and_starts_at_one():
    lams = np.linspace(0, 4, 2001)
    p = [kolmogorov_sf(v) for v in lams]
    assert p[0] == 1.0
    assert all(b <= a for a, b in zip(p, p[1:]))


def test_ks_test_needs_eight_values():
    with pytest.raises(ValueError):
        ks_test([0.1, 0.2])


# -- covariance ------------------------------------------------------------------


def test_sample_covariance_matches_exact_formula():
    rng = np.random.default_rng(1)
    mat = rng.normal(size=(37, 4)) @ rng.normal(size=(4, 4))
    assert np.allclose(sample_covariance(mat), np.cov(mat, rowvar=False), atol=1e-12, rtol=0)
    assert np.array_equal(sample_covariance(mat), sample_covariance(mat).T)


# -- exact distribution of the statistic on a tiny region ------------------------


def test_clt_statistic_law_matches_enumeration():
    f, b, x = Triangular(), 1 / 3, 0.4
    g = BinGrid(b)
    plan = point_plan(f, g, x)
    p = {s: bin_probability(f, g, s).p for s in (1, 2, 3)}
    law: dict[float, float] = {}
    for outcome in itertools.product((1, 2, 3), repeat=2):
        pr = p[outcome[0]] * p[outcome[1]]
        v = clt_from_counts(plan, outcome.count(plan.k), outcome.count(plan.k + 1), 2, b)
        v = round(v, 12)
        law[v] = law.get(v, 0.0) + pr
    support = sorted(law)
    cdf_exact = np.cumsum([law[v] for v in support])

    R = 1_000_000
    rows = sample_iid(f, SiteSet.rectangle([R, 2]), seed=31).values.reshape(R, 2)
    bins = np.floor(rows / b).astype(int) + 1
    nu_k = (bins == plan.k).sum(axis=1)
    nu_k1 = (bins == plan.k + 1).sum(axis=1)
    emp = np.round(clt_from_counts(plan, nu_k, nu_k1, 2, b), 12)
    cdf_emp = np.array([np.mean(emp <= v) for v in support])
    assert set(np.unique(emp).tolist()) <= set(support)
    assert np.max(np.abs(cdf_emp - cdf_exact)) < 3 / math.sqrt(R)


# -- experiment runs -------------------------------------------------------------


def test_variance_experiment_agrees_with_oracle():
    rep = run_variance_experiment(small_cfg(replicates=400))
    assert rep.oracle_ratio[0] == pytest.approx(0.98, abs=0.02)
    assert abs(rep.scaled_variance[0] - rep.oracle_ratio[0]) < 3 * math.sqrt(2 / 400)
    assert rep.checks["scaled_variance@0.5"]["passed"] == rep.passed


def test_two_replicates_give_a_report_with_warning():
    rep = run_variance_experiment(small_cfg(replicates=2))
    assert rep.replicates == 2
    assert any("replicates" in w for w in rep.warnings)
    json.dumps(rep.to_json(), allow_nan=False)


def test_statistics_do_not_depend_on_worker_count():
    cfg = small_cfg(model=FieldModel.moving_average(Normal(), 1, 2), eval_points=(-0.5, 0.7), replicates=24)
    one = simulate_statistics(cfg.model, cfg.region, cfg.grid, cfg.eval_points, 24, cfg.master_seed, 1)
    three = simulate_statistics(cfg.model, cfg.region, cfg.grid, cfg.eval_points, 24, cfg.master_seed, 3)
    for a, b in zip(one, three):
        assert a.tobytes() == b.tobytes()


def test_report_serialization_is_deterministic():
    cfg = small_cfg(eval_points=(-0.3, 0.5), replicates=40)
    a = run_clt_experiment(cfg)
    b = run_clt_experiment(replace(cfg, workers=2))
    assert a.dumps() == b.dumps()
    assert a.statistics_csv() == b.statistics_csv()
    assert a.statistics_csv().split("\n")[0] == "replicate,x=-0.3,x=0.5"
    assert "runtime_seconds" not in a.to_json()


def test_declared_nonsummable_profile_is_refused():
    bad = alpha_profile(Polynomial(4.0, cap=0.25))  # boundary rate for d = 2
    with pytest.raises(HypothesisRefused) as info:
        run_clt_experiment(small_cfg(mixing_profile=bad))
    assert not info.value.result.holds
    rep = run_clt_experiment(small_cfg(mixing_profile=bad, override_hypotheses=True, replicates=20))
    assert any("override" in w for w in rep.warnings)
    assert rep.hypothesis.holds is False


def test_generator_profiles_pass_their_hypotheses():
    rep = run_variance_experiment(small_cfg(model=FieldModel.moving_average(Uniform(), 1, 2), replicates=10))
    assert rep.hypothesis.holds
    assert rep.oracle_ratio == [None]


@pytest.mark.parametrize("kw", [
    dict(bin_width=None),
    dict(gamma=0.5),
    dict(bin_width=None, gamma=1.0),
    dict(replicates=1),
    dict(eval_points=(0.5, 0.5)),
    dict(eval_points=()),
    dict(model=FieldModel.iid(Uniform()), eval_points=(1.5,)),
    dict(model=FieldModel.moving_average(Normal(), 1, 3)),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ValueError):
        small_cfg(**kw)


def test_gamma_schedule_sets_bin_width():
    cfg = small_cfg(bin_width=None, gamma=0.5)
    assert cfg.grid.bin_width == pytest.approx(1 / 32)


# -- schedule sweep ---------------------------------------------------------------


@pytest.mark.parametrize("gamma", [1.0, 0.0, 1.5, -0.1])
def test_sweep_rejects_gamma_outside_unit_interval(gamma):
    with pytest.raises(ValueError, match="gamma"):
        run_schedule_sweep(small_cfg(), [8, 16], gamma)


def test_sweep_rejects_non_increasing_sizes():
    with pytest.raises(ValueError):
        run_schedule_sweep(small_cfg(), [16, 16], 0.5)


def test_sweep_rows_track_the_oracle():
    R = 300
    table = run_schedule_sweep(small_cfg(replicates=R), [16, 32, 64], 0.5)
    oracle = [r["oracle_ratio"] for r in table.rows]
    assert all(b > a for a, b in zip(oracle, oracle[1:])) and oracle[-1] < 1
    assert [r["n_b"] for r in table.rows] == pytest.approx([16.0, 32.0, 64.0])
    for r in table.rows:
        assert abs(r["scaled_variance"] - r["oracle_ratio"]) < 3 * math.sqrt(2 / R)
    text = table.to_csv()
    assert text.split("\n")[0] == "n_sites,bin_width,n_b,scaled_variance,ks_p_value,oracle_ratio"
    assert isinstance(table.approaching_one, bool)
