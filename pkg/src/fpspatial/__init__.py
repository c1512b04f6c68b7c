"""Frequency-polygon density estimation for stationary random fields on Z^d."""

from .densities import (
    DENSITIES,
    GenericDensity,
    Normal,
    NormalMixture,
    TargetDensity,
    Triangular,
    Uniform,
    make_density,
)
from .estimator import (
    BinCounts,
    bin_counts,
    clt_statistic,
    expected_fp,
    fn_normalized,
    fp_evaluate,
    fp_integral,
    iid_variance_oracle,
    sigma_kernel,
)
from .experiments import (
    ExperimentConfig,
    HypothesisRefused,
    ks_test,
    run_clt_experiment,
    run_schedule_sweep,
    run_variance_experiment,
)
from .fields import FieldModel, FieldSample, certify_mixing, joint_bin_probability, sample
from .grid import BinGrid, SiteSet, polygon_weights, set_distance, sup_distance
from .mixing import (
    FiniteRange,
    MixingProfile,
    Polynomial,
    Table,
    blocking_sequence,
    hypothesis_check,
    lemma1_diagnostic,
    psi,
)

__version__ = "0.1.0"
