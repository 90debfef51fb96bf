"""Random-feature SVMs with leverage-score feature selection."""

__version__ = "0.1.0"

from .data import LabeledDataset, SyntheticSpec, bayes_classify, gen_circle_annulus, load_idx, massart_v, split
from .errors import (
    ConsistencyError,
    DegenerateError,
    FormatError,
    NumericError,
    SizeError,
    TruncatedFileError,
    ValidationError,
)
from .features import (
    FeatureSet,
    FeatureSpec,
    bandwidth_heuristic,
    embed,
    kernel_approx,
    kernel_exact,
    sample_features,
)
from .selection import (
    LeverageScores,
    SelectionConfig,
    build_probe_matrix,
    compute_leverage,
    empirical_dof,
    resample_features,
    select_features,
)
from .solver import KernelModel, Model, TrainConfig, evaluate_risk, objective, predict, train_ksvm, train_rfsvm
from .spectrum import (
    DecayFit,
    FeatureCountPlan,
    SpectrumEstimate,
    degrees_of_freedom,
    dof_bound,
    empirical_spectrum,
    feature_count,
    fit_decay,
    plan_realizable,
    plan_separation,
)
