"""Polyhedral binary classifiers learned as a softmax-gated mixture of logistic experts.

The positive class is an intersection of K halfspaces.  Training
alternates posterior responsibility updates with Armijo-verified ascent
on the expected complete-data log-likelihood (gradient ascent, Newton,
or BFGS), and a closed-form calculator bounds the generalization risk of
a fitted model.
"""

from .bounds import BoundInputs, BoundReport, bound_for_model, confidence_radius, rademacher_bound, risk_bound
from .crossval import CvReport, cross_validate
from .data import (
    CsvSchema,
    CvPlan,
    SynthSpec,
    check_class_counts,
    kfold,
    load_csv,
    load_synthetic_metadata,
    save_csv,
    save_synthetic,
    standardize,
    synthesize,
)
from .em import FitReport, InitScheme, TrainConfig, fit, initialize, predict
from .errors import (
    ArmijoExhaustedError,
    ConfigError,
    DataError,
    DimensionError,
    NonAscentDirectionError,
    NumericalError,
    PlumeError,
)
from .model import (
    Dataset,
    FeatureScale,
    ModelParams,
    augment,
    classify,
    expert_margins,
    gating,
    log_likelihood,
    log_posteriors,
    margin,
    posterior,
)
from .model_io import LoadedModel, file_fingerprint, load_model, save_model
from .optim import (
    BfgsState,
    LineSearchConfig,
    Optimizer,
    Responsibilities,
    backtracking_search,
    bfgs_update,
    initial_bfgs_state,
    maximize_q,
    q_gradient,
    q_hessian,
    q_value,
    responsibilities,
)

__version__ = "0.1.0"
