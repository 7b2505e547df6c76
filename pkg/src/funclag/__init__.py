"""Certified upper bounds on probabilistic specifications of small
deterministic and stochastic feed-forward networks via functional
Lagrange multipliers."""

from . import inner
from .bounds import (
    Interval,
    LayerBounds,
    interval_activation,
    interval_affine,
    propagate_intervals,
    weight_support,
)
from .dual import (
    Certificate,
    DualEvaluation,
    OptimizerConfig,
    SolverOptions,
    evaluate_dual,
    lambda_star_affine,
    optimize,
    sample_lower_bound,
    stack_families,
    subgradient,
)
from .model import (
    CanonicalLayer,
    CanonicalNetwork,
    Deterministic,
    DiagonalGaussian,
    Dropout,
    ModelError,
    ParseError,
    RawAffine,
    SchemaError,
    ShapeError,
    StructureError,
    forward_sample,
    load_model,
    mean_softmax_estimate,
    model_to_dict,
    normalize_layers,
    softmax,
)
from .multipliers import (
    DiagQuadratic,
    Linear,
    LinExp,
    Multiplier,
    MultiplierStack,
    Quadratic,
    UnsupportedCombination,
    Zero,
    evaluate,
    expected_under_layer,
    init_stack,
)
from .oracle import BudgetExceeded, GridSpec, grid_maximize, mc_expectation, random_problem
from .specs import (
    BoxOfDeltas,
    ConfigError,
    EmptyInput,
    ExpectedSoftmax,
    LogitDiff,
    SubGaussianNoise,
    VerificationProblem,
    adversarial_auc,
    build_problem,
    guaranteed_auc,
)

__version__ = "0.1.0"
