"""Neural approximation of PDE solutions trained on random collocation points.

The pieces compose bottom-up: :mod:`expr` parses differential forms,
:mod:`network` evaluates fully connected bodies together with their input
derivatives, :mod:`engine` turns a form into a residual loss, :mod:`ansatz`
binds boundary and initial data exactly, :mod:`sampler` describes point
distributions, :mod:`solver` runs the training loop and :mod:`oracle`
provides finite-difference references for the supported shapes.
"""

from .ansatz import AnsatzParts, CompatibilityError, build_parts, wrap
from .engine import LossReport, ResidualProgram, loss_and_grad, soft_loss_and_grad
from .expr import (
    Const,
    EvalError,
    OrderLimitError,
    ParseError,
    TrialFn,
    Var,
    VarList,
    differentiate,
    eval_pointwise,
    parse,
    to_source,
)
from .network import (
    CheckpointError,
    DerivativeOrderError,
    LayoutError,
    NetworkSpec,
    forward,
    init_params,
    input_derivatives,
    load_checkpoint,
    n_params,
    save_checkpoint,
)
from .oracle import grid_error, solve_heat_fd, solve_poisson_fd, subsample
from .problem import ConfigError, Domain, PdeProblem, build_problem
from .sampler import (
    AffineMap,
    BoundaryFace,
    Exponential,
    InitialSlice,
    Mixture,
    Product,
    SamplingError,
    TruncatedGaussian,
    Uniform,
    sample,
    sample_boundary,
    sample_initial,
    sampler_from_config,
    scaled_to,
)
from .solver import DGModel, TrainConfig, TrainingError, write_loss_csv

__version__ = "0.1.0"

__all__ = [
    "AffineMap", "AnsatzParts", "BoundaryFace", "CheckpointError", "CompatibilityError",
    "ConfigError", "Const", "DGModel", "DerivativeOrderError", "Domain", "EvalError",
    "Exponential", "InitialSlice", "LayoutError", "LossReport", "Mixture", "NetworkSpec",
    "OrderLimitError", "ParseError", "PdeProblem", "Product", "ResidualProgram",
    "SamplingError", "TrainConfig", "TrainingError", "TrialFn", "TruncatedGaussian",
    "Uniform", "Var", "VarList", "build_parts", "build_problem", "differentiate",
    "eval_pointwise", "forward", "grid_error", "init_params", "input_derivatives",
    "load_checkpoint", "loss_and_grad", "n_params", "parse", "sample",
    "sample_boundary", "sample_initial", "sampler_from_config", "save_checkpoint",
    "scaled_to", "soft_loss_and_grad", "solve_heat_fd", "solve_poisson_fd", "subsample",
    "to_source", "wrap", "write_loss_csv", "__version__",
]
