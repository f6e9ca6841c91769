"""Neural PDE surrogates with flow-guided adaptive collocation sampling."""

from .config import PRESETS, RunConfig, load_config, write_config
from .driver import (
    KlDiagnostic,
    RunRecord,
    compare,
    diag_run,
    evaluate_run,
    grid_mse,
    kl_diagnostic,
    relative_error,
    residual_variance,
    run_one,
)
from .errors import ConfigError, ContractViolation, TrainingError
from .flows import FlowModel, init_flow, load_flow, save_flow
from .nets import SurrogateNet, init_net, load_net, save_net
from .problems import PdeProblem, make_problem
from .training import TrainingSet, empirical_loss, is_loss, train_flow, train_surrogate

__all__ = [
    "PRESETS",
    "RunConfig",
    "load_config",
    "write_config",
    "KlDiagnostic",
    "RunRecord",
    "compare",
    "diag_run",
    "evaluate_run",
    "grid_mse",
    "kl_diagnostic",
    "relative_error",
    "residual_variance",
    "run_one",
    "ConfigError",
    "ContractViolation",
    "TrainingError",
    "FlowModel",
    "init_flow",
    "load_flow",
    "save_flow",
    "SurrogateNet",
    "init_net",
    "load_net",
    "save_net",
    "PdeProblem",
    "make_problem",
    "TrainingSet",
    "empirical_loss",
    "is_loss",
    "train_flow",
    "train_surrogate",
]

__version__ = "0.1.0"
