"""
Mixture-of-activations feedforward layers.

This package provides fixed-activation, learnable-activation (LA) and
mixture-of-activations (MoA) FFN layers for both FFN families, a small
reverse-mode autodiff core to train them inside a toy Transformer, and the
harnesses that compare them: ablation grids, overhead benchmarks and
expressivity witness checks.
"""

from .base import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    FitError,
    Flavor,
    FlavorError,
    GeometryError,
    MoAError,
    NumericError,
    ParseError,
    ProbeError,
    RangeError,
    TheoremAssertionError,
    UnsupportedError,
)

from .tensor import Tape, Tensor, backward, grad_check, hadamard, matmul, zero_grads
from .activations import (
    ActivationDictionary,
    ActivationKind,
    ActivationTag,
    deriv,
    eval as eval_activation,
    parse_dictionary,
    render_dictionary,
)
from .ffn import (
    FFNConfig,
    FFNLayer,
    FFNVariant,
    GateKind,
    ParamBreakdown,
    embed_la_as_moa,
    fixed_as_la,
    forward,
    init,
    match_hidden_to_budget,
    mixing_weights,
    param_count,
)
from .transformer import ModelConfig, TransformerModel, build, forward_loss, generate_greedy
from .optim import Schedule, adamw_step, lr_at
from .train import AblationCell, RunMetrics, TrainConfig, run_ablation, run_training
from .bench import OverheadReport, analytic_flops, wall_clock
from .config import RunConfig, parse_ablation_grid
from .pipeline import RunPipeline
from .cli import main as run_cli

__all__ = [
    # Errors and shared enums
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "FitError",
    "Flavor",
    "FlavorError",
    "GeometryError",
    "MoAError",
    "NumericError",
    "ParseError",
    "ProbeError",
    "RangeError",
    "TheoremAssertionError",
    "UnsupportedError",

    # Autodiff core
    "Tape",
    "Tensor",
    "backward",
    "grad_check",
    "hadamard",
    "matmul",
    "zero_grads",

    # Activations
    "ActivationDictionary",
    "ActivationKind",
    "ActivationTag",
    "deriv",
    "eval_activation",
    "parse_dictionary",
    "render_dictionary",

    # FFN layers
    "FFNConfig",
    "FFNLayer",
    "FFNVariant",
    "GateKind",
    "ParamBreakdown",
    "embed_la_as_moa",
    "fixed_as_la",
    "forward",
    "init",
    "match_hidden_to_budget",
    "mixing_weights",
    "param_count",

    # Model and training
    "ModelConfig",
    "TransformerModel",
    "build",
    "forward_loss",
    "generate_greedy",
    "Schedule",
    "adamw_step",
    "lr_at",
    "AblationCell",
    "RunMetrics",
    "TrainConfig",
    "run_ablation",
    "run_training",

    # Benchmarks
    "OverheadReport",
    "analytic_flops",
    "wall_clock",

    # Configuration and CLI
    "RunConfig",
    "parse_ablation_grid",
    "RunPipeline",
    "run_cli",
]
