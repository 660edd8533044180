from .kernels import backend_name
from .optimizer import (
    LossConfig,
    OptimizedRecipe,
    OptimizerConfig,
    RatioParams,
    loss_gradient,
    loss_total,
    optimize_ratios,
    simplify_recipe,
    softmax_fractions,
)

__all__ = [
    "LossConfig",
    "OptimizedRecipe",
    "OptimizerConfig",
    "RatioParams",
    "backend_name",
    "loss_gradient",
    "loss_total",
    "optimize_ratios",
    "simplify_recipe",
    "softmax_fractions",
]
