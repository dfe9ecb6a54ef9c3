"""Tensor core: arrays, tape-based reverse-mode gradients, contraction, Adam."""

from . import ops
from .contract import ContractionError, contract, matmul
from .gradcheck import GradcheckReport, finite_diff_check, kink_crossings, rel_error
from .nn import Linear, MlpWeights, NormParams, NormState, linear, mlp_forward, normalize
from .ops import softmax
from .optim import AdamState, adam_step
from .tensor import (BACKWARD_RULES, FORWARD_RULES, GradientError, GradTape, ShapeError, Tensor,
                     backward, no_record)

__all__ = [
    "AdamState", "BACKWARD_RULES", "ContractionError", "FORWARD_RULES", "GradcheckReport",
    "GradTape", "GradientError", "Linear", "MlpWeights", "NormParams", "NormState", "ShapeError", "Tensor", "adam_step", "backward",
    "contract", "finite_diff_check", "kink_crossings", "linear", "matmul", "mlp_forward", "no_record", "normalize",
    "ops", "rel_error", "softmax",
]
