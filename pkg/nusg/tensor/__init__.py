from .precision import get_dtype, set_dtype, precision
from .tensor import (
    Tensor,
    Function,
    Graph,
    backward,
    reset_grads,
    no_grad,
    check_finite,
    is_grad_enabled,
)
from .ops import (
    conv_output_size,
    interpolation_matrix,
    conv2d,
    maxpool2d,
    upsample_bilinear,
    concat_channels,
    relu,
    sigmoid,
    add,
    gate,
    scale,
    mean,
    reduce_sum,
    batchnorm2d,
    DIFFERENTIABLE_OPS,
)
from .gradcheck import grad_check, project, relative_error

__all__ = [
    "get_dtype",
    "set_dtype",
    "precision",
    "Tensor",
    "Function",
    "Graph",
    "backward",
    "reset_grads",
    "no_grad",
    "check_finite",
    "is_grad_enabled",
    "conv_output_size",
    "interpolation_matrix",
    "conv2d",
    "maxpool2d",
    "upsample_bilinear",
    "concat_channels",
    "relu",
    "sigmoid",
    "add",
    "gate",
    "scale",
    "mean",
    "reduce_sum",
    "batchnorm2d",
    "DIFFERENTIABLE_OPS",
    "grad_check",
    "project",
    "relative_error",
]
