import math
import numpy as np

from nusg.errors import ShapeError
from nusg.tensor import Tensor, batchnorm2d, conv2d, conv_output_size, get_dtype
from .cost import CostTally, Shape
from .module import Module, Parameter


class Conv2d(Module):
    """
    Square-kernel convolution with bias.
    """

    c_in: int
    c_out: int
    kernel: int
    dilation: int
    padding: int

    weight: Parameter
    bias: Parameter

    def __init__(self, c_in: int, c_out: int, kernel: int, *, dilation: int = 1, padding: int = 0):
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.dilation = dilation
        self.padding = padding

        dtype = get_dtype()
        self.weight = Parameter(np.empty((c_out, c_in, kernel, kernel), dtype=dtype))
        self.bias = Parameter(np.zeros((c_out,), dtype=dtype))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        # Kaiming fan-in normal
        fan_in = self.c_in * self.kernel * self.kernel
        std = math.sqrt(2.0 / fan_in)
        self.weight.data = (rng.standard_normal(self.weight.shape) * std).astype(get_dtype())
        self.bias.data = np.zeros(self.bias.shape, dtype=get_dtype())

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, 1, self.padding, self.dilation)

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        n, c, h, w = shape
        if c != self.c_in:
            raise ShapeError(f"conv expects {self.c_in} channels, got shape {shape}")

        out_h = conv_output_size(h, self.kernel, 1, self.padding, self.dilation)
        out_w = conv_output_size(w, self.kernel, 1, self.padding, self.dilation)
        out = (n, self.c_out, out_h, out_w)
        tally.conv(self.c_in, self.c_out, self.kernel, out)
        return out


class BatchNorm2d(Module):
    channels: int
    momentum: float
    eps: float

    weight: Parameter
    bias: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray

    def __init__(self, channels: int, *, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps

        dtype = get_dtype()
        self.weight = Parameter(np.ones((channels,), dtype=dtype))
        self.bias = Parameter(np.zeros((channels,), dtype=dtype))
        self.register_buffer("running_mean", np.zeros((channels,), dtype=dtype))
        self.register_buffer("running_var", np.ones((channels,), dtype=dtype))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        dtype = get_dtype()
        self.weight.data = np.ones((self.channels,), dtype=dtype)
        self.bias.data = np.zeros((self.channels,), dtype=dtype)
        self.running_mean = np.zeros((self.channels,), dtype=dtype)
        self.running_var = np.ones((self.channels,), dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return batchnorm2d(
            x,
            self.weight,
            self.bias,
            self.running_mean,
            self.running_var,
            self.training,
            self.momentum,
            self.eps,
        )

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        tally.elementwise(shape)
        return shape
