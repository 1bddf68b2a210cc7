from dataclasses import dataclass, field
from typing import Tuple


type Shape = Tuple[int, int, int, int]


@dataclass
class CostTally:
    """
    Running operation counts for a traced forward pass.

    `flops` follows the full convention: 2 per multiply-accumulate plus one
    per bias add, and one op per output element of normalization,
    activation, pooling, resizing and residual adds. `macs` counts the
    convolution multiply-accumulates only.
    """

    flops: int = field(default=0)
    macs: int = field(default=0)

    def conv(self, c_in: int, c_out: int, kernel: int, out_shape: Shape, *, bias: bool = True) -> None:
        n, _, h, w = out_shape
        macs = kernel * kernel * c_in * c_out * h * w * n
        self.macs += macs
        self.flops += 2 * macs
        if bias:
            self.flops += c_out * h * w * n

    def elementwise(self, shape: Shape) -> None:
        n, c, h, w = shape
        self.flops += n * c * h * w
