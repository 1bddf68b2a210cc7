from dataclasses import dataclass, field
from enum import Enum, unique
from typing import List, Self
import numpy as np

from nusg.errors import ShapeError
from nusg.tensor import (
    Tensor,
    add,
    concat_channels,
    gate,
    get_dtype,
    maxpool2d,
    relu,
    upsample_bilinear,
)
from .cost import CostTally, Shape
from .layers import BatchNorm2d, Conv2d
from .module import Module, Parameter


@unique
class RsuVariant(Enum):
    """
    How an RSU block reaches its receptive field.
    """

    REGULAR = "regular"  # pooling + upsampling
    DILATED = "F"  # dilations 1, 2, 4, 8 at constant resolution


@dataclass(frozen=True)
class ConvBlockSpec:
    c_in: int
    c_out: int
    kernel: int = field(default=3)
    dilation: int = field(default=1)

    @property
    def padding(self) -> int:
        # Keeps H×W unchanged at stride 1
        return self.dilation * (self.kernel - 1) // 2


@dataclass(frozen=True)
class RsuSpec:
    """
    An RSU-L block: `height` is L, the number of encoder levels counting the
    dilated bottom.
    """

    height: int
    c_in: int
    c_mid: int
    c_out: int
    variant: RsuVariant = field(default=RsuVariant.REGULAR)

    def __post_init__(self):
        if self.height < 2:
            raise ValueError(f"RSU height must be at least 2, got {self.height}")
        if self.variant == RsuVariant.DILATED and self.height != 4:
            raise ValueError("the dilated variant only exists as RSU-4F")

    @classmethod
    def dilated(cls, c_in: int, c_mid: int, c_out: int) -> Self:
        return cls(4, c_in, c_mid, c_out, RsuVariant.DILATED)

    @property
    def divisor(self) -> int:
        """
        What input H and W must be divisible by.
        """

        if self.variant == RsuVariant.DILATED:
            return 1
        return 2 ** (self.height - 2)

    @property
    def label(self) -> str:
        suffix = "F" if self.variant == RsuVariant.DILATED else ""
        return f"RSU-{self.height}{suffix}({self.c_in},{self.c_mid},{self.c_out})"


@dataclass(frozen=True)
class ResConnectSpec:
    c_in: int
    c_out: int


class ConvBNReLU(Module):
    """
    conv → batchnorm → relu, spatial size preserving.
    """

    spec: ConvBlockSpec

    def __init__(self, spec: ConvBlockSpec):
        super().__init__()
        self.spec = spec
        self.conv = Conv2d(
            spec.c_in, spec.c_out, spec.kernel, dilation=spec.dilation, padding=spec.padding
        )
        self.bn = BatchNorm2d(spec.c_out)

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 4 or x.shape[1] != self.spec.c_in:
            raise ShapeError(f"block expects {self.spec.c_in} input channels, got shape {x.shape}")
        return relu(self.bn(self.conv(x)))

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        shape = self.conv.cost(shape, tally)
        shape = self.bn.cost(shape, tally)
        tally.elementwise(shape)
        return shape


def _cbr(c_in: int, c_out: int, dilation: int = 1) -> ConvBNReLU:
    return ConvBNReLU(ConvBlockSpec(c_in, c_out, 3, dilation))


def _pool_shape(shape: Shape) -> Shape:
    n, c, h, w = shape
    return (n, c, h // 2, w // 2)


class RSU(Module):
    """
    Residual U-block of height L.

    The input is projected to `c_out` (x0), run through an L-level U-Net
    whose bottom level is a dilation-2 conv, and the U-Net output is added
    back onto x0.
    """

    spec: RsuSpec

    encoders: List[ConvBNReLU]
    decoders: List[ConvBNReLU]

    def __init__(self, spec: RsuSpec):
        super().__init__()
        if spec.variant != RsuVariant.REGULAR:
            raise ValueError(f"{spec.label} is not a regular RSU")

        self.spec = spec
        height, c_mid = spec.height, spec.c_mid

        self.rebnconvin = _cbr(spec.c_in, spec.c_out)

        self.encoders = []
        for i in range(1, height):
            block = _cbr(spec.c_out if i == 1 else c_mid, c_mid)
            setattr(self, f"rebnconv{i}", block)
            self.encoders.append(block)

        setattr(self, f"rebnconv{height}", _cbr(c_mid, c_mid, dilation=2))

        # decoders[0] is the deepest (level L-1), decoders[-1] is level 1
        self.decoders = []
        for i in range(height - 1, 0, -1):
            block = _cbr(2 * c_mid, spec.c_out if i == 1 else c_mid)
            setattr(self, f"rebnconv{i}d", block)
            self.decoders.append(block)

    @property
    def bottom(self) -> ConvBNReLU:
        return getattr(self, f"rebnconv{self.spec.height}")

    def check_input(self, shape: Shape) -> None:
        divisor = self.spec.divisor
        if shape[2] % divisor or shape[3] % divisor:
            raise ShapeError(
                f"{self.spec.label} needs H and W divisible by {divisor}, got {shape[2]}x{shape[3]}",
                divisor=divisor,
            )

    def forward(self, x: Tensor) -> Tensor:
        self.check_input(x.shape)

        x0 = self.rebnconvin(x)

        skips = []
        hx = x0
        for i, block in enumerate(self.encoders):
            if i > 0:
                hx = maxpool2d(hx, 2, 2)
            hx = block(hx)
            skips.append(hx)

        hx = self.bottom(hx)

        for block, skip in zip(self.decoders, reversed(skips)):
            if hx.shape[2:] != skip.shape[2:]:
                hx = upsample_bilinear(hx, skip.shape[2], skip.shape[3])
            hx = block(concat_channels([hx, skip]))

        return add(x0, hx)

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        self.check_input(shape)

        x0 = self.rebnconvin.cost(shape, tally)

        skips = []
        hx = x0
        for i, block in enumerate(self.encoders):
            if i > 0:
                hx = _pool_shape(hx)
                tally.elementwise(hx)
            hx = block.cost(hx, tally)
            skips.append(hx)

        hx = self.bottom.cost(hx, tally)

        for block, skip in zip(self.decoders, reversed(skips)):
            if hx[2:] != skip[2:]:
                hx = (hx[0], hx[1], skip[2], skip[3])
                tally.elementwise(hx)
            hx = block.cost((hx[0], hx[1] + skip[1], hx[2], hx[3]), tally)

        tally.elementwise(x0)
        return x0


class RSU4F(Module):
    """
    RSU-4 with pooling replaced by dilations 1, 2, 4, 8; resolution never
    changes inside the block.
    """

    spec: RsuSpec

    def __init__(self, spec: RsuSpec):
        super().__init__()
        if spec.variant != RsuVariant.DILATED:
            raise ValueError(f"{spec.label} is not a dilated RSU")

        self.spec = spec
        c_in, c_mid, c_out = spec.c_in, spec.c_mid, spec.c_out

        self.rebnconvin = _cbr(c_in, c_out)
        self.rebnconv1 = _cbr(c_out, c_mid, 1)
        self.rebnconv2 = _cbr(c_mid, c_mid, 2)
        self.rebnconv3 = _cbr(c_mid, c_mid, 4)
        self.rebnconv4 = _cbr(c_mid, c_mid, 8)
        self.rebnconv3d = _cbr(2 * c_mid, c_mid, 4)
        self.rebnconv2d = _cbr(2 * c_mid, c_mid, 2)
        self.rebnconv1d = _cbr(2 * c_mid, c_out, 1)

    def forward(self, x: Tensor) -> Tensor:
        x0 = self.rebnconvin(x)

        e1 = self.rebnconv1(x0)
        e2 = self.rebnconv2(e1)
        e3 = self.rebnconv3(e2)
        b = self.rebnconv4(e3)

        d3 = self.rebnconv3d(concat_channels([b, e3]))
        d2 = self.rebnconv2d(concat_channels([d3, e2]))
        d1 = self.rebnconv1d(concat_channels([d2, e1]))

        return add(x0, d1)

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        x0 = self.rebnconvin.cost(shape, tally)
        n, _, h, w = x0
        c_mid = self.spec.c_mid

        e = self.rebnconv1.cost(x0, tally)
        for block in (self.rebnconv2, self.rebnconv3, self.rebnconv4):
            e = block.cost(e, tally)
        for block in (self.rebnconv3d, self.rebnconv2d, self.rebnconv1d):
            block.cost((n, 2 * c_mid, h, w), tally)

        tally.elementwise(x0)
        return x0


def build_rsu(spec: RsuSpec) -> RSU | RSU4F:
    if spec.variant == RsuVariant.DILATED:
        return RSU4F(spec)
    return RSU(spec)


class ResConnect(Module):
    """
    Residual soft connection around an encoder stage.

    The stage input is projected onto the stage output's channels, the sum is
    max-pooled (3×3, stride 1) and passed through a 1×1 conv, and the result
    is added to the stage output scaled by a learnable coefficient `alpha`.
    With `alpha` at 0 the module is the identity on the stage output.
    """

    spec: ResConnectSpec
    alpha: Parameter

    def __init__(self, spec: ResConnectSpec):
        super().__init__()
        self.spec = spec
        self.proj = Conv2d(spec.c_in, spec.c_out, 1)
        self.fuse = Conv2d(spec.c_out, spec.c_out, 1)
        self.alpha = Parameter(np.ones((1,), dtype=get_dtype()))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        self.alpha.data = np.ones((1,), dtype=get_dtype())

    def forward(self, x_in: Tensor, x_out: Tensor) -> Tensor:
        if x_in.shape[0] != x_out.shape[0] or x_in.shape[2:] != x_out.shape[2:]:
            raise ShapeError(f"res connect spatial mismatch: input {x_in.shape} vs output {x_out.shape}")
        if x_out.shape[1] != self.spec.c_out:
            raise ShapeError(f"res connect expects {self.spec.c_out} output channels, got {x_out.shape}")

        p = self.proj(x_in)
        f = maxpool2d(add(x_out, p), 3, 1, 1)
        r = self.fuse(f)

        return add(x_out, gate(self.alpha, r))

    def cost(self, in_shape: Shape, out_shape: Shape, tally: CostTally) -> Shape:
        p = self.proj.cost(in_shape, tally)
        tally.elementwise(p)  # add
        tally.elementwise(p)  # pool
        self.fuse.cost(p, tally)
        tally.elementwise(out_shape)  # gate
        tally.elementwise(out_shape)  # add
        return out_shape
