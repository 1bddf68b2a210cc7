from dataclasses import dataclass
from typing import List, Optional, Tuple
import logging
import zlib
import numpy as np

from nusg.errors import ShapeError
from nusg.nn import (
    RSU,
    RSU4F,
    Conv2d,
    CostTally,
    Module,
    ResConnect,
    Shape,
    build_rsu,
)
from nusg.tensor import (
    Tensor,
    concat_channels,
    maxpool2d,
    sigmoid,
    upsample_bilinear,
)
from .spec import Arch, ArchitectureError, ModelSpec

logger = logging.getLogger(__name__)


INPUT_DIVISOR = 32
MIN_INPUT_SIZE = 64


class InputSizeError(ArchitectureError, ShapeError):
    """
    The input's spatial size does not fit the five pooling stages.
    """

    def __init__(self, *args, divisor: int = INPUT_DIVISOR):
        super().__init__(*args)
        self.divisor = divisor


@dataclass
class SideOutputs:
    """
    The six side maps and the fused map, each N×1×H×W in (0, 1).
    """

    s1: Tensor
    s2: Tensor
    s3: Tensor
    s4: Tensor
    s5: Tensor
    s6: Tensor
    fused: Tensor

    def sides(self) -> List[Tensor]:
        return [self.s1, self.s2, self.s3, self.s4, self.s5, self.s6]

    def maps(self) -> List[Tensor]:
        """
        All seven maps, fused last.
        """

        return self.sides() + [self.fused]


class U2Net(Module):
    """
    Two-level nested U-structure: six RSU encoder stages, five RSU decoder
    stages, a side output per decoder plus the deepest encoder, and a 1×1
    fusion conv over the six side logits.

    The res- variants wrap the skips of En1..En5 in a `ResConnect`; the
    pooled input to the next encoder stays the unwrapped stage output.
    """

    spec: ModelSpec

    encoders: List[RSU | RSU4F]
    decoders: List[RSU | RSU4F]
    sides: List[Conv2d]
    connects: List[ResConnect]

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec

        self.encoders = []
        self.connects = []
        for i, stage in enumerate(spec.encoders, start=1):
            block = build_rsu(stage)
            setattr(self, f"en{i}", block)
            self.encoders.append(block)
            if spec.res and i <= len(spec.res):
                connect = ResConnect(spec.res[i - 1])
                setattr(self, f"res{i}", connect)
                self.connects.append(connect)

        # decoders[i] is De(i+1); registered deepest first
        decoders = {}
        for i in range(len(spec.decoders), 0, -1):
            block = build_rsu(spec.decoders[i - 1])
            setattr(self, f"de{i}", block)
            decoders[i] = block
        self.decoders = [decoders[i] for i in range(1, len(spec.decoders) + 1)]

        self.sides = []
        for i, channels in enumerate(spec.side_channels, start=1):
            conv = Conv2d(channels, 1, 3, padding=1)
            setattr(self, f"side{i}", conv)
            self.sides.append(conv)

        self.outconv = Conv2d(len(self.sides), 1, 1)

    @property
    def arch(self) -> Arch:
        return self.spec.arch

    def check_input(self, shape: Tuple[int, ...]) -> None:
        if len(shape) != 4 or shape[1] != self.spec.encoders[0].c_in:
            raise ShapeError(
                f"expected N×{self.spec.encoders[0].c_in}×H×W input, got shape {shape}"
            )

        h, w = shape[2], shape[3]
        if h % INPUT_DIVISOR or w % INPUT_DIVISOR or h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
            raise InputSizeError(
                f"input {h}x{w} must have H and W divisible by {INPUT_DIVISOR} "
                f"and at least {MIN_INPUT_SIZE}"
            )

    def _encode(self, x: Tensor) -> Tuple[List[Tensor], Tensor]:
        skips = []
        hx = x
        for i, block in enumerate(self.encoders):
            stage_in = hx if i == 0 else maxpool2d(hx, 2, 2)
            hx = block(stage_in)
            if i < len(self.decoders):
                skip = self.connects[i](stage_in, hx) if self.connects else hx
                skips.append(skip)
        return skips, hx

    def forward(self, x: Tensor) -> SideOutputs:
        self.check_input(x.shape)
        height, width = x.shape[2], x.shape[3]

        skips, deepest = self._encode(x)

        features = [deepest]
        hx = deepest
        for block, skip in zip(reversed(self.decoders), reversed(skips)):
            up = upsample_bilinear(hx, skip.shape[2], skip.shape[3])
            hx = block(concat_channels([up, skip]))
            features.insert(0, hx)

        logits = []
        for conv, feature in zip(self.sides, features):
            logit = conv(feature)
            if logit.shape[2:] != (height, width):
                logit = upsample_bilinear(logit, height, width)
            logits.append(logit)

        fused = self.outconv(concat_channels(logits))

        maps = [sigmoid(logit) for logit in logits]
        return SideOutputs(*maps, fused=sigmoid(fused))

    def cost(self, shape: Shape, tally: CostTally) -> Shape:
        self.check_input(shape)
        n, _, height, width = shape

        skips = []
        hx = shape
        for i, block in enumerate(self.encoders):
            stage_in = hx
            if i > 0:
                stage_in = (hx[0], hx[1], hx[2] // 2, hx[3] // 2)
                tally.elementwise(stage_in)
            hx = block.cost(stage_in, tally)
            if i < len(self.decoders):
                if self.connects:
                    self.connects[i].cost(stage_in, hx, tally)
                skips.append(hx)

        features = [hx]
        for block, skip in zip(reversed(self.decoders), reversed(skips)):
            up = (hx[0], hx[1], skip[2], skip[3])
            tally.elementwise(up)
            hx = block.cost((n, up[1] + skip[1], skip[2], skip[3]), tally)
            features.insert(0, hx)

        full = (n, 1, height, width)
        for conv, feature in zip(self.sides, features):
            logit = conv.cost(feature, tally)
            if logit[2:] != full[2:]:
                tally.elementwise(full)
            tally.elementwise(full)  # sigmoid

        self.outconv.cost((n, len(self.sides), height, width), tally)
        tally.elementwise(full)
        return full


def module_rng(seed: int, name: str) -> np.random.Generator:
    """
    Generator for one named module. Depends on nothing but the seed and the
    dotted name, so modules sharing a name across variants start equal.
    """

    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


def initialize(model: Module, seed: int) -> None:
    for name, module in model.named_modules():
        module.reset_parameters(module_rng(seed, name))


def build_model(arch: "str | Arch", seed: int = 0, *, init: bool = True) -> U2Net:
    """
    Builds one of the four architectures.

    With `init=False` parameter storage is left uninitialized; the caller is
    expected to load a checkpoint over it.
    """

    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")

    spec = ModelSpec.for_arch(arch)
    model = U2Net(spec)
    if init:
        initialize(model, seed)

    logger.info(f"built {spec.arch.value} (seed {seed})")
    return model


def _skeleton_shapes(arch: Arch) -> dict:
    skeleton = U2Net(ModelSpec.for_arch(arch))
    return {name: value.shape for name, value in skeleton.state_dict().items()}


def find_arch(state_shapes: dict, candidates: Optional[List[Arch]] = None) -> Optional[Arch]:
    """
    The architecture whose tensor names and shapes match `state_shapes`
    exactly, or None.
    """

    for arch in candidates or list(Arch):
        if _skeleton_shapes(arch) == state_shapes:
            return arch
    return None


def closest_arch(state_shapes: dict, candidates: Optional[List[Arch]] = None) -> Arch:
    """
    The architecture with the fewest tensors missing, unexpected or of a
    different shape relative to `state_shapes`; ties go to the earlier
    candidate.
    """

    def differences(arch: Arch) -> int:
        expected = _skeleton_shapes(arch)
        names = expected.keys() | state_shapes.keys()
        return sum(1 for name in names if expected.get(name) != state_shapes.get(name))

    return min(candidates or list(Arch), key=differences)
