from dataclasses import dataclass
from typing import Tuple

from nusg.nn import CostTally, Module, Shape

MEGABYTE = 2**20
BYTES_PER_PARAM = 4

FLOP_CONVENTION = (
    "flops: 2 per conv multiply-accumulate, +1 per conv output for bias, "
    "+1 per output element of batchnorm, activation, pooling, resize and add; "
    "macs: conv multiply-accumulates only"
)


@dataclass(frozen=True)
class ParamCount:
    count: int
    megabytes: float


@dataclass(frozen=True)
class FlopCount:
    """
    Operation counts of one forward pass at a given input shape.
    """

    flops: int
    macs: int
    input_shape: Tuple[int, int, int, int]
    convention: str = FLOP_CONVENTION

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    @property
    def gmacs(self) -> float:
        return self.macs / 1e9


def count_params(model: Module) -> ParamCount:
    """
    Learnable parameters only; batchnorm running statistics are buffers and
    not counted. Megabytes assume 32-bit storage.
    """

    count = sum(p.data.size for p in model.parameters())
    return ParamCount(count, count * BYTES_PER_PARAM / MEGABYTE)


def count_flops(model: Module, input_shape: Shape) -> FlopCount:
    cost = getattr(model, "cost", None)
    if cost is None:
        raise TypeError(f"{type(model).__name__} cannot be costed")

    shape = tuple(int(s) for s in input_shape)
    tally = CostTally()
    cost(shape, tally)
    return FlopCount(tally.flops, tally.macs, shape)
