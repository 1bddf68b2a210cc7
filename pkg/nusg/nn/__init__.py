from .module import Module, Parameter, StateMismatchError
from .cost import CostTally, Shape
from .layers import Conv2d, BatchNorm2d
from .blocks import (
    RsuVariant,
    ConvBlockSpec,
    RsuSpec,
    ResConnectSpec,
    ConvBNReLU,
    RSU,
    RSU4F,
    ResConnect,
    build_rsu,
)

__all__ = [
    "Module",
    "Parameter",
    "StateMismatchError",
    "CostTally",
    "Shape",
    "Conv2d",
    "BatchNorm2d",
    "RsuVariant",
    "ConvBlockSpec",
    "RsuSpec",
    "ResConnectSpec",
    "ConvBNReLU",
    "RSU",
    "RSU4F",
    "ResConnect",
    "build_rsu",
]
