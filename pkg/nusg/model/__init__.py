from .spec import Arch, ArchitectureError, ModelSpec
from .u2net import (
    INPUT_DIVISOR,
    MIN_INPUT_SIZE,
    InputSizeError,
    SideOutputs,
    U2Net,
    build_model,
    closest_arch,
    find_arch,
    initialize,
    module_rng,
)
from .budget import FLOP_CONVENTION, FlopCount, ParamCount, count_flops, count_params
from .checkpoint import (
    MAGIC,
    VERSION,
    CheckpointError,
    BadMagicError,
    UnsupportedVersionError,
    TruncatedError,
    TensorMismatchError,
    DtypeCode,
    pack_state,
    unpack_state,
    save_checkpoint,
    read_checkpoint,
    load_state,
    load_model,
)

__all__ = [
    "Arch",
    "ArchitectureError",
    "ModelSpec",
    "INPUT_DIVISOR",
    "MIN_INPUT_SIZE",
    "InputSizeError",
    "SideOutputs",
    "U2Net",
    "build_model",
    "closest_arch",
    "find_arch",
    "initialize",
    "module_rng",
    "FLOP_CONVENTION",
    "FlopCount",
    "ParamCount",
    "count_flops",
    "count_params",
    "MAGIC",
    "VERSION",
    "CheckpointError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedError",
    "TensorMismatchError",
    "DtypeCode",
    "pack_state",
    "unpack_state",
    "save_checkpoint",
    "read_checkpoint",
    "load_state",
    "load_model",
]
