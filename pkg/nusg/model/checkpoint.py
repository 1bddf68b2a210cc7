from enum import Enum, unique
from pathlib import Path
from typing import Dict, Optional
import logging
import os
import struct
import numpy as np

from nusg.errors import NusgError
from nusg.nn import Module, StateMismatchError
from .spec import Arch
from .u2net import U2Net, build_model, closest_arch, find_arch

logger = logging.getLogger(__name__)


MAGIC = b"NUSG"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_NAME_LEN = struct.Struct("<H")
_TENSOR_INFO = struct.Struct("<BB")
_DIM = struct.Struct("<I")


class CheckpointError(NusgError):
    def __init__(self, *args):
        super().__init__(*args)


class BadMagicError(CheckpointError):
    magic: bytes

    def __init__(self, magic: bytes, *args):
        super().__init__(*args)
        self.magic = magic


class UnsupportedVersionError(CheckpointError):
    version: int

    def __init__(self, version: int, *args):
        super().__init__(*args)
        self.version = version


class TruncatedError(CheckpointError):
    def __init__(self, *args):
        super().__init__(*args)


class TensorMismatchError(CheckpointError):
    name: str

    def __init__(self, name: str, *args):
        super().__init__(*args)
        self.name = name


@unique
class DtypeCode(Enum):
    """
    Element type codes stored per entry.
    """

    FLOAT32 = 0
    FLOAT64 = 1

    @property
    def numpy(self) -> np.dtype:
        if self == DtypeCode.FLOAT32:
            return np.dtype("<f4")
        return np.dtype("<f8")

    @classmethod
    def of(cls, dtype: np.dtype) -> "DtypeCode":
        if dtype == np.float32:
            return cls.FLOAT32
        if dtype == np.float64:
            return cls.FLOAT64
        raise CheckpointError(f"cannot store tensors of dtype {dtype}")


def pack_state(state: Dict[str, np.ndarray]) -> bytes:
    """
    Encodes named tensors in enumeration order.

    Layout, all little-endian: magic "NUSG", uint32 version, uint32 entry
    count; then per entry a uint16 name length, the UTF-8 name, uint8 dtype
    code, uint8 rank, one uint32 per dim and the raw values.
    """

    parts = [_HEADER.pack(MAGIC, VERSION, len(state))]
    for name, value in state.items():
        value = np.asarray(value)
        code = DtypeCode.of(value.dtype)
        encoded = name.encode("utf-8")

        parts.append(_NAME_LEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_TENSOR_INFO.pack(code.value, value.ndim))
        parts.extend(_DIM.pack(d) for d in value.shape)
        parts.append(np.ascontiguousarray(value, dtype=code.numpy).tobytes())
    return b"".join(parts)


class _Reader:
    buf: bytes
    offset: int

    def __init__(self, buf: bytes):
        self.buf = buf
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.buf):
            raise TruncatedError(
                f"checkpoint truncated at byte {self.offset}, wanted {size} more"
            )
        chunk = self.buf[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))


def unpack_state(buf: bytes) -> Dict[str, np.ndarray]:
    reader = _Reader(buf)

    if len(buf) < _HEADER.size:
        raise BadMagicError(buf[:4], f"checkpoint too short, len {len(buf)}")

    magic, version, count = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise BadMagicError(magic, f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(version, f"unsupported checkpoint version {version}")

    state = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN)
        name = reader.take(name_len).decode("utf-8")

        code, rank = reader.unpack(_TENSOR_INFO)
        try:
            dtype = DtypeCode(code).numpy
        except ValueError:
            raise CheckpointError(f"tensor {name} has unknown dtype code {code}")

        dims = tuple(reader.unpack(_DIM)[0] for _ in range(rank))
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        values = np.frombuffer(reader.take(size), dtype=dtype).reshape(dims)
        state[name] = values.astype(dtype.newbyteorder("="), copy=True)

    if reader.offset != len(buf):
        raise CheckpointError(f"{len(buf) - reader.offset} trailing bytes after {count} entries")

    return state


def save_checkpoint(path: str | Path, model: Module) -> Path:
    """
    Writes parameters and buffers of `model`. The file is replaced
    atomically, so an interrupted write leaves the previous checkpoint.
    """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")

    with open(tmp, "wb") as f:
        f.write(pack_state(model.state_dict()))
    os.replace(tmp, path)

    logger.info(f"checkpoint written to {path}")
    return path


def read_checkpoint(path: str | Path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        return unpack_state(f.read())


def load_state(model: Module, state: Dict[str, np.ndarray]) -> None:
    try:
        model.load_state_dict(state)
    except StateMismatchError as e:
        raise TensorMismatchError(e.name, str(e))


def load_model(path: str | Path, arch: "Optional[str | Arch]" = None) -> U2Net:
    """
    Restores a model from a checkpoint. Without `arch` the architecture is
    recognized from the stored tensor names and shapes; when none matches
    exactly, the error names the first tensor that differs from the closest
    architecture.
    """

    state = read_checkpoint(path)

    if arch is None:
        shapes = {name: value.shape for name, value in state.items()}
        found = find_arch(shapes)
        if found is None:
            closest = closest_arch(shapes)
            try:
                load_state(build_model(closest, init=False), state)
            except TensorMismatchError as e:
                raise TensorMismatchError(
                    e.name, f"{path} matches no known architecture (closest {closest.value}): {e}"
                )
        arch = found

    model = build_model(arch, init=False)
    load_state(model, state)
    logger.info(f"loaded {model.arch.value} from {path}")
    return model
