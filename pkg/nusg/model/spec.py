from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Self, Tuple

from nusg.errors import NusgError
from nusg.nn import ResConnectSpec, RsuSpec


class ArchitectureError(NusgError):
    """
    Unknown architecture id or an inconsistent stage table.
    """

    def __init__(self, *args):
        super().__init__(*args)


@unique
class Arch(Enum):
    """
    The four members of the model family.
    """

    U2NET = "u2net"
    RES_U2NET = "res-u2net"
    U2NET_LITE = "u2net-lite"
    RES_U2NET_LITE = "res-u2net-lite"

    @classmethod
    def parse(cls, value: "str | Arch") -> "Arch":
        if isinstance(value, Arch):
            return value
        try:
            return cls(value)
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ArchitectureError(f"unknown arch {value!r}, expected one of: {valid}")

    @property
    def is_res(self) -> bool:
        return self in (Arch.RES_U2NET, Arch.RES_U2NET_LITE)

    @property
    def is_lite(self) -> bool:
        return self in (Arch.U2NET_LITE, Arch.RES_U2NET_LITE)


def _full_table() -> Tuple[Tuple[RsuSpec, ...], Tuple[RsuSpec, ...]]:
    encoders = (
        RsuSpec(7, 3, 32, 64),
        RsuSpec(6, 64, 32, 128),
        RsuSpec(5, 128, 64, 256),
        RsuSpec(4, 256, 128, 512),
        RsuSpec.dilated(512, 256, 512),
        RsuSpec.dilated(512, 256, 512),
    )
    decoders = (
        RsuSpec(7, 128, 16, 64),
        RsuSpec(6, 256, 32, 64),
        RsuSpec(5, 512, 64, 128),
        RsuSpec(4, 1024, 128, 256),
        RsuSpec.dilated(1024, 256, 512),
    )
    return encoders, decoders


def _lite_table() -> Tuple[Tuple[RsuSpec, ...], Tuple[RsuSpec, ...]]:
    encoders = (
        RsuSpec(7, 3, 16, 64),
        RsuSpec(6, 64, 16, 64),
        RsuSpec(5, 64, 16, 64),
        RsuSpec(4, 64, 16, 64),
        RsuSpec.dilated(64, 16, 64),
        RsuSpec.dilated(64, 16, 64),
    )
    decoders = (
        RsuSpec(7, 128, 16, 64),
        RsuSpec(6, 128, 16, 64),
        RsuSpec(5, 128, 16, 64),
        RsuSpec(4, 128, 16, 64),
        RsuSpec.dilated(128, 16, 64),
    )
    return encoders, decoders


@dataclass(frozen=True)
class ModelSpec:
    """
    Declarative stage table of a nested-U model.

    `encoders` runs En1..En6 and `decoders` De1..De5. Decoder i consumes the
    concatenation of the upsampled output of the next deeper stage and the
    (possibly res-wrapped) output of encoder i. `res`, when present, holds
    one soft connection per encoder skip En1..En5.
    """

    arch: Arch
    encoders: Tuple[RsuSpec, ...]
    decoders: Tuple[RsuSpec, ...]
    res: Tuple[ResConnectSpec, ...] = field(default=())

    def __post_init__(self):
        if len(self.encoders) != 6 or len(self.decoders) != 5:
            raise ArchitectureError(
                f"expected 6 encoder and 5 decoder stages, got {len(self.encoders)} and {len(self.decoders)}"
            )
        if self.res and len(self.res) != 5:
            raise ArchitectureError(f"expected 5 res connections, got {len(self.res)}")

        for i in range(1, len(self.encoders)):
            if self.encoders[i].c_in != self.encoders[i - 1].c_out:
                raise ArchitectureError(f"En{i + 1} input does not match En{i} output")

        for i, decoder in enumerate(self.decoders):
            deeper = self.decoders[i + 1] if i + 1 < len(self.decoders) else self.encoders[5]
            expected = self.encoders[i].c_out + deeper.c_out
            if decoder.c_in != expected:
                raise ArchitectureError(
                    f"De{i + 1} takes {decoder.c_in} channels, expected {expected}"
                )

        for i, connect in enumerate(self.res):
            if connect.c_in != self.encoders[i].c_in or connect.c_out != self.encoders[i].c_out:
                raise ArchitectureError(f"res connection {i + 1} does not wrap En{i + 1}")

    @classmethod
    def for_arch(cls, arch: "str | Arch") -> Self:
        arch = Arch.parse(arch)
        encoders, decoders = _lite_table() if arch.is_lite else _full_table()

        res: Tuple[ResConnectSpec, ...] = ()
        if arch.is_res:
            res = tuple(ResConnectSpec(e.c_in, e.c_out) for e in encoders[:5])

        return cls(arch, encoders, decoders, res)

    @property
    def side_channels(self) -> Tuple[int, ...]:
        """
        Channels feeding side outputs 1..6: De1..De5 then En6.
        """

        return tuple(d.c_out for d in self.decoders) + (self.encoders[5].c_out,)
