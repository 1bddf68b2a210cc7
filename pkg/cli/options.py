from nusg.model import INPUT_DIVISOR, MIN_INPUT_SIZE, Arch, ArchitectureError
from cli.app import UsageError


def check_size(size: int) -> None:
    if size % INPUT_DIVISOR != 0 or size < MIN_INPUT_SIZE:
        raise UsageError(
            f"--size must be a multiple of {INPUT_DIVISOR} and at least {MIN_INPUT_SIZE}, got {size}"
        )


def parse_arch(name: str) -> Arch:
    try:
        return Arch.parse(name)
    except ArchitectureError as e:
        raise UsageError(str(e))
