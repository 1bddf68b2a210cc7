from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Self, Tuple
import tomllib

from nusg.data import AugmentPolicy
from nusg.errors import NusgError
from nusg.metrics import FocalParams, LossKind
from nusg.model import INPUT_DIVISOR, Arch, ArchitectureError
from nusg.train.optim import AdamWParams
from nusg.train.schedule import Decay, Schedule


class ConfigError(NusgError):
    key: Optional[str]

    def __init__(self, key: Optional[str], *args):
        super().__init__(*args)
        self.key = key


_MISSING = object()


def _get(map: Dict[str, Any], key: str, default: Any, section: str) -> Any:
    data = map.get(key, default)
    if data is _MISSING:
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} is required")
    return data


def _qualified(section: str, key: str) -> str:
    return f"{section}.{key}" if section else key


def _get_str(map: Dict[str, Any], key: str, default: Any = _MISSING, section: str = "") -> str:
    data = _get(map, key, default, section)
    if not isinstance(data, str):
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} is invalid type {type(data)}")
    return data


def _get_int(map: Dict[str, Any], key: str, default: Any = _MISSING, section: str = "") -> int:
    data = _get(map, key, default, section)
    if isinstance(data, bool) or not isinstance(data, int):
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} is invalid type {type(data)}")
    return data


def _get_float(map: Dict[str, Any], key: str, default: Any = _MISSING, section: str = "") -> float:
    data = _get(map, key, default, section)
    if isinstance(data, bool) or not isinstance(data, int | float):
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} is invalid type {type(data)}")
    return float(data)


def _get_bool(map: Dict[str, Any], key: str, default: Any = _MISSING, section: str = "") -> bool:
    data = _get(map, key, default, section)
    if not isinstance(data, bool):
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} is invalid type {type(data)}")
    return data


def _get_range(map: Dict[str, Any], key: str, default: Tuple[float, float], section: str = "") -> Tuple[float, float]:
    data = map.get(key, list(default))
    if (
        not isinstance(data, list)
        or len(data) != 2
        or not all(isinstance(v, int | float) and not isinstance(v, bool) for v in data)
    ):
        raise ConfigError(_qualified(section, key), f"{_qualified(section, key)} must be a pair of numbers")
    return float(data[0]), float(data[1])


def _check_keys(map: Dict[str, Any], allowed: set[str], section: str = "") -> None:
    for key in map:
        if key not in allowed:
            raise ConfigError(_qualified(section, key), f"unknown config key {_qualified(section, key)}")


def _check(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(key, message)


def _section(map: Dict[str, Any], name: str) -> Dict[str, Any]:
    data = map.get(name, {})
    if not isinstance(data, dict):
        raise ConfigError(name, f"[{name}] must be a table")
    return data


@dataclass(kw_only=True)
class ScheduleConfig:
    base_lr: float = field(default=0.001)
    warmup_steps: Optional[int] = field(default=None)
    decay: Decay = field(default=Decay.COSINE)

    @classmethod
    def fromdict(cls, data: Dict[str, Any]) -> Self:
        section = "schedule"
        _check_keys(data, {"base_lr", "warmup_steps", "decay"}, section)

        base_lr = _get_float(data, "base_lr", 0.001, section)
        _check(base_lr > 0.0, "schedule.base_lr", "schedule.base_lr must be positive")

        warmup_steps = None
        if "warmup_steps" in data:
            warmup_steps = _get_int(data, "warmup_steps", section=section)
            _check(warmup_steps >= 0, "schedule.warmup_steps", "schedule.warmup_steps must be non-negative")

        decay = _get_str(data, "decay", "cosine", section)
        try:
            decay_kind = Decay(decay)
        except ValueError:
            raise ConfigError("schedule.decay", f"schedule.decay must be cosine or linear, got {decay!r}")

        return cls(base_lr=base_lr, warmup_steps=warmup_steps, decay=decay_kind)

    def build(self, total_steps: int) -> Schedule:
        warmup = self.warmup_steps
        if warmup is None:
            warmup = round(0.05 * total_steps)
        _check(warmup < total_steps, "schedule.warmup_steps", "schedule.warmup_steps must be below steps")
        return Schedule(
            base_lr=self.base_lr, warmup_steps=warmup, total_steps=total_steps, decay=self.decay
        )


def _optimizer_fromdict(data: Dict[str, Any]) -> AdamWParams:
    section = "optimizer"
    _check_keys(data, {"beta1", "beta2", "eps", "weight_decay"}, section)
    try:
        return AdamWParams(
            beta1=_get_float(data, "beta1", 0.9, section),
            beta2=_get_float(data, "beta2", 0.999, section),
            eps=_get_float(data, "eps", 1e-8, section),
            weight_decay=_get_float(data, "weight_decay", 0.01, section),
        )
    except ValueError as e:
        raise ConfigError(section, f"[{section}] {e}")


def _focal_fromdict(data: Dict[str, Any]) -> FocalParams:
    section = "focal"
    _check_keys(data, {"gamma", "alpha", "mu_ref", "lambda_max"}, section)

    params = FocalParams(
        gamma=_get_float(data, "gamma", 2.0, section),
        alpha=_get_float(data, "alpha", 0.25, section),
        mu_ref=_get_float(data, "mu_ref", 0.25, section),
        lambda_max=_get_float(data, "lambda_max", 3.0, section),
    )
    _check(params.gamma >= 0.0, "focal.gamma", "focal.gamma must be non-negative")
    _check(0.0 <= params.alpha <= 1.0, "focal.alpha", "focal.alpha must be in [0, 1]")
    _check(params.mu_ref > 0.0, "focal.mu_ref", "focal.mu_ref must be positive")
    _check(params.lambda_max >= 1.0, "focal.lambda_max", "focal.lambda_max must be at least 1")
    return params


def _augment_fromdict(data: Dict[str, Any]) -> AugmentPolicy:
    section = "augment"
    defaults = AugmentPolicy()
    flags = ("hflip", "vflip", "zoom", "rotate")
    probabilities = tuple(f"{name}_p" for name in flags)
    ranges = ("zoom_range", "rotate_range")
    _check_keys(data, set(flags) | set(probabilities) | set(ranges), section)

    kwargs: Dict[str, Any] = {}
    for key in flags:
        kwargs[key] = _get_bool(data, key, getattr(defaults, key), section)
    for key in probabilities:
        kwargs[key] = _get_float(data, key, getattr(defaults, key), section)
    for key in ranges:
        kwargs[key] = _get_range(data, key, getattr(defaults, key), section)

    try:
        return AugmentPolicy(**kwargs)
    except ValueError as e:
        raise ConfigError(section, f"[{section}] {e}")


_TOP_LEVEL = {
    "arch",
    "data_root",
    "input_size",
    "train_fraction",
    "seed",
    "batch_size",
    "steps",
    "checkpoint",
    "checkpoint_every",
    "log",
    "loss",
    "workers",
    "val_every",
    "schedule",
    "optimizer",
    "focal",
    "augment",
}


@dataclass(kw_only=True)
class RunConfig:
    """
    Everything a training run needs, validated up front.
    """

    arch: Arch
    data_root: Path
    input_size: int = field(default=320)
    train_fraction: float = field(default=0.8)
    seed: int = field(default=0)
    batch_size: int = field(default=8)
    steps: int
    checkpoint: Path
    checkpoint_every: int = field(default=100)
    log: Path
    loss: LossKind = field(default=LossKind.BCE)
    workers: int = field(default=1)
    val_every: int = field(default=0)

    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    optimizer: AdamWParams = field(default_factory=AdamWParams)
    focal: FocalParams = field(default_factory=FocalParams)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    @classmethod
    def fromdict(cls, data: Dict[str, Any], base: Optional[Path] = None) -> Self:
        """
        Relative paths resolve against `base` (the config file's directory).
        """

        _check_keys(data, _TOP_LEVEL)

        def path(key: str, default: Any = _MISSING) -> Path:
            value = Path(_get_str(data, key, default))
            return base / value if base is not None and not value.is_absolute() else value

        try:
            arch = Arch.parse(_get_str(data, "arch", "res-u2net"))
        except ArchitectureError as e:
            raise ConfigError("arch", str(e))

        loss = _get_str(data, "loss", "bce")
        try:
            loss_kind = LossKind(loss)
        except ValueError:
            raise ConfigError("loss", f"loss must be bce or focal, got {loss!r}")

        input_size = _get_int(data, "input_size", 320)
        _check(
            input_size % INPUT_DIVISOR == 0 and input_size >= 2 * INPUT_DIVISOR,
            "input_size",
            f"input_size must be a multiple of {INPUT_DIVISOR} and at least {2 * INPUT_DIVISOR}",
        )

        train_fraction = _get_float(data, "train_fraction", 0.8)
        _check(0.0 < train_fraction <= 1.0, "train_fraction", "train_fraction must be in (0, 1]")

        seed = _get_int(data, "seed", 0)
        _check(seed >= 0, "seed", "seed must be non-negative")

        steps = _get_int(data, "steps")
        _check(steps >= 1, "steps", "steps must be positive")

        for key, minimum in (("batch_size", 1), ("checkpoint_every", 1), ("workers", 1), ("val_every", 0)):
            value = _get_int(data, key, cls.__dataclass_fields__[key].default)
            _check(value >= minimum, key, f"{key} must be at least {minimum}")

        schedule = ScheduleConfig.fromdict(_section(data, "schedule"))
        schedule.build(steps)

        return cls(
            arch=arch,
            data_root=path("data_root"),
            input_size=input_size,
            train_fraction=train_fraction,
            seed=seed,
            batch_size=_get_int(data, "batch_size", 8),
            steps=steps,
            checkpoint=path("checkpoint", "checkpoints/model.nusg"),
            checkpoint_every=_get_int(data, "checkpoint_every", 100),
            log=path("log", "train_log.csv"),
            loss=loss_kind,
            workers=_get_int(data, "workers", 1),
            val_every=_get_int(data, "val_every", 0),
            schedule=schedule,
            optimizer=_optimizer_fromdict(_section(data, "optimizer")),
            focal=_focal_fromdict(_section(data, "focal")),
            augment=_augment_fromdict(_section(data, "augment")),
        )

    @property
    def size(self) -> Tuple[int, int]:
        return self.input_size, self.input_size

    def build_schedule(self) -> Schedule:
        return self.schedule.build(self.steps)


def load(file_name: str | Path) -> RunConfig:
    file_name = Path(file_name)
    try:
        with open(file_name, "rb") as file:
            config = tomllib.load(file)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(None, f"{file_name}: {e}")

    return RunConfig.fromdict(config, base=file_name.parent)
