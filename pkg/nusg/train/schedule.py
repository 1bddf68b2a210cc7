from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Iterator, Tuple
import math


@unique
class Decay(Enum):
    COSINE = "cosine"
    LINEAR = "linear"


@dataclass(kw_only=True, frozen=True)
class Schedule:
    """
    Linear warmup from 0 to `base_lr` over `warmup_steps`, then decay to 0
    at `total_steps`.
    """

    base_lr: float = field(default=0.001)
    warmup_steps: int
    total_steps: int
    decay: Decay = field(default=Decay.COSINE)

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError(
                f"need 0 <= warmup_steps < total_steps, got {self.warmup_steps} and {self.total_steps}"
            )
        if self.base_lr <= 0.0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")


def lr_at(step: int, schedule: Schedule) -> float:
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")

    w, t = schedule.warmup_steps, schedule.total_steps
    if step >= t:
        return 0.0
    if step < w:
        return schedule.base_lr * step / w

    progress = (step - w) / (t - w)
    if schedule.decay == Decay.LINEAR:
        return schedule.base_lr * (1.0 - progress)
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def trace(schedule: Schedule) -> Iterator[Tuple[int, float]]:
    """
    (step, lr) for every step 0..total_steps.
    """

    for step in range(schedule.total_steps + 1):
        yield step, lr_at(step, schedule)
