from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import numpy as np

from nusg.errors import GradientError
from nusg.nn import Module, Parameter


@dataclass(kw_only=True, frozen=True)
class AdamWParams:
    beta1: float = field(default=0.9)
    beta2: float = field(default=0.999)
    eps: float = field(default=1e-8)
    weight_decay: float = field(default=0.01)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


@dataclass
class OptimizerState:
    """
    First and second moments per parameter and the shared step counter.
    """

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = field(default=0)

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adamw_step(
    params: Sequence[np.ndarray],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimizerState,
    lr: float,
    hyper: AdamWParams = AdamWParams(),
    *,
    names: Optional[Sequence[str]] = None,
) -> None:
    """
    One AdamW update, in place on `params` and `state`.

    Weight decay is decoupled: θ ← θ − lr·m̂/(√v̂ + eps) − lr·wd·θ, both
    terms computed from the pre-step θ. Parameters without a gradient are
    left alone. A non-finite gradient aborts the step before anything is
    modified.
    """

    for i, g in enumerate(grads):
        if g is not None and not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"#{i}"
            raise GradientError(f"non-finite gradient for {name}", name=name)

    state.t += 1
    t = state.t
    b1, b2 = hyper.beta1, hyper.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t

    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue

        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g

        m_hat = m / correction1
        v_hat = v / correction2

        step = lr * m_hat / (np.sqrt(v_hat) + hyper.eps) + lr * hyper.weight_decay * p
        p -= step.astype(p.dtype, copy=False)


class AdamW(object):
    """
    AdamW over a module's parameters, in enumeration order.
    """

    names: List[str]
    params: List[Parameter]
    hyper: AdamWParams
    state: OptimizerState

    def __init__(self, model: Module, hyper: AdamWParams = AdamWParams()):
        named: List[Tuple[str, Parameter]] = list(model.named_parameters())
        self.names = [name for name, _ in named]
        self.params = [p for _, p in named]
        self.hyper = hyper
        self.state = OptimizerState.zeros_like([p.data for p in self.params])

    def step(self, lr: float) -> None:
        adamw_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            lr,
            self.hyper,
            names=self.names,
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

