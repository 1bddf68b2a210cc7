from abc import ABC, abstractmethod
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, Dict, Iterator, List, Optional, Self, Sequence, Tuple
import logging
import numpy as np

from nusg.errors import GradientError, ShapeError
from .precision import get_dtype

logger = logging.getLogger(__name__)


# Context-local; a new thread starts from the defaults
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)
_check_finite: ContextVar[bool] = ContextVar("check_finite", default=False)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disables graph recording. Used for inference and finite differences.
    """

    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@contextmanager
def check_finite() -> Iterator[None]:
    """
    Raises `GradientError` as soon as any op produces NaN or Inf.
    """

    token = _check_finite.set(True)
    try:
        yield
    finally:
        _check_finite.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """
    A dense array that participates in reverse-mode differentiation.

    Image data is laid out N×C×H×W. Leaves with `requires_grad` receive a
    `grad` buffer of identical shape when a loss depending on them is
    differentiated; gradients accumulate until `zero_grad` is called.
    """

    data: np.ndarray
    requires_grad: bool
    grad: Optional[np.ndarray]

    _ctx: Optional["Function"]

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        dtype: Optional[Any] = None,
        _ctx: Optional["Function"] = None,
    ):
        self.data = np.asarray(data, dtype=dtype or get_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self._ctx = _ctx

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> Self:
        return cls(np.zeros(shape, dtype=get_dtype()), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape: int, requires_grad: bool = False) -> Self:
        return cls(np.ones(shape, dtype=get_dtype()), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .ops import add

        return add(self, other)

    def __mul__(self, other: float) -> "Tensor":
        from .ops import scale

        return scale(self, other)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"


class Function(ABC):
    """
    A differentiable operation.

    `forward` receives the raw arrays of the tensor operands and may save
    whatever it needs on `self`; `backward` receives dL/d(output) and returns
    one gradient (or None) per tensor operand, in operand order.
    """

    inputs: Tuple[Tensor, ...]

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray: ...

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]: ...

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)

        if _check_finite.get() and not np.all(np.isfinite(out)):
            raise GradientError(f"{cls.__name__} produced non-finite values", name=cls.__name__)

        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if not requires_grad:
            # Nothing will call backward, drop saved arrays now
            return Tensor(out, dtype=out.dtype)

        return Tensor(out, requires_grad=True, dtype=out.dtype, _ctx=fn)


class Graph:
    """
    The executed operations reachable from a root tensor, in topological
    order (operands before the results computed from them).
    """

    nodes: List[Tensor]

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> Self:
        order: List[Tensor] = []
        visited = set()

        # Iterative post-order DFS, deep U-Nets overflow the recursion limit
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))

            stack.append((node, True))
            if node._ctx is not None:
                for operand in reversed(node._ctx.inputs):
                    if operand.requires_grad and id(operand) not in visited:
                        stack.append((operand, False))

        return cls(order)

    @property
    def leaves(self) -> List[Tensor]:
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> None:
    """
    Populates `grad` on every `requires_grad` leaf reachable from `loss`.

    Gradients accumulate: calling this twice without `zero_grad` on the
    leaves doubles them.
    """

    if loss.data.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("loss does not depend on any tensor requiring grad")

    graph = Graph.from_root(loss)
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue

        if node._ctx is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue

        grads = node._ctx.backward(grad)
        for operand, operand_grad in zip(node._ctx.inputs, grads):
            if operand_grad is None or not operand.requires_grad:
                continue
            if operand_grad.shape != operand.shape:
                raise ShapeError(
                    f"{type(node._ctx).__name__} returned gradient of shape "
                    f"{operand_grad.shape} for operand of shape {operand.shape}"
                )

            key = id(operand)
            if key in pending:
                pending[key] = pending[key] + operand_grad
            else:
                pending[key] = operand_grad


def reset_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.grad = None
