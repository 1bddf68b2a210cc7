from typing import Any, Dict, Iterator, List, Tuple
import numpy as np

from nusg.errors import NusgError
from nusg.tensor import Tensor


class StateMismatchError(NusgError):
    """
    A state dict does not line up with the module it is loaded into.
    """

    name: str

    def __init__(self, name: str, *args):
        super().__init__(*args)
        self.name = name


class Parameter(Tensor):
    """
    A learnable leaf tensor owned by a module.
    """

    def __init__(self, data: Any):
        super().__init__(data, requires_grad=True)


class Module:
    """
    A node of the model tree.

    Parameters, buffers and child modules assigned as attributes are
    registered in assignment order, which fixes the enumeration order and the
    dotted names (`en1.rebnconvin.conv.weight`).
    """

    training: bool

    _parameters: Dict[str, Parameter]
    _buffers: Dict[str, np.ndarray]
    _modules: Dict[str, "Module"]

    def __init__(self):
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args: Any) -> Any:
        raise NotImplementedError(f"{type(self).__name__} has no forward")

    def __call__(self, *args: Any) -> Any:
        return self.forward(*args)

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for module_name, module in self.named_modules(prefix):
            for name, param in module._parameters.items():
                yield (f"{module_name}.{name}" if module_name else name), param

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for module_name, module in self.named_modules(prefix):
            for name, buf in module._buffers.items():
                yield (f"{module_name}.{name}" if module_name else name), buf

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def reset_parameters(self, rng: np.random.Generator) -> None:
        """
        Initializes this module's own parameters. Children are reset
        separately by the caller.
        """

        pass

    def state_dict(self) -> Dict[str, np.ndarray]:
        """
        Parameters followed by buffers, in enumeration order.
        """

        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Copies `state` into this module.

        Raises `StateMismatchError` naming the first tensor that is missing,
        unexpected, or of the wrong shape; nothing is modified in that case.
        """

        expected = self.state_dict()
        for name, value in expected.items():
            if name not in state:
                raise StateMismatchError(name, f"missing tensor {name}")
            if state[name].shape != value.shape:
                raise StateMismatchError(
                    name,
                    f"tensor {name} has shape {state[name].shape}, expected {value.shape}",
                )
        for name in state:
            if name not in expected:
                raise StateMismatchError(name, f"unexpected tensor {name}")

        params = dict(self.named_parameters())
        for name, value in state.items():
            if name in params:
                params[name].data = np.array(value, dtype=params[name].dtype)

        for module_name, module in self.named_modules():
            for buf_name in list(module._buffers):
                full = f"{module_name}.{buf_name}" if module_name else buf_name
                current = module._buffers[buf_name]
                setattr(module, buf_name, np.array(state[full], dtype=current.dtype))

