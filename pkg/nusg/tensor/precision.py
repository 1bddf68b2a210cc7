from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Type
import numpy as np


# Train and inference run in 32-bit. Gradient checks switch to 64-bit.
_dtype: ContextVar[Type[np.floating]] = ContextVar("dtype", default=np.float32)


def _checked(dtype: Type[np.floating]) -> Type[np.floating]:
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype}")
    return dtype


def get_dtype() -> Type[np.floating]:
    """
    The dtype new tensors and parameters are created with in the current
    thread.
    """

    return _dtype.get()


def set_dtype(dtype: Type[np.floating]) -> None:
    _dtype.set(_checked(dtype))


@contextmanager
def precision(dtype: Type[np.floating]) -> Iterator[None]:
    """
    Temporarily switches the default dtype.

    ```
    with precision(np.float64):
        model = build_model("u2net-lite", seed=0)
    ```
    """

    token = _dtype.set(_checked(dtype))
    try:
        yield
    finally:
        _dtype.reset(token)
