from pathlib import Path
from typing import Callable, Iterator, Tuple

import cv2
import numpy as np
import pytest

from nusg.tensor import Function, Tensor, precision, reduce_sum


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def float64() -> Iterator[None]:
    """
    Runs the test with 64-bit tensors, as gradient checks need.
    """

    with precision(np.float64):
        yield


def write_png(path: Path, array: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    ok, encoded = cv2.imencode(path.suffix, array)
    assert ok
    encoded.tofile(path)
    return path


def eye_sample(rng: np.random.Generator, size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    A dark noisy BGR image with one bright ellipse, and the ellipse as a
    0/255 mask.
    """

    h, w = size
    image = rng.integers(0, 60, (h, w, 3), dtype=np.uint8)
    mask = np.zeros((h, w), dtype=np.uint8)

    center = (int(rng.integers(w // 3, 2 * w // 3)), int(rng.integers(h // 3, 2 * h // 3)))
    axes = (int(rng.integers(w // 6, w // 4)), int(rng.integers(h // 8, h // 5)))
    cv2.ellipse(mask, center, axes, 0, 0, 360, 255, -1)

    image[mask > 0] = (200, 180, 220)
    return image, mask


type DatasetFactory = Callable[..., Path]


@pytest.fixture
def make_dataset(tmp_path: Path) -> DatasetFactory:
    """
    Writes `count` synthetic image/mask pairs under `tmp_path/<name>`.
    """

    def make(count: int = 4, size: Tuple[int, int] = (96, 96), *, seed: int = 0, name: str = "data") -> Path:
        root = tmp_path / name
        gen = np.random.default_rng(seed)
        for i in range(count):
            image, mask = eye_sample(gen, size)
            write_png(root / "images" / f"eye{i:03d}.png", image)
            write_png(root / "masks" / f"eye{i:03d}.png", mask)
        return root

    return make


class _Doubled(Function):
    # Forward doubles, backward claims identity
    def forward(self, x):
        return 2.0 * x

    def backward(self, grad):
        return (grad,)


def broken_case(rng: np.random.Generator):
    """
    A gradient-check case whose backward is wrong by a factor of two.
    """

    x = Tensor(rng.standard_normal((2, 3)), requires_grad=True, dtype=np.float64)
    return (lambda x: reduce_sum(_Doubled.apply(x))), [x]
