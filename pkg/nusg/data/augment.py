from dataclasses import dataclass, field
from typing import Self, Tuple

import cv2
import numpy as np


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """
    The generator for one sample in one epoch; independent of worker.
    """

    return np.random.default_rng([seed, epoch, index])


@dataclass(kw_only=True, frozen=True)
class AugmentPolicy:
    """
    Online augmentation: mirror, vertical flip, zoom-in and rotation, each
    applied with its own probability.
    """

    hflip: bool = field(default=True)
    hflip_p: float = field(default=0.5)
    vflip: bool = field(default=True)
    vflip_p: float = field(default=0.5)
    zoom: bool = field(default=True)
    zoom_p: float = field(default=0.5)
    zoom_range: Tuple[float, float] = field(default=(1.0, 1.3))
    rotate: bool = field(default=True)
    rotate_p: float = field(default=0.5)
    rotate_range: Tuple[float, float] = field(default=(-15.0, 15.0))

    def __post_init__(self):
        for name in ("hflip_p", "vflip_p", "zoom_p", "rotate_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")

        low, high = self.zoom_range
        if low < 1.0 or high < low:
            raise ValueError(f"zoom_range must satisfy 1 <= low <= high, got {self.zoom_range}")
        if self.rotate_range[1] < self.rotate_range[0]:
            raise ValueError(f"rotate_range is reversed: {self.rotate_range}")

    @classmethod
    def disabled(cls) -> Self:
        return cls(hflip=False, vflip=False, zoom=False, rotate=False)


@dataclass(frozen=True)
class _Draw:
    hflip: bool
    vflip: bool
    scale: float
    angle: float


def _draw(policy: AugmentPolicy, rng: np.random.Generator) -> _Draw:
    # Every draw is made regardless of the policy so the stream stays aligned
    u_h, u_v, u_z, u_r = rng.random(4)
    scale = rng.uniform(*policy.zoom_range)
    angle = rng.uniform(*policy.rotate_range)

    return _Draw(
        hflip=policy.hflip and u_h < policy.hflip_p,
        vflip=policy.vflip and u_v < policy.vflip_p,
        scale=scale if policy.zoom and u_z < policy.zoom_p else 1.0,
        angle=angle if policy.rotate and u_r < policy.rotate_p else 0.0,
    )


def _warp(image: np.ndarray, mask: np.ndarray, scale: float, angle: float) -> Tuple[np.ndarray, np.ndarray]:
    _, h, w = image.shape
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    matrix = cv2.getRotationMatrix2D(center, angle, scale)

    hwc = np.ascontiguousarray(image.transpose(1, 2, 0))
    warped = cv2.warpAffine(
        hwc, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE
    )
    if warped.ndim == 2:
        warped = warped[:, :, None]

    warped_mask = cv2.warpAffine(
        np.ascontiguousarray(mask[0]),
        matrix,
        (w, h),
        flags=cv2.INTER_NEAREST,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=0,
    )

    return warped.transpose(2, 0, 1), warped_mask[None]


def augment(
    image: np.ndarray,
    mask: np.ndarray,
    policy: AugmentPolicy,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Applies the policy to a C×H×W image and its 1×H×W mask with the same
    geometry. The image is resampled bilinearly and clamped to its own
    value range, the mask by nearest neighbour and re-binarized. Shapes
    never change.
    """

    draw = _draw(policy, rng)

    low = image.min(axis=(1, 2), keepdims=True)
    high = image.max(axis=(1, 2), keepdims=True)

    if draw.hflip:
        image, mask = image[:, :, ::-1], mask[:, :, ::-1]
    if draw.vflip:
        image, mask = image[:, ::-1, :], mask[:, ::-1, :]

    if draw.scale != 1.0 or draw.angle != 0.0:
        image, mask = _warp(image, mask, draw.scale, draw.angle)
        image = np.clip(image, low, high)

    image = np.ascontiguousarray(image, dtype=np.float32)
    mask = (np.ascontiguousarray(mask) >= 0.5).astype(np.float32)
    return image, mask
