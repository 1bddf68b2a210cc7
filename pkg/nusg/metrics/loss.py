from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Optional
import numpy as np

from nusg.errors import NusgError, ShapeError
from nusg.model import SideOutputs
from nusg.tensor import Function, Tensor

CLAMP = 1e-7


class LossError(NusgError):
    def __init__(self, *args):
        super().__init__(*args)


@unique
class LossKind(Enum):
    BCE = "bce"
    FOCAL = "focal"


@dataclass(kw_only=True, frozen=True)
class FocalParams:
    gamma: float = field(default=2.0)
    alpha: float = field(default=0.25)
    lambda_max: float = field(default=3.0)
    mu_ref: float = field(default=0.25)


def check_mask(pred: Tensor, gt: np.ndarray) -> np.ndarray:
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and mask {gt.shape} differ in shape")
    if not np.all((gt == 0) | (gt == 1)):
        raise LossError("mask values must be 0 or 1")
    return gt.astype(pred.dtype, copy=False)


def _clamped(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    clipped = np.clip(p, CLAMP, 1.0 - CLAMP)
    inside = (p >= CLAMP) & (p <= 1.0 - CLAMP)
    return clipped, inside


class BinaryCrossEntropy(Function):
    def forward(self, p, *, gt: np.ndarray):
        q, self.inside = _clamped(p)
        self.q = q
        self.gt = gt

        loss = -(gt * np.log(q) + (1.0 - gt) * np.log(1.0 - q))
        return np.asarray(loss.mean(), dtype=p.dtype)

    def backward(self, grad):
        q, gt = self.q, self.gt
        d = (q - gt) / (q * (1.0 - q)) / q.size
        d = np.where(self.inside, d, 0.0)
        return ((grad * d).astype(q.dtype),)


def bce(pred: Tensor, gt: np.ndarray) -> Tensor:
    """
    Mean binary cross-entropy of a probability map against a {0, 1} mask.
    The prediction is clamped to [1e-7, 1 - 1e-7]; clamped pixels receive
    no gradient.
    """

    return BinaryCrossEntropy.apply(pred, gt=check_mask(pred, gt))


class FocalTerm(Function):
    def forward(self, p, *, gt: np.ndarray, weight: np.ndarray, gamma: float, alpha: float):
        q, self.inside = _clamped(p)
        positive = gt == 1

        pt = np.where(positive, q, 1.0 - q)
        at = np.where(positive, alpha, 1.0 - alpha)

        self.pt = pt
        self.sign = np.where(positive, 1.0, -1.0)
        self.scale = at * weight
        self.gamma = gamma

        loss = -self.scale * (1.0 - pt) ** gamma * np.log(pt)
        return np.asarray(loss.mean(), dtype=p.dtype)

    def backward(self, grad):
        pt, gamma = self.pt, self.gamma
        # d/dpt of -(1-pt)^g log pt
        d = gamma * (1.0 - pt) ** (gamma - 1.0) * np.log(pt) - (1.0 - pt) ** gamma / pt
        d = d * self.scale * self.sign / pt.size
        d = np.where(self.inside, d, 0.0)
        return ((grad * d).astype(pt.dtype),)


def image_weights(gt: np.ndarray, params: FocalParams) -> np.ndarray:
    """
    Per-image weight λ = clamp(mu_ref / μ, 1, lambda_max), μ being the
    foreground fraction. Small targets are up-weighted; an empty mask gets
    the maximum weight.
    """

    n = gt.shape[0]
    mu = gt.reshape(n, -1).mean(axis=1)
    ratio = params.mu_ref / np.maximum(mu, np.finfo(np.float64).tiny)
    return np.clip(ratio, 1.0, params.lambda_max)


def focal(
    pred: Tensor,
    gt: np.ndarray,
    params: FocalParams,
    lambdas: Optional[np.ndarray] = None,
) -> Tensor:
    gt = check_mask(pred, gt)
    if lambdas is None:
        lambdas = image_weights(gt, params)

    weight = np.broadcast_to(
        np.asarray(lambdas, dtype=pred.dtype).reshape((-1,) + (1,) * (gt.ndim - 1)), gt.shape
    )
    return FocalTerm.apply(pred, gt=gt, weight=weight, gamma=params.gamma, alpha=params.alpha)


def deep_supervision_loss(outputs: SideOutputs, gt: np.ndarray) -> Tensor:
    """
    Sum of BCE over the six side maps and the fused map, unit weights.
    """

    total = None
    for m in outputs.maps():
        term = bce(m, gt)
        total = term if total is None else total + term
    return total


def weighted_focal_loss(
    outputs: SideOutputs,
    gt: np.ndarray,
    params: FocalParams = FocalParams(),
    *,
    fixed_weight: Optional[float] = None,
) -> Tensor:
    """
    Focal loss summed over the seven maps, each image scaled by its
    foreground-fraction weight. `fixed_weight` overrides the per-image
    weights with a constant.
    """

    lambdas = None
    if fixed_weight is not None:
        lambdas = np.full((np.asarray(gt).shape[0],), fixed_weight)

    total = None
    for m in outputs.maps():
        term = focal(m, gt, params, lambdas)
        total = term if total is None else total + term
    return total


def compute_loss(
    kind: LossKind,
    outputs: SideOutputs,
    gt: np.ndarray,
    params: FocalParams = FocalParams(),
) -> Tensor:
    if kind == LossKind.FOCAL:
        return weighted_focal_loss(outputs, gt, params)
    return deep_supervision_loss(outputs, gt)
