from dataclasses import dataclass, field
from typing import Self
import numpy as np

from nusg.errors import ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    """
    Pixel counts of a binary segmentation against its ground truth.
    Matrices from disjoint image sets merge with `+`.
    """

    tp: int = field(default=0)
    fp: int = field(default=0)
    tn: int = field(default=0)
    fn: int = field(default=0)

    def __add__(self, other: Self) -> Self:
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def swapped(self) -> Self:
        """
        The same counts with background as the positive class.
        """

        return ConfusionMatrix(self.tn, self.fn, self.tp, self.fp)


@dataclass(frozen=True)
class Scores:
    recall: float
    precision: float
    f1: float


def binarize(pred_prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(pred_prob) >= threshold


def confusion(pred_prob: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> ConfusionMatrix:
    pred_prob = np.asarray(pred_prob)
    gt = np.asarray(gt)
    if pred_prob.shape != gt.shape:
        raise ShapeError(f"prediction {pred_prob.shape} and mask {gt.shape} differ in shape")

    pred = binarize(pred_prob, threshold)
    truth = gt >= 0.5

    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    tn = int(pred.size - tp - fp - fn)
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num: int, den: int) -> float:
    # Zero denominators score 0
    return num / den if den else 0.0


def metrics_from_confusion(cm: ConfusionMatrix) -> Scores:
    """
    Recall, precision and F1 as percentages.
    """

    recall = _ratio(cm.tp, cm.tp + cm.fn)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    f1 = _ratio(2 * precision * recall, precision + recall) if precision + recall else 0.0
    return Scores(recall * 100.0, precision * 100.0, f1 * 100.0)


def class_iou(cm: ConfusionMatrix) -> float:
    """
    IoU of the positive class; a class absent from both prediction and
    ground truth scores 1.
    """

    den = cm.tp + cm.fp + cm.fn
    return cm.tp / den if den else 1.0


def miou_from_confusion(cm: ConfusionMatrix) -> float:
    return (class_iou(cm) + class_iou(cm.swapped())) / 2.0 * 100.0


def miou(pred_prob: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> float:
    return miou_from_confusion(confusion(pred_prob, gt, threshold))


def mae(pred_prob: np.ndarray, gt: np.ndarray) -> float:
    """
    Mean absolute difference per image, averaged over the batch. Arrays
    without a batch axis count as one image.
    """

    pred_prob = np.asarray(pred_prob, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred_prob.shape != gt.shape:
        raise ShapeError(f"prediction {pred_prob.shape} and mask {gt.shape} differ in shape")

    if pred_prob.ndim <= 2:
        return float(np.abs(pred_prob - gt).mean())

    n = pred_prob.shape[0]
    per_image = np.abs(pred_prob - gt).reshape(n, -1).mean(axis=1)
    return float(per_image.mean())
