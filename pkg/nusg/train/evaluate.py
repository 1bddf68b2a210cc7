from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import logging

import cv2
import numpy as np

from nusg.data import (
    BatchLoader,
    DatasetError,
    SampleRecord,
    binarize_mask,
    read_mask,
    write_probability_png,
)
from nusg.metrics import (
    ConfusionMatrix,
    FocalParams,
    LossKind,
    MetricsReport,
    compute_loss,
    confusion,
    metrics_from_confusion,
    miou_from_confusion,
)
from nusg.model import U2Net, load_model
from nusg.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


THRESHOLD = 0.5


@dataclass(frozen=True)
class ImageScore:
    stem: str
    recall: float
    precision: float
    f1: float
    miou: float
    mae: float


@dataclass
class Evaluation:
    """
    A scored test set: the micro-averaged report row, the merged confusion
    matrix and the per-image scores behind the macro averages.
    """

    report: MetricsReport
    confusion: ConfusionMatrix
    images: List[ImageScore] = field(default_factory=list)

    def macro(self) -> ImageScore:
        """
        Per-image scores averaged with equal weight per image.
        """

        def avg(key: str) -> float:
            return float(np.mean([getattr(s, key) for s in self.images])) if self.images else 0.0

        return ImageScore(
            stem="macro",
            recall=avg("recall"),
            precision=avg("precision"),
            f1=avg("f1"),
            miou=avg("miou"),
            mae=avg("mae"),
        )


class _Accumulator(object):
    cm: ConfusionMatrix
    images: List[ImageScore]

    def __init__(self):
        self.cm = ConfusionMatrix()
        self.images = []

    def add(self, stem: str, prob: np.ndarray, gt: np.ndarray) -> None:
        cm = confusion(prob, gt, THRESHOLD)
        scores = metrics_from_confusion(cm)
        self.cm = self.cm + cm
        self.images.append(
            ImageScore(
                stem=stem,
                recall=scores.recall,
                precision=scores.precision,
                f1=scores.f1,
                miou=miou_from_confusion(cm),
                mae=float(np.abs(prob.astype(np.float64) - gt).mean()),
            )
        )

    def finish(self, name: str) -> Evaluation:
        if not self.images:
            raise DatasetError("nothing to evaluate")
        mae = float(np.mean([s.mae for s in self.images]))
        report = MetricsReport.from_confusion(name, self.cm, mae)
        logger.info(
            f"{name}: miou {report.miou:.2f} f1 {report.f1:.2f} mae {report.mae:.4f} "
            f"over {len(self.images)} images"
        )
        return Evaluation(report, self.cm, self.images)


def predict(model: U2Net, images: np.ndarray) -> np.ndarray:
    """
    Fused probability maps N×1×H×W for normalized N×3×H×W images, in eval
    mode without recording a graph.
    """

    was_training = model.training
    model.eval()
    try:
        with no_grad():
            return model(Tensor(images)).fused.data
    finally:
        model.train(was_training)


def evaluate(
    model: "U2Net | str | Path",
    records: Sequence[SampleRecord],
    size: Tuple[int, int] = (320, 320),
    *,
    name: Optional[str] = None,
    save_dir: Optional[str | Path] = None,
    batch_size: int = 1,
    workers: int = 1,
) -> Evaluation:
    """
    Scores the fused map of `model` (or of the checkpoint at that path) on
    `records`. With `save_dir` every probability map is also written there
    as `<stem>.png`.
    """

    if not isinstance(model, U2Net):
        model = load_model(model)
    name = name or model.arch.value

    loader = BatchLoader(records, size, batch_size, shuffle=False, workers=workers)
    acc = _Accumulator()
    for batch in loader.epoch(0):
        probs = predict(model, batch.images)
        for i, index in enumerate(batch.indices):
            stem = records[index].stem
            acc.add(stem, probs[i], batch.masks[i])
            if save_dir is not None:
                write_probability_png(Path(save_dir) / f"{stem}.png", probs[i, 0])

    return acc.finish(name)


def evaluate_predictions(
    pred_dir: str | Path,
    records: Sequence[SampleRecord],
    size: Optional[Tuple[int, int]] = None,
    *,
    name: str = "external",
) -> Evaluation:
    """
    Bypass mode: scores precomputed 8-bit prediction maps `<stem>.png` in
    `pred_dir` against the records' masks. Without `size` predictions are
    resized to each mask's own resolution.
    """

    pred_dir = Path(pred_dir)
    acc = _Accumulator()
    for record in records:
        pred_path = pred_dir / f"{record.stem}.png"
        if not pred_path.exists():
            raise DatasetError(f"no prediction for {record.stem} in {pred_dir}", path=pred_path)

        pred = read_mask(pred_path)
        mask = read_mask(record.mask_path)
        if size is not None:
            mask = cv2.resize(mask, (size[1], size[0]), interpolation=cv2.INTER_NEAREST)
        if pred.shape != mask.shape:
            pred = cv2.resize(pred, (mask.shape[1], mask.shape[0]), interpolation=cv2.INTER_LINEAR)

        prob = pred.astype(np.float64) / 255.0
        acc.add(record.stem, prob[None], binarize_mask(mask)[None])

    return acc.finish(name)


def validation_scores(
    model: U2Net,
    loader: BatchLoader,
    kind: LossKind,
    focal: FocalParams,
) -> Tuple[float, float]:
    """
    Mean loss and micro-averaged fused-map Miou over a held-out loader, in
    eval mode.
    """

    was_training = model.training
    model.eval()
    losses = []
    cm = ConfusionMatrix()
    try:
        with no_grad():
            for batch in loader.epoch(0):
                outputs = model(Tensor(batch.images))
                losses.append(compute_loss(kind, outputs, batch.masks, focal).item())
                cm = cm + confusion(outputs.fused.data, batch.masks, THRESHOLD)
    finally:
        model.train(was_training)

    return float(np.mean(losses)), miou_from_confusion(cm)
