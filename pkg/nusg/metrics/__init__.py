from .loss import (
    CLAMP,
    LossError,
    LossKind,
    FocalParams,
    bce,
    focal,
    image_weights,
    deep_supervision_loss,
    weighted_focal_loss,
    compute_loss,
)
from .confusion import (
    ConfusionMatrix,
    Scores,
    binarize,
    confusion,
    metrics_from_confusion,
    class_iou,
    miou_from_confusion,
    miou,
    mae,
)
from .report import (
    CSV_HEADER,
    CONVENTIONS,
    MetricsReport,
    ReportError,
    write_csv,
    read_csv,
    write_json,
    write_report,
    compare,
)
from .store import ResultStore

__all__ = [
    "CLAMP",
    "LossError",
    "LossKind",
    "FocalParams",
    "bce",
    "focal",
    "image_weights",
    "deep_supervision_loss",
    "weighted_focal_loss",
    "compute_loss",
    "ConfusionMatrix",
    "Scores",
    "binarize",
    "confusion",
    "metrics_from_confusion",
    "class_iou",
    "miou_from_confusion",
    "miou",
    "mae",
    "CSV_HEADER",
    "CONVENTIONS",
    "MetricsReport",
    "ReportError",
    "write_csv",
    "read_csv",
    "write_json",
    "write_report",
    "compare",
    "ResultStore",
]
