from .optim import AdamWParams, OptimizerState, AdamW, adamw_step
from .schedule import Decay, Schedule, lr_at, trace
from .evaluate import (
    THRESHOLD,
    ImageScore,
    Evaluation,
    predict,
    evaluate,
    evaluate_predictions,
    validation_scores,
)
from .loop import (
    LOG_HEADER,
    VAL_HEADER,
    TrainingAborted,
    LogRecord,
    TrainResult,
    TrainLog,
    val_log_path,
    train,
)
from .bench import MIN_TIMED_RUNS, BenchResult, hardware_descriptor, bench_inference

__all__ = [
    "AdamWParams",
    "OptimizerState",
    "AdamW",
    "adamw_step",
    "Decay",
    "Schedule",
    "lr_at",
    "trace",
    "THRESHOLD",
    "ImageScore",
    "Evaluation",
    "predict",
    "evaluate",
    "evaluate_predictions",
    "validation_scores",
    "LOG_HEADER",
    "VAL_HEADER",
    "TrainingAborted",
    "LogRecord",
    "TrainResult",
    "TrainLog",
    "val_log_path",
    "train",
    "MIN_TIMED_RUNS",
    "BenchResult",
    "hardware_descriptor",
    "bench_inference",
]
