from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence
import csv
import logging
import math
import time

from tqdm import tqdm

from nusg.data import BatchLoader, SampleRecord, scan_dataset, split
from nusg.errors import NusgError
from nusg.metrics import compute_loss
from nusg.model import U2Net, build_model, save_checkpoint
from nusg.tensor import Tensor
from .evaluate import validation_scores
from .optim import AdamW
from .schedule import lr_at

if TYPE_CHECKING:
    from nusg.config import RunConfig

logger = logging.getLogger(__name__)


LOG_HEADER = ["step", "loss", "lr", "wall_ms"]
VAL_HEADER = ["step", "loss", "miou"]


class TrainingAborted(NusgError):
    """
    Training stopped on a non-finite loss. `checkpoint` is the last one
    written before the failure, if any.
    """

    step: int
    checkpoint: Optional[Path]

    def __init__(self, step: int, checkpoint: Optional[Path], *args):
        super().__init__(*args)
        self.step = step
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class LogRecord:
    step: int
    loss: float
    lr: float
    wall_ms: float


@dataclass
class TrainResult:
    model: U2Net
    checkpoint: Path
    log: Path
    records: List[LogRecord]
    train: List[SampleRecord]
    test: List[SampleRecord]


class TrainLog(object):
    """
    Per-step CSV record of a run, flushed every row so a crashed run keeps
    its curve.
    """

    path: Path
    records: List[LogRecord]

    def __init__(self, path: Path):
        self.path = path
        self.records = []
        path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(path, "w", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(LOG_HEADER)

    def write(self, record: LogRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(f"log steps must increase, got {record.step} after {self.records[-1].step}")
        self.records.append(record)
        self._writer.writerow(
            [record.step, f"{record.loss:.8g}", f"{record.lr:.8g}", f"{record.wall_ms:.3f}"]
        )
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def val_log_path(log: Path) -> Path:
    return log.with_suffix(".val.csv")


def train(
    config: "RunConfig",
    *,
    records: Optional[Sequence[SampleRecord]] = None,
    progress: bool = True,
) -> TrainResult:
    """
    Runs `config.steps` AdamW updates. Update t (1-based) uses lr_at(t).

    Checkpoints are written every `checkpoint_every` steps and after the
    last step. A non-finite loss raises `TrainingAborted` with the previous
    checkpoint left in place.
    """

    if records is None:
        manifest = config.log.with_suffix(".unmatched.txt")
        config.log.parent.mkdir(parents=True, exist_ok=True)
        records = scan_dataset(config.data_root, manifest)

    if config.train_fraction < 1.0:
        train_set, test_set = split(records, config.train_fraction, config.seed)
    else:
        train_set, test_set = list(records), []
    logger.info(f"training on {len(train_set)} samples, {len(test_set)} held out")

    model = build_model(config.arch, config.seed)
    model.train()
    optimizer = AdamW(model, config.optimizer)
    schedule = config.build_schedule()

    loader = BatchLoader(
        train_set,
        config.size,
        config.batch_size,
        seed=config.seed,
        policy=config.augment,
        workers=config.workers,
    )
    batches = loader.forever()

    val_loader = None
    val_file = None
    if config.val_every > 0 and test_set:
        val_loader = BatchLoader(test_set, config.size, config.batch_size, shuffle=False)
        val_file = open(val_log_path(config.log), "w", newline="")
        csv.writer(val_file).writerow(VAL_HEADER)

    log = TrainLog(config.log)
    last_checkpoint: Optional[Path] = None

    try:
        steps = tqdm(range(1, config.steps + 1), desc=config.arch.value, disable=not progress)
        for step in steps:
            started = time.perf_counter()
            lr = lr_at(step, schedule)

            batch = next(batches)
            outputs = model(Tensor(batch.images))
            loss = compute_loss(config.loss, outputs, batch.masks, config.focal)

            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"loss is {value} at step {step}, aborting")
                raise TrainingAborted(
                    step, last_checkpoint, f"non-finite loss at step {step}"
                )

            loss.backward()
            optimizer.step(lr)
            optimizer.zero_grad()

            wall_ms = (time.perf_counter() - started) * 1000.0
            log.write(LogRecord(step, value, lr, wall_ms))
            steps.set_postfix(loss=f"{value:.4f}", lr=f"{lr:.2e}")

            if step % config.checkpoint_every == 0 or step == config.steps:
                last_checkpoint = save_checkpoint(config.checkpoint, model)

            if val_loader is not None and step % config.val_every == 0:
                val_loss, val_miou = validation_scores(model, val_loader, config.loss, config.focal)
                csv.writer(val_file).writerow([step, f"{val_loss:.8g}", f"{val_miou:.6g}"])
                val_file.flush()
                logger.info(f"step {step}: validation loss {val_loss:.4f}, miou {val_miou:.2f}")
    finally:
        batches.close()
        log.close()
        if val_file is not None:
            val_file.close()

    return TrainResult(
        model=model,
        checkpoint=config.checkpoint,
        log=config.log,
        records=log.records,
        train=train_set,
        test=test_set,
    )
