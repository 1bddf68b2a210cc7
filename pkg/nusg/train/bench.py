from dataclasses import dataclass
from typing import List, Tuple
import logging
import os
import platform
import statistics
import time

import numpy as np

from nusg.model import U2Net
from nusg.tensor import Tensor, get_dtype, no_grad

logger = logging.getLogger(__name__)


MIN_TIMED_RUNS = 5


@dataclass(frozen=True)
class BenchResult:
    seconds: float  # median, per image
    runs: List[float]
    hardware: str


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine() or "unknown cpu"
    return (
        f"{cpu}, {os.cpu_count()} logical cores, {platform.system()} {platform.release()}, "
        f"python {platform.python_version()}, numpy {np.__version__}"
    )


def bench_inference(
    model: U2Net,
    input_shape: Tuple[int, int, int, int] = (1, 3, 320, 320),
    warmup_runs: int = 3,
    timed_runs: int = 20,
    *,
    seed: int = 0,
) -> BenchResult:
    """
    Median wall time of single-image eval-mode forward passes.
    """

    if timed_runs < 1 or warmup_runs < 0:
        raise ValueError(f"need timed_runs >= 1 and warmup_runs >= 0, got {timed_runs}, {warmup_runs}")
    if input_shape[0] != 1:
        raise ValueError(f"benchmark runs a single image, got batch {input_shape[0]}")

    x = Tensor(np.random.default_rng(seed).standard_normal(input_shape).astype(get_dtype()))

    was_training = model.training
    model.eval()
    runs = []
    try:
        with no_grad():
            for _ in range(warmup_runs):
                model(x)
            for _ in range(timed_runs):
                started = time.perf_counter()
                model(x)
                runs.append(time.perf_counter() - started)
    finally:
        model.train(was_training)

    result = BenchResult(statistics.median(runs), runs, hardware_descriptor())
    logger.info(f"{model.arch.value}: {result.seconds:.4f} s/image on {result.hardware}")
    return result
