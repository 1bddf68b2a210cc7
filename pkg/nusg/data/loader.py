from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Deque, Iterator, List, Optional, Sequence, Tuple
import logging
import os

import numpy as np

from .augment import AugmentPolicy, augment, sample_rng
from .dataset import SampleRecord, load_sample

logger = logging.getLogger(__name__)


def thread_limit() -> Optional[int]:
    """
    Worker cap from `NUSG_THREADS`, if set to a positive integer.
    """

    value = os.getenv("NUSG_THREADS")
    if value is None or value.strip() == "":
        return None
    try:
        limit = int(value)
    except ValueError:
        logger.warning(f"ignoring NUSG_THREADS={value!r}, not an integer")
        return None
    return limit if limit > 0 else None


@dataclass
class Batch:
    images: np.ndarray  # N×3×H×W
    masks: np.ndarray  # N×1×H×W
    indices: List[int]
    epoch: int


class BatchLoader(object):
    """
    Yields batches of loaded, optionally augmented samples.

    Each epoch visits the records in a permutation seeded by (seed, epoch);
    sample i of epoch e is augmented with a generator seeded by
    (seed, e, i), so batches do not depend on the number of workers.
    """

    records: List[SampleRecord]
    size: Tuple[int, int]
    batch_size: int
    seed: int
    policy: Optional[AugmentPolicy]
    shuffle: bool
    workers: int
    prefetch: int

    def __init__(
        self,
        records: Sequence[SampleRecord],
        size: Tuple[int, int],
        batch_size: int,
        *,
        seed: int = 0,
        policy: Optional[AugmentPolicy] = None,
        shuffle: bool = True,
        workers: int = 1,
    ):
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")

        self.records = list(records)
        self.size = size
        self.batch_size = batch_size
        self.seed = seed
        self.policy = policy
        self.shuffle = shuffle

        limit = thread_limit()
        self.workers = max(1, min(workers, limit) if limit else workers)
        self.prefetch = 2 * self.workers

    def __len__(self) -> int:
        return -(-len(self.records) // self.batch_size)

    def order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.records))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.records))

    def sample(self, index: int, epoch: int) -> Tuple[np.ndarray, np.ndarray]:
        image, mask = load_sample(self.records[index], self.size)
        if self.policy is not None:
            image, mask = augment(image, mask, self.policy, sample_rng(self.seed, epoch, int(index)))
        return image, mask

    def epoch(self, epoch: int) -> Iterator[Batch]:
        order = [int(i) for i in self.order(epoch)]
        chunks = [order[i : i + self.batch_size] for i in range(0, len(order), self.batch_size)]

        def load(indices: List[int]) -> Batch:
            pairs = [self.sample(i, epoch) for i in indices]
            images = np.stack([p[0] for p in pairs])
            masks = np.stack([p[1] for p in pairs])
            return Batch(images, masks, indices, epoch)

        if self.workers == 1:
            for chunk in chunks:
                yield load(chunk)
            return

        # at most `prefetch` batches are loading or loaded but not yet consumed
        pool = ThreadPoolExecutor(max_workers=self.workers)
        pending: Deque[Future[Batch]] = deque()
        upcoming = iter(chunks)
        try:
            for chunk in upcoming:
                pending.append(pool.submit(load, chunk))
                if len(pending) == self.prefetch:
                    break

            while pending:
                batch = pending.popleft().result()
                chunk = next(upcoming, None)
                if chunk is not None:
                    pending.append(pool.submit(load, chunk))
                yield batch
        finally:
            for future in pending:
                future.cancel()
            pool.shutdown(wait=True)

    def forever(self, start_epoch: int = 0) -> Iterator[Batch]:
        epoch = start_epoch
        while True:
            yield from self.epoch(epoch)
            epoch += 1
