from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import logging

import cv2
import numpy as np

from nusg.errors import NusgError

logger = logging.getLogger(__name__)


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MASK_SUFFIXES = (".png",)

# Per-channel RGB normalization, fixed so checkpoints stay portable
MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)

MASK_THRESHOLD = 128


class DatasetError(NusgError):
    path: Optional[Path]

    def __init__(self, *args, path: Optional[Path] = None):
        super().__init__(*args)
        self.path = path


@dataclass(frozen=True)
class SampleRecord:
    """
    An image and its segmentation mask, paired by file stem.
    """

    image_path: Path
    mask_path: Path

    @property
    def stem(self) -> str:
        return self.image_path.stem


def _by_stem(directory: Path, suffixes: Sequence[str]) -> dict[str, Path]:
    found = {}
    if not directory.is_dir():
        return found

    for path in sorted(directory.iterdir()):
        if not path.is_file() or path.suffix.lower() not in suffixes:
            continue
        if path.stem in found:
            logger.warning(f"duplicate stem {path.stem}, keeping {found[path.stem].name}")
            continue
        found[path.stem] = path
    return found


def scan_dataset(root: str | Path, manifest: Optional[str | Path] = None) -> List[SampleRecord]:
    """
    Pairs `root/images/*.{png,jpg,jpeg}` with `root/masks/*.png` by stem.

    Files without a partner are excluded and logged; with `manifest` their
    paths are also written there, one per line.
    """

    root = Path(root)
    images = _by_stem(root / "images", IMAGE_SUFFIXES)
    masks = _by_stem(root / "masks", MASK_SUFFIXES)

    records = []
    unmatched = []
    for stem in sorted(images.keys() | masks.keys()):
        image, mask = images.get(stem), masks.get(stem)
        if image is not None and mask is not None:
            records.append(SampleRecord(image, mask))
            continue

        path = image if image is not None else mask
        kind = "image" if image is not None else "mask"
        logger.warning(f"{kind} {path} has no partner, skipped")
        unmatched.append(path)

    if manifest is not None:
        with open(manifest, "w") as f:
            f.writelines(f"{path}\n" for path in unmatched)

    if not records:
        raise DatasetError(f"no image/mask pairs under {root}", path=root)

    logger.info(f"found {len(records)} samples under {root} ({len(unmatched)} unmatched)")
    return records


def split(
    records: Sequence[SampleRecord],
    train_fraction: float = 0.8,
    seed: int = 0,
) -> Tuple[List[SampleRecord], List[SampleRecord]]:
    """
    Seeded shuffle, then the first round(fraction * N) records train and
    the rest test. Both sides are kept non-empty.
    """

    n = len(records)
    if n < 2:
        raise DatasetError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")

    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(round(train_fraction * n), 1), n - 1)

    train = [records[i] for i in order[:n_train]]
    test = [records[i] for i in order[n_train:]]
    return train, test


def _read(path: Path, flags: int) -> np.ndarray:
    # imdecode reads non-ASCII paths that imread cannot
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}", path=path)

    image = cv2.imdecode(raw, flags) if raw.size else None
    if image is None:
        raise DatasetError(f"cannot decode {path}", path=path)
    return image


def read_image(path: str | Path) -> np.ndarray:
    """
    H×W×3 RGB uint8.
    """

    image = _read(Path(path), cv2.IMREAD_COLOR)
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def read_mask(path: str | Path) -> np.ndarray:
    return _read(Path(path), cv2.IMREAD_GRAYSCALE)


def normalize(image: np.ndarray) -> np.ndarray:
    """
    H×W×3 uint8 RGB to 3×H×W float32, channel-normalized.
    """

    x = image.astype(np.float32) / 255.0
    x = (x - np.asarray(MEAN, dtype=np.float32)) / np.asarray(STD, dtype=np.float32)
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def denormalize(x: np.ndarray) -> np.ndarray:
    """
    Inverse of `normalize`, back to H×W×3 in [0, 1].
    """

    image = x.transpose(1, 2, 0) * np.asarray(STD, dtype=x.dtype) + np.asarray(MEAN, dtype=x.dtype)
    return np.clip(image, 0.0, 1.0)


def binarize_mask(mask: np.ndarray) -> np.ndarray:
    return (mask >= MASK_THRESHOLD).astype(np.float32)


def load_sample(
    record: SampleRecord, size: Tuple[int, int] = (320, 320)
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns the image as 3×H×W normalized float32 and the mask as 1×H×W in
    {0, 1}. `size` is (H, W).
    """

    height, width = size
    image = read_image(record.image_path)
    mask = read_mask(record.mask_path)

    image = cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)
    mask = cv2.resize(mask, (width, height), interpolation=cv2.INTER_NEAREST)

    return normalize(image), binarize_mask(mask)[None]


def write_probability_png(path: str | Path, prob: np.ndarray, size: Optional[Tuple[int, int]] = None) -> Path:
    """
    Writes an H×W map in [0, 1] as an 8-bit grayscale PNG, optionally
    resized to `size` (H, W) first.
    """

    path = Path(path)
    prob = np.clip(np.asarray(prob, dtype=np.float32), 0.0, 1.0)
    if size is not None and prob.shape != tuple(size):
        prob = cv2.resize(prob, (size[1], size[0]), interpolation=cv2.INTER_LINEAR)

    ok, encoded = cv2.imencode(".png", np.rint(prob * 255.0).astype(np.uint8))
    if not ok:
        raise DatasetError(f"cannot encode {path}", path=path)

    path.parent.mkdir(parents=True, exist_ok=True)
    encoded.tofile(path)
    return path
