import time
from pathlib import Path

import numpy as np
import pytest

from nusg.data import (
    AugmentPolicy,
    BatchLoader,
    DatasetError,
    SampleRecord,
    augment,
    binarize_mask,
    denormalize,
    load_sample,
    normalize,
    read_image,
    read_mask,
    sample_rng,
    scan_dataset,
    split,
    thread_limit,
    write_probability_png,
)

from .conftest import eye_sample, write_png


def _records(n: int) -> list[SampleRecord]:
    return [SampleRecord(Path(f"images/{i:04d}.png"), Path(f"masks/{i:04d}.png")) for i in range(n)]


class TestScan:
    def test_pairs_by_stem(self, make_dataset):
        root = make_dataset(3)
        records = scan_dataset(root)
        assert [r.stem for r in records] == ["eye000", "eye001", "eye002"]
        assert all(r.mask_path.parent.name == "masks" for r in records)

    def test_unmatched_go_to_manifest(self, make_dataset, rng, tmp_path):
        root = make_dataset(2)
        image, mask = eye_sample(rng, (32, 32))
        write_png(root / "images" / "lonely.jpg", image)
        write_png(root / "masks" / "orphan.png", mask)
        (root / "images" / "notes.txt").write_text("not an image")

        manifest = tmp_path / "unmatched.txt"
        records = scan_dataset(root, manifest)

        assert len(records) == 2
        listed = sorted(Path(line).name for line in manifest.read_text().splitlines())
        assert listed == ["lonely.jpg", "orphan.png"]

    def test_empty_root(self, tmp_path):
        with pytest.raises(DatasetError) as e:
            scan_dataset(tmp_path)
        assert e.value.path == tmp_path


class TestSplit:
    def test_eighty_twenty(self):
        train, test = split(_records(1205), 0.8, seed=0)
        assert (len(train), len(test)) == (964, 241)
        assert set(train).isdisjoint(test)
        assert set(train) | set(test) == set(_records(1205))

    def test_deterministic(self):
        records = _records(50)
        assert split(records, 0.8, seed=3) == split(records, 0.8, seed=3)
        assert split(records, 0.8, seed=3)[0] != split(records, 0.8, seed=4)[0]

    def test_both_sides_non_empty(self):
        train, test = split(_records(2), 0.99)
        assert len(train) == len(test) == 1

    def test_too_few(self):
        with pytest.raises(DatasetError):
            split(_records(1))

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(ValueError):
            split(_records(10), fraction)


class TestSample:
    def test_mask_threshold(self):
        mask = np.array([[0, 127], [128, 255]], dtype=np.uint8)
        np.testing.assert_array_equal(binarize_mask(mask), [[0, 0], [1, 1]])

    def test_resizes_to_model_input(self, rng, tmp_path):
        image, mask = eye_sample(rng, (600, 800))
        record = SampleRecord(
            write_png(tmp_path / "images" / "a.png", image),
            write_png(tmp_path / "masks" / "a.png", mask),
        )

        x, y = load_sample(record, (320, 320))
        assert x.shape == (3, 320, 320) and x.dtype == np.float32
        assert y.shape == (1, 320, 320)
        assert set(np.unique(y)) <= {0.0, 1.0}
        assert 0 < y.mean() < 1

    def test_reads_rgb(self, tmp_path):
        bgr = np.zeros((4, 4, 3), dtype=np.uint8)
        bgr[..., 0] = 255
        rgb = read_image(write_png(tmp_path / "blue.png", bgr))
        assert rgb[0, 0].tolist() == [0, 0, 255]

    def test_unreadable(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"not a png")
        with pytest.raises(DatasetError) as e:
            read_image(path)
        assert e.value.path == path

    def test_normalize_inverse(self, rng):
        image = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        x = normalize(image)
        assert x.shape == (3, 5, 7)
        np.testing.assert_allclose(denormalize(x) * 255.0, image, atol=1e-3)

    def test_probability_png(self, tmp_path):
        prob = np.array([[0.0, 1.0], [0.5, 1.5]])
        path = write_probability_png(tmp_path / "out" / "p.png", prob, (4, 6))

        mask = read_mask(path)
        assert mask.shape == (4, 6)
        assert mask.dtype == np.uint8
        assert mask.max() == 255


def _pair(rng, size=32):
    image, mask = eye_sample(rng, (size, size))
    return normalize(image[..., ::-1]), binarize_mask(mask)[None]


class TestAugment:
    def test_disabled_is_identity(self, rng):
        image, mask = _pair(rng)
        out_image, out_mask = augment(image, mask, AugmentPolicy.disabled(), sample_rng(0, 0, 0))
        np.testing.assert_array_equal(out_image, image)
        np.testing.assert_array_equal(out_mask, mask)

    def test_mirror(self, rng):
        image, mask = _pair(rng)
        policy = AugmentPolicy(hflip_p=1.0, vflip=False, zoom=False, rotate=False)

        once = augment(image, mask, policy, sample_rng(0, 0, 0))
        np.testing.assert_array_equal(once[0], image[:, :, ::-1])
        np.testing.assert_array_equal(once[1], mask[:, :, ::-1])

        twice = augment(*once, policy, sample_rng(0, 0, 1))
        np.testing.assert_array_equal(twice[0], image)
        np.testing.assert_array_equal(twice[1], mask)

    def test_vertical_flip(self, rng):
        image, mask = _pair(rng)
        policy = AugmentPolicy(hflip=False, vflip_p=1.0, zoom=False, rotate=False)
        out_image, out_mask = augment(image, mask, policy, sample_rng(0, 0, 0))
        np.testing.assert_array_equal(out_image, image[:, ::-1, :])
        np.testing.assert_array_equal(out_mask, mask[:, ::-1, :])

    def test_zoom_and_rotate_keep_contract(self, rng):
        image, mask = _pair(rng)
        policy = AugmentPolicy(hflip=False, vflip=False, zoom_p=1.0, zoom_range=(1.2, 1.3), rotate_p=1.0)

        out_image, out_mask = augment(image, mask, policy, sample_rng(0, 0, 0))
        assert out_image.shape == image.shape and out_image.dtype == np.float32
        assert out_mask.shape == mask.shape
        assert set(np.unique(out_mask)) <= {0.0, 1.0}
        assert np.all(out_image >= image.min(axis=(1, 2), keepdims=True))
        assert np.all(out_image <= image.max(axis=(1, 2), keepdims=True))
        assert not np.array_equal(out_image, image)

    def test_same_seed_same_result(self, rng):
        image, mask = _pair(rng)
        a = augment(image, mask, AugmentPolicy(), sample_rng(5, 2, 9))
        b = augment(image, mask, AugmentPolicy(), sample_rng(5, 2, 9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            AugmentPolicy(hflip_p=1.5)
        with pytest.raises(ValueError):
            AugmentPolicy(zoom_range=(0.8, 1.2))


class TestLoader:
    def test_batches(self, make_dataset):
        records = scan_dataset(make_dataset(5, (64, 64)))
        loader = BatchLoader(records, (64, 64), 2, seed=1)

        batches = list(loader.epoch(0))
        assert len(loader) == len(batches) == 3
        assert [len(b.indices) for b in batches] == [2, 2, 1]
        assert batches[0].images.shape == (2, 3, 64, 64)
        assert batches[0].masks.shape == (2, 1, 64, 64)
        assert sorted(i for b in batches for i in b.indices) == list(range(5))

    def test_independent_of_workers(self, make_dataset, monkeypatch):
        monkeypatch.delenv("NUSG_THREADS", raising=False)
        records = scan_dataset(make_dataset(6, (64, 64)))

        serial = BatchLoader(records, (64, 64), 2, seed=3, policy=AugmentPolicy(), workers=1)
        pooled = BatchLoader(records, (64, 64), 2, seed=3, policy=AugmentPolicy(), workers=3)
        assert pooled.workers == 3

        for a, b in zip(serial.epoch(1), pooled.epoch(1), strict=True):
            assert a.indices == b.indices
            np.testing.assert_array_equal(a.images, b.images)
            np.testing.assert_array_equal(a.masks, b.masks)

    def test_prefetch_is_bounded(self, make_dataset, monkeypatch):
        monkeypatch.delenv("NUSG_THREADS", raising=False)
        records = scan_dataset(make_dataset(12, (64, 64)))
        loader = BatchLoader(records, (64, 64), 1, shuffle=False, workers=2)
        assert loader.prefetch == 4

        loaded = []
        sample = loader.sample

        def counted(index, epoch):
            loaded.append(index)
            return sample(index, epoch)

        monkeypatch.setattr(loader, "sample", counted)

        batches = loader.epoch(0)
        consumed = 0
        for _ in range(3):
            next(batches)
            consumed += 1
            time.sleep(0.2)
            assert len(loaded) <= consumed + loader.prefetch

        batches.close()
        assert len(loaded) < len(records)

    def test_unshuffled_order(self):
        loader = BatchLoader(_records(4), (64, 64), 2, shuffle=False)
        assert loader.order(7).tolist() == [0, 1, 2, 3]

    def test_thread_limit(self, monkeypatch):
        monkeypatch.setenv("NUSG_THREADS", "2")
        assert thread_limit() == 2
        assert BatchLoader(_records(4), (64, 64), 2, workers=8).workers == 2

        monkeypatch.setenv("NUSG_THREADS", "many")
        assert thread_limit() is None

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            BatchLoader(_records(4), (64, 64), 0)
