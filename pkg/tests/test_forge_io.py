import json

import numpy as np
import pytest

from src.errors import DatasetFormatError
from src.forge.cifar import file_checksum, ingest_cifar, load_images, source_checksums
from src.forge.longtail import build_longtail
from src.forge.manifest import load_manifest, save_manifest
from src.forge.noise import inject_t2h_noise
from src.forge.synthetic import label_only_source, make_blobs


def _write_cifar10(root, per_file=3, test_records=2):
    d = root / "cifar-10-batches-bin"
    d.mkdir(parents=True)
    for i in range(1, 6):
        recs = []
        for j in range(per_file):
            recs.append(bytes([(i + j) % 10]) + bytes([(i * 10 + j) % 256]) * 3072)
        (d / f"data_batch_{i}.bin").write_bytes(b"".join(recs))
    recs = [bytes([j % 10]) + bytes([200 + j]) * 3072 for j in range(test_records)]
    (d / "test_batch.bin").write_bytes(b"".join(recs))
    return d


def _write_cifar100(root, n=4):
    d = root / "cifar-100-binary"
    d.mkdir(parents=True)
    # coarse label 7, fine label 40 + j
    recs = [bytes([7, 40 + j]) + bytes([j]) * 3072 for j in range(n)]
    (d / "train.bin").write_bytes(b"".join(recs))
    (d / "test.bin").write_bytes(b"".join(recs[:2]))
    return d


# ---------------------------
# CIFAR binaries
# ---------------------------
def test_ingest_cifar10_labels_and_refs(tmp_path):
    _write_cifar10(tmp_path)
    ds = ingest_cifar(tmp_path, "cifar10", "train")
    assert len(ds) == 15
    assert ds.class_count == 10
    assert ds.labels[:3].tolist() == [1, 2, 3]
    assert ds.refs[1].file == "cifar-10-batches-bin/data_batch_1.bin"
    assert ds.refs[1].offset == 3073
    assert ds.images is None

    test = ingest_cifar(tmp_path / "cifar-10-batches-bin", "cifar10", "test", with_images=True)
    assert len(test) == 2
    assert test.split == "test"
    assert test.images.shape == (2, 3, 32, 32)
    assert int(test.images[1, 0, 0, 0]) == 201


def test_ingest_cifar100_uses_fine_label(tmp_path):
    _write_cifar100(tmp_path)
    ds = ingest_cifar(tmp_path, "cifar100", "train")
    assert ds.class_count == 100
    assert ds.labels.tolist() == [40, 41, 42, 43]
    assert ds.refs[2].offset == 2 * 3074


def test_truncated_record_names_offset(tmp_path):
    d = _write_cifar10(tmp_path)
    (d / "test_batch.bin").write_bytes((d / "test_batch.bin").read_bytes() + b"\x01" * 100)
    with pytest.raises(DatasetFormatError, match="byte offset 6146"):
        ingest_cifar(tmp_path, "cifar10", "test")


def test_unknown_variant(tmp_path):
    with pytest.raises(DatasetFormatError, match="unknown CIFAR variant"):
        ingest_cifar(tmp_path, "cifar11")


def test_load_images_resolves_refs_and_checks_sums(tmp_path):
    _write_cifar10(tmp_path)
    ds = ingest_cifar(tmp_path, "cifar10", "train", with_images=True)
    sums = source_checksums(ds.refs, tmp_path)
    assert set(sums) == {f"cifar-10-batches-bin/data_batch_{i}.bin" for i in range(1, 6)}

    subset = ds.take([14, 0, 7])
    pixels = load_images(subset, tmp_path, sums)
    assert np.array_equal(pixels, ds.images[[14, 0, 7]])

    bad = dict(sums)
    bad["cifar-10-batches-bin/data_batch_1.bin"] = "0" * 64
    with pytest.raises(DatasetFormatError, match="checksum"):
        load_images(subset, tmp_path, bad)


def test_file_checksum_changes_with_content(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"abc")
    first = file_checksum(p)
    p.write_bytes(b"abd")
    assert file_checksum(p) != first


# ---------------------------
# manifest
# ---------------------------
def test_manifest_roundtrip_is_exact(tmp_path):
    train = build_longtail(make_blobs(10, 10, image_size=8, seed=4), 1, seed=0)
    noisy = inject_t2h_noise(train, 0.3, seed=9).without_images()
    test = make_blobs(10, 2, image_size=8, seed=4, split="test").without_images()
    assert len(noisy) == 100

    path = save_manifest(tmp_path / "m.json", noisy, test, imbalance_factor=1.0)
    loaded = load_manifest(path)

    assert loaded.train == noisy
    assert loaded.test == test
    assert loaded.imbalance_factor == 1.0

    raw = json.loads(path.read_text())
    assert raw["version"] == 1
    assert {"id", "true_label", "observed_label", "split", "file", "offset"} <= set(raw["records"][0])


def test_manifest_regenerates_synthetic_pixels(tmp_path):
    blobs = make_blobs(4, 5, image_size=8, seed=2)
    noisy = inject_t2h_noise(build_longtail(blobs, 2, seed=1), 0.2, seed=3)
    path = save_manifest(tmp_path / "m.json", noisy.without_images())
    loaded = load_manifest(path)
    pixels = load_images(loaded.train.base)
    assert np.array_equal(pixels, noisy.base.images)


def test_manifest_label_only_roundtrip(tmp_path):
    lt = build_longtail(label_only_source(10, 40), 10, seed=0)
    noisy = inject_t2h_noise(lt, 0.4, seed=1, selection="per_class")
    loaded = load_manifest(save_manifest(tmp_path / "m.json", noisy))
    assert loaded.train == noisy
    assert loaded.train.selection == "per_class"
    assert loaded.test is None


def test_manifest_rejects_garbage(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"version": 1}')
    with pytest.raises(DatasetFormatError):
        load_manifest(p)
    p.write_text(json.dumps({"version": 9, "class_count": 2, "noise_ratio": 0, "seed": 0,
                             "records": []}))
    with pytest.raises(DatasetFormatError, match="version"):
        load_manifest(p)


def test_blobs_are_deterministic():
    a = make_blobs(3, 4, image_size=8, seed=1)
    b = make_blobs(3, 4, image_size=8, seed=1)
    assert a == b
    assert a.images.dtype == np.uint8
    assert a.images.shape == (12, 3, 8, 8)
    test = make_blobs(3, 4, image_size=8, seed=1, split="test")
    assert not np.array_equal(a.images, test.images)
