from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from src.errors import DatasetFormatError
from src.forge.datasets import ImageRef, LabeledDataset
from src.forge.synthetic import is_synthetic, resolve_synthetic

PIXELS = 3 * 32 * 32


@dataclass(frozen=True)
class CifarLayout:
    dirname: str
    train_files: tuple[str, ...]
    test_files: tuple[str, ...]
    label_bytes: int
    label_index: int  # which label byte holds the class
    class_count: int

    @property
    def record_len(self) -> int:
        return self.label_bytes + PIXELS

    def files(self, split: str) -> tuple[str, ...]:
        if split == "train":
            return self.train_files
        if split == "test":
            return self.test_files
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")


LAYOUTS: dict[str, CifarLayout] = {
    "cifar10": CifarLayout(
        dirname="cifar-10-batches-bin",
        train_files=tuple(f"data_batch_{i}.bin" for i in range(1, 6)),
        test_files=("test_batch.bin",),
        label_bytes=1,
        label_index=0,
        class_count=10,
    ),
    # coarse label first, fine label second
    "cifar100": CifarLayout(
        dirname="cifar-100-binary",
        train_files=("train.bin",),
        test_files=("test.bin",),
        label_bytes=2,
        label_index=1,
        class_count=100,
    ),
}


def _layout(variant: str) -> CifarLayout:
    try:
        return LAYOUTS[variant]
    except KeyError:
        raise DatasetFormatError(
            f"unknown CIFAR variant {variant!r}; expected one of {sorted(LAYOUTS)}"
        ) from None


def _layout_for_file(file: str) -> CifarLayout:
    name = Path(file).name
    for layout in LAYOUTS.values():
        if name in layout.train_files or name in layout.test_files:
            return layout
    raise DatasetFormatError(f"cannot tell the CIFAR variant of {file}")


def file_checksum(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_records(path: Path, layout: CifarLayout) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    whole = raw.size // layout.record_len
    if raw.size % layout.record_len:
        offset = whole * layout.record_len
        raise DatasetFormatError(
            f"{path}: truncated record at byte offset {offset} "
            f"({raw.size - offset} of {layout.record_len} bytes)"
        )
    return raw.reshape(whole, layout.record_len)


def _variant_dir(root: Path, layout: CifarLayout) -> Path:
    nested = root / layout.dirname
    return nested if nested.is_dir() else root


def ingest_cifar(
    root: str | Path,
    variant: str,
    split: str = "train",
    *,
    with_images: bool = False,
) -> LabeledDataset:
    """
    Read labels (and optionally pixels) from the standard CIFAR binary layout.

    `root` may be the extraction directory or its parent. Refs are
    (file relative to `root`, byte offset of the record).
    """
    layout = _layout(variant)
    root = Path(root)
    base = _variant_dir(root, layout)

    labels: list[np.ndarray] = []
    refs: list[ImageRef] = []
    pixels: list[np.ndarray] = []
    for name in layout.files(split):
        path = base / name
        if not path.is_file():
            raise FileNotFoundError(f"missing CIFAR file: {path}")
        records = _read_records(path, layout)
        file_labels = records[:, layout.label_index].astype(np.int64)
        bad = np.flatnonzero(file_labels >= layout.class_count)
        if bad.size:
            offset = int(bad[0]) * layout.record_len
            raise DatasetFormatError(
                f"{path}: label {int(file_labels[bad[0]])} out of range at byte offset {offset}"
            )
        rel = path.relative_to(root).as_posix()
        labels.append(file_labels)
        refs.extend(ImageRef(rel, i * layout.record_len) for i in range(len(records)))
        if with_images:
            pixels.append(records[:, layout.label_bytes :].reshape(-1, 3, 32, 32).copy())

    all_labels = np.concatenate(labels)
    return LabeledDataset(
        labels=all_labels,
        class_count=layout.class_count,
        ids=np.arange(all_labels.size, dtype=np.int64),
        refs=tuple(refs),
        split=split,
        images=np.concatenate(pixels) if with_images else None,
    )


def source_checksums(refs: tuple[ImageRef, ...], data_root: Optional[str | Path]) -> dict[str, str]:
    """SHA-256 of every on-disk file the refs point into (synthetic refs are skipped)."""
    files = sorted({r.file for r in refs if not is_synthetic(r.file)})
    if files and data_root is None:
        raise ValueError("data_root is required to checksum CIFAR sources")
    return {f: file_checksum(Path(data_root) / f) for f in files}


def load_images(
    dataset: LabeledDataset,
    data_root: Optional[str | Path] = None,
    checksums: Optional[Mapping[str, str]] = None,
) -> np.ndarray:
    """
    Resolve every ref of `dataset` to uint8 pixels shaped (N, 3, H, W).

    When `checksums` lists a file, its SHA-256 must match before it is read.
    """
    if not dataset.refs:
        raise ValueError("dataset has no image references (label-only source)")

    by_file: dict[str, list[int]] = {}
    for i, ref in enumerate(dataset.refs):
        by_file.setdefault(ref.file, []).append(i)

    out: Optional[np.ndarray] = None
    for file, positions in by_file.items():
        offsets = np.array([dataset.refs[i].offset for i in positions], dtype=np.int64)
        if is_synthetic(file):
            chunk = resolve_synthetic(file, offsets)
        else:
            if data_root is None:
                raise ValueError("data_root is required to load CIFAR pixels")
            path = Path(data_root) / file
            expected = (checksums or {}).get(file)
            if expected is not None and file_checksum(path) != expected:
                raise DatasetFormatError(f"checksum mismatch for {path}")
            layout = _layout_for_file(file)
            records = _read_records(path, layout)
            if offsets.size and (offsets % layout.record_len).any():
                raise DatasetFormatError(f"{path}: offset not aligned to a record boundary")
            rows = records[offsets // layout.record_len]
            chunk = rows[:, layout.label_bytes :].reshape(-1, 3, 32, 32)

        if out is None:
            out = np.empty((len(dataset),) + chunk.shape[1:], dtype=np.uint8)
        out[np.asarray(positions)] = chunk
    assert out is not None
    return out
