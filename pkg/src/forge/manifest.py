from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.errors import DatasetFormatError
from src.forge.datasets import ImageRef, LabeledDataset, NoisyDataset

MANIFEST_VERSION = 1


class ManifestRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: int
    true_label: int = Field(..., ge=0)
    observed_label: int = Field(..., ge=0)
    split: Literal["train", "test"]
    file: Optional[str] = None
    offset: Optional[int] = Field(default=None, ge=0)


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = MANIFEST_VERSION
    class_count: int = Field(..., ge=1)
    noise_ratio: float = Field(..., ge=0.0, lt=1.0)
    seed: int
    selection: str = "uniform"
    imbalance_factor: Optional[float] = None
    long_tailed: dict[str, bool] = Field(default_factory=dict)
    sources: dict[str, str] = Field(default_factory=dict)
    records: list[ManifestRecord]


@dataclass(frozen=True, eq=False)
class ForgedSplits:
    train: NoisyDataset
    test: Optional[LabeledDataset] = None
    imbalance_factor: Optional[float] = None
    sources: dict[str, str] = field(default_factory=dict)


def _records(dataset: LabeledDataset, observed: np.ndarray) -> list[ManifestRecord]:
    refs = dataset.refs or (None,) * len(dataset)
    return [
        ManifestRecord(
            id=int(i),
            true_label=int(t),
            observed_label=int(o),
            split=dataset.split,
            file=ref.file if ref is not None else None,
            offset=ref.offset if ref is not None else None,
        )
        for i, t, o, ref in zip(dataset.ids, dataset.labels, observed, refs)
    ]


def save_manifest(
    path: str | Path,
    train: NoisyDataset,
    test: Optional[LabeledDataset] = None,
    *,
    imbalance_factor: Optional[float] = None,
    sources: Optional[dict[str, str]] = None,
) -> Path:
    """Write labels, split tags and image references. Pixels are never copied."""
    if train.base.split != "train":
        raise ValueError(f"train split is tagged {train.base.split!r}")
    records = _records(train.base, train.observed_labels)
    long_tailed = {"train": train.base.long_tailed}
    if test is not None:
        if test.split != "test":
            raise ValueError(f"test split is tagged {test.split!r}")
        if test.class_count != train.class_count:
            raise ValueError("train and test disagree on class_count")
        records += _records(test, test.labels)
        long_tailed["test"] = test.long_tailed

    manifest = Manifest(
        class_count=train.class_count,
        noise_ratio=train.noise_ratio,
        seed=train.seed,
        selection=train.selection,
        imbalance_factor=imbalance_factor,
        long_tailed=long_tailed,
        sources=dict(sources or {}),
        records=records,
    )
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(manifest.model_dump(mode="json"), indent=1), encoding="utf-8")
    return p


def _split_dataset(
    rows: list[ManifestRecord], split: str, class_count: int, long_tailed: bool
) -> tuple[LabeledDataset, np.ndarray]:
    with_ref = [r.file is not None for r in rows]
    if any(with_ref) and not all(with_ref):
        raise DatasetFormatError(f"{split} records mix image references and label-only rows")
    refs = tuple(ImageRef(r.file, int(r.offset or 0)) for r in rows) if all(with_ref) else ()
    if rows and any(r.true_label >= class_count or r.observed_label >= class_count for r in rows):
        raise DatasetFormatError(f"{split} records hold labels outside [0, {class_count})")
    dataset = LabeledDataset(
        labels=np.array([r.true_label for r in rows], dtype=np.int64),
        class_count=class_count,
        ids=np.array([r.id for r in rows], dtype=np.int64),
        refs=refs,
        split=split,
        long_tailed=long_tailed,
    )
    return dataset, np.array([r.observed_label for r in rows], dtype=np.int64)


def load_manifest(path: str | Path) -> ForgedSplits:
    p = Path(path)
    try:
        manifest = Manifest.model_validate(json.loads(p.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DatasetFormatError(f"{p}: not a valid manifest ({e})") from e
    if manifest.version != MANIFEST_VERSION:
        raise DatasetFormatError(f"{p}: unsupported manifest version {manifest.version}")

    train_rows = [r for r in manifest.records if r.split == "train"]
    test_rows = [r for r in manifest.records if r.split == "test"]

    base, observed = _split_dataset(
        train_rows, "train", manifest.class_count, manifest.long_tailed.get("train", False)
    )
    train = NoisyDataset(
        base=base,
        observed_labels=observed,
        noise_ratio=manifest.noise_ratio,
        seed=manifest.seed,
        selection=manifest.selection,
    )
    test = None
    if test_rows:
        test, _ = _split_dataset(
            test_rows, "test", manifest.class_count, manifest.long_tailed.get("test", False)
        )
    return ForgedSplits(
        train=train,
        test=test,
        imbalance_factor=manifest.imbalance_factor,
        sources=manifest.sources,
    )
