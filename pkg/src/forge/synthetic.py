from __future__ import annotations

from functools import lru_cache
from urllib.parse import parse_qs, urlencode, urlparse

import numpy as np

from src.forge.datasets import ImageRef, LabeledDataset

SCHEME = "synthetic"
_SPLIT_CODES = {"train": 0, "test": 1}
_TEMPLATE_GRID = 4


def label_only_source(class_count: int, per_class: int, split: str = "train") -> LabeledDataset:
    """Balanced labels without pixels; enough for imbalance and noise statistics."""
    if class_count < 1 or per_class < 1:
        raise ValueError(
            f"need class_count >= 1 and per_class >= 1, got {class_count}, {per_class}"
        )
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
    return LabeledDataset(
        labels=labels,
        class_count=class_count,
        ids=np.arange(labels.size, dtype=np.int64),
        split=split,
    )


def _blob_url(
    class_count: int, per_class: int, image_size: int, seed: int, noise_std: float, split: str
) -> str:
    query = urlencode(
        {
            "classes": class_count,
            "per_class": per_class,
            "size": image_size,
            "seed": seed,
            "noise": repr(float(noise_std)),
            "split": split,
        }
    )
    return f"{SCHEME}://blobs?{query}"


def _templates(class_count: int, image_size: int, seed: int) -> np.ndarray:
    # low-resolution class patterns, upsampled to the image grid
    rng = np.random.default_rng(seed)
    coarse = rng.normal(0.0, 1.0, size=(class_count, 3, _TEMPLATE_GRID, _TEMPLATE_GRID))
    reps = -(-image_size // _TEMPLATE_GRID)
    fine = np.repeat(np.repeat(coarse, reps, axis=2), reps, axis=3)
    return fine[:, :, :image_size, :image_size]


@lru_cache(maxsize=8)
def _render(
    class_count: int, per_class: int, image_size: int, seed: int, noise_std: float, split: str
) -> np.ndarray:
    if split not in _SPLIT_CODES:
        raise ValueError(f"split must be one of {sorted(_SPLIT_CODES)}, got {split!r}")
    templates = _templates(class_count, image_size, seed)
    rng = np.random.default_rng([seed, _SPLIT_CODES[split]])

    labels = np.repeat(np.arange(class_count), per_class)
    noise = rng.normal(0.0, noise_std, size=(labels.size, 3, image_size, image_size))
    pixels = 128.0 + 48.0 * (templates[labels] + noise)
    images = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    images.setflags(write=False)
    return images


def make_blobs(
    class_count: int,
    per_class: int,
    image_size: int = 16,
    seed: int = 0,
    noise_std: float = 0.5,
    split: str = "train",
) -> LabeledDataset:
    """
    Balanced synthetic image task: one random template per class plus pixel noise.

    Templates depend only on `seed`, so train and test splits share classes.
    Each instance's ref points back into the generator, so a manifest can
    regenerate the pixels bit-exactly.
    """
    if class_count < 1 or per_class < 1:
        raise ValueError(
            f"need class_count >= 1 and per_class >= 1, got {class_count}, {per_class}"
        )
    images = _render(class_count, per_class, image_size, seed, float(noise_std), split)
    url = _blob_url(class_count, per_class, image_size, seed, noise_std, split)
    n = class_count * per_class
    return LabeledDataset(
        labels=np.repeat(np.arange(class_count, dtype=np.int64), per_class),
        class_count=class_count,
        ids=np.arange(n, dtype=np.int64),
        refs=tuple(ImageRef(file=url, offset=i) for i in range(n)),
        split=split,
        images=np.array(images),
    )


def is_synthetic(file: str) -> bool:
    return file.startswith(f"{SCHEME}://")


def resolve_synthetic(file: str, offsets: np.ndarray) -> np.ndarray:
    """Regenerate the pixels addressed by a `synthetic://blobs?...` ref."""
    parsed = urlparse(file)
    if parsed.scheme != SCHEME or parsed.netloc != "blobs":
        raise ValueError(f"unsupported synthetic source: {file}")
    q = {k: v[0] for k, v in parse_qs(parsed.query).items()}
    try:
        images = _render(
            int(q["classes"]),
            int(q["per_class"]),
            int(q["size"]),
            int(q["seed"]),
            float(q["noise"]),
            q["split"],
        )
    except KeyError as e:
        raise ValueError(f"synthetic ref is missing parameter {e}: {file}") from e
    return images[np.asarray(offsets, dtype=np.int64)].copy()
