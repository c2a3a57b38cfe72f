from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from src.config import RuntimeConfig
from src.errors import DatasetFormatError
from src.forge.diagnostics import empirical_transition_matrix, imbalance_factor
from src.forge.manifest import save_manifest
from src.observability.events import EventLogger
from src.orch.pipeline import forge_splits
from src.schemas.experiment import DatasetSpec


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(description="Forge a long-tailed T2H-noisy manifest.")
    ap.add_argument(
        "--source",
        default=None,
        help="CIFAR directory (or its parent); omit for synthetic blobs",
    )
    ap.add_argument("--variant", choices=["cifar10", "cifar100"], default="cifar10")
    ap.add_argument("--if", dest="imbalance_factor", type=float, default=10.0)
    ap.add_argument("--noise", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--selection", choices=["uniform", "per_class"], default="uniform")
    ap.add_argument("--per-class", type=int, default=None, help="balanced cap before the cut")
    ap.add_argument("--test-per-class", type=int, default=None)
    ap.add_argument("--classes", type=int, default=10, help="blobs only")
    ap.add_argument("--out", default="data/processed/manifest.json")
    args = ap.parse_args(argv)

    runtime = RuntimeConfig()
    logger = EventLogger.from_runtime(runtime)
    spec = DatasetSpec(
        source="blobs" if args.source is None else args.variant,
        data_root=args.source,
        class_count=args.classes,
        per_class=args.per_class if args.source is not None else (args.per_class or 600),
        test_per_class=args.test_per_class,
        imbalance_factor=args.imbalance_factor,
        noise_ratio=args.noise,
        selection=args.selection,
        seed=args.seed,
    )
    try:
        data = forge_splits(spec, runtime)
    except (FileNotFoundError, DatasetFormatError) as e:
        logger.error("forge_failed", source=spec.source, error=f"{type(e).__name__}: {e}")
        return 1

    out = save_manifest(
        args.out,
        data.train.without_images(),
        data.test.without_images(),
        imbalance_factor=data.imbalance_factor,
        sources=data.sources,
    )

    try:
        observed_if = imbalance_factor(data.train)
    except ValueError:
        observed_if = None
    transition = empirical_transition_matrix(data.train)
    summary = {
        "out": str(out),
        "train": len(data.train),
        "test": len(data.test),
        "flipped": int(data.train.flipped.sum()),
        "imbalance_factor": data.imbalance_factor,
        "observed_imbalance_factor": observed_if,
        "empty_rows": list(transition.empty_rows),
    }
    Path(out).with_suffix(".summary.json").write_text(
        json.dumps(summary, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
