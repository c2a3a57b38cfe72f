from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from src.config import RuntimeConfig
from src.errors import TrainingDivergedError
from src.eval.metrics import evaluate
from src.forge.cifar import load_images
from src.forge.manifest import load_manifest
from src.nets.checkpoint import load_bundle
from src.observability.events import EventLogger
from src.orch.pipeline import capture_rates
from src.relabel.relabeler import (
    membership_from_records,
    read_relabel_dump,
    relabel_dataset,
    write_relabel_dump,
)
from src.schemas.experiment import UnlearnStageConfig, canonical_hash, load_config
from src.training.unlearn import unlearn_finetune


def main() -> int:
    ap = argparse.ArgumentParser(description="Partial unlearning fine-tune of an IFD bundle.")
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--original", required=True, help="checkpoint dir or bundle.pt")
    ap.add_argument("--config", default=None, help="JSON/YAML with {ifpu, relabel, mixer}")
    ap.add_argument("--out", default="data/artifacts/ckpt/unlearned")
    ap.add_argument("--relabel-dump", default=None, help="label sets for the first epoch")
    ap.add_argument("--data-root", default=None, help="defaults to DULL_DATA_ROOT")
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()

    runtime = RuntimeConfig()
    logger = EventLogger.from_runtime(runtime)
    cfg = load_config(args.config, UnlearnStageConfig) if args.config else UnlearnStageConfig()
    if args.epochs is not None:
        cfg = cfg.model_copy(update={"ifpu": cfg.ifpu.model_copy(update={"epochs": args.epochs})})
    config_hash = canonical_hash(cfg.model_dump(mode="json"))

    data_root = args.data_root or runtime.data_root
    splits = load_manifest(args.manifest)
    train = splits.train.with_images(load_images(splits.train.base, data_root, splits.sources))
    train_set = train.training_view()
    original, meta = load_bundle(args.original, expect_class_count=train.class_count)
    if original.stage != "original":
        logger.error("unlearn_bad_checkpoint", stage=original.stage)
        return 2

    initial = None
    if args.relabel_dump:
        records = read_relabel_dump(args.relabel_dump)
        initial = membership_from_records(records, train_set.ids, train.class_count)

    val_fn = None
    if splits.test is not None:
        test_images = load_images(splits.test, data_root, splits.sources)
        sizes = train.observed_sizes_by_class

        def val_fn(bundle):
            return evaluate(
                bundle, test_images, splits.test.labels, sizes, device=runtime.device
            ).overall

    out = Path(args.out)
    true_labels = train.true_labels
    try:
        unlearned, _ = unlearn_finetune(
            original,
            train_set,
            cfg,
            backbone=meta["backbone"],
            initial_membership=initial,
            runtime=runtime,
            logger=logger,
            log_path=out / "ifpu_log.jsonl",
            checkpoint_dir=out,
            config_hash=config_hash,
            hit_rate_fn=lambda r: capture_rates(r, true_labels),
            val_fn=val_fn,
        )
    except TrainingDivergedError as e:
        logger.error(
            "ifpu_diverged", epoch=e.epoch, reason=e.reason, last_checkpoint=e.last_checkpoint
        )
        return 1

    final = relabel_dataset(
        unlearned,
        train_set.images,
        train_set.labels,
        train_set.ids,
        cfg.relabel,
        seed=cfg.ifpu.seed,
        device=runtime.device,
    )
    write_relabel_dump(out / "relabel.jsonl", final)
    summary = {"out": str(out), "config_hash": config_hash, **capture_rates(final, true_labels)}
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
