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
from src.observability.events import EventLogger
from src.schemas.experiment import IfdStageConfig, canonical_hash, load_config
from src.training.ifd import train_ifd


def main() -> int:
    ap = argparse.ArgumentParser(description="Train the original bundle with the IFD objective.")
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--config", default=None, help="JSON/YAML with {ifd, backbone}")
    ap.add_argument("--out", default="data/artifacts/ckpt/original")
    ap.add_argument("--data-root", default=None, help="defaults to DULL_DATA_ROOT")
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--beta", type=float, default=None)
    args = ap.parse_args()

    runtime = RuntimeConfig()
    logger = EventLogger.from_runtime(runtime)
    cfg = load_config(args.config, IfdStageConfig) if args.config else IfdStageConfig()
    overrides = {"epochs": args.epochs, "beta": args.beta}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = cfg.model_copy(update={"ifd": cfg.ifd.model_copy(update=overrides)})
    config_hash = canonical_hash(cfg.model_dump(mode="json"))

    data_root = args.data_root or runtime.data_root
    splits = load_manifest(args.manifest)
    train = splits.train.with_images(load_images(splits.train.base, data_root, splits.sources))
    eval_fn = None
    if splits.test is not None:
        test_images = load_images(splits.test, data_root, splits.sources)
        sizes = train.observed_sizes_by_class

        def eval_fn(bundle):
            return evaluate(
                bundle, test_images, splits.test.labels, sizes, device=runtime.device
            ).overall

    out = Path(args.out)
    try:
        _, report = train_ifd(
            train.training_view(),
            cfg.ifd,
            cfg.backbone,
            runtime=runtime,
            logger=logger,
            log_path=out / "ifd_log.jsonl",
            checkpoint_dir=out,
            config_hash=config_hash,
            eval_fn=eval_fn,
        )
    except TrainingDivergedError as e:
        logger.error(
            "ifd_diverged", epoch=e.epoch, reason=e.reason, last_checkpoint=e.last_checkpoint
        )
        return 1

    summary = {
        "out": str(out),
        "config_hash": config_hash,
        "initial_om": report.initial_om,
        "final_om": report.final_om,
        "initial_lsm": report.initial_lsm,
        "final_lsm": report.final_lsm,
    }
    (out / "disentangle.json").write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
    )
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
