from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from src.config import RuntimeConfig
from src.orch.pipeline import baseline_ce, run_experiment
from src.schemas.experiment import ExperimentConfig, load_config


def main() -> int:
    ap = argparse.ArgumentParser(description="forge -> IFD -> IFPU -> evaluate, end to end.")
    ap.add_argument("--config", default=None, help="ExperimentConfig as JSON/YAML")
    ap.add_argument("--out-dir", default=None, help="overrides output.out_dir")
    ap.add_argument("--run-id", default=None)
    ap.add_argument("--baseline", action="store_true", help="also train the matched CE baseline")
    ap.add_argument("--seed", type=int, default=None, help="sets dataset, backbone and stage seeds")
    args = ap.parse_args()

    cfg = load_config(args.config, ExperimentConfig) if args.config else ExperimentConfig()
    if args.out_dir:
        output = cfg.output.model_copy(update={"out_dir": args.out_dir})
        cfg = cfg.model_copy(update={"output": output})
    if args.seed is not None:
        s = {"seed": args.seed}
        cfg = cfg.model_copy(
            update={
                "dataset": cfg.dataset.model_copy(update=s),
                "backbone": cfg.backbone.model_copy(update=s),
                "ifd": cfg.ifd.model_copy(update=s),
                "ifpu": cfg.ifpu.model_copy(update=s),
            }
        )

    runtime = RuntimeConfig()
    if args.run_id:
        runtime = replace(runtime, run_id=args.run_id)

    records = [run_experiment(cfg, runtime)]
    if args.baseline:
        records.append(baseline_ce(cfg, runtime))

    for r in records:
        print(
            json.dumps(
                {
                    "run_id": r.run_id,
                    "method": r.method,
                    "status": r.status,
                    "failed_stage": r.failed_stage,
                    "config_hash": r.config_hash,
                    "overall_acc": r.overall_acc,
                    "tail_acc": r.tail_acc,
                    "hit_rate_flipped": r.hit_rate_flipped,
                },
                ensure_ascii=False,
            )
        )
    return 0 if all(r.status == "ok" for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
