from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from src.schemas.records import ResultRecord


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2), encoding="utf-8")


class ExperimentArtifactWriter:
    """
    Persist one experiment run under <out_dir>/<run_id>/.

    Trainers write their own JSON-lines logs and checkpoints into the
    directories handed out here; this class writes everything else.
    """

    def __init__(self, out_dir: str | Path, run_id: str) -> None:
        self.out_dir = Path(out_dir)
        self.run_id = run_id
        self.run_dir = self.out_dir / run_id

    # ----------------------------
    # locations handed to stages
    # ----------------------------
    def checkpoint_dir(self, stage: str) -> Path:
        return self.run_dir / "checkpoints" / stage

    def log_path(self, stage: str) -> Path:
        return self.run_dir / f"{stage}_log.jsonl"

    @property
    def relabel_path(self) -> Path:
        return self.run_dir / "relabel.jsonl"

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"

    # ----------------------------
    # artifacts
    # ----------------------------
    def write_config(self, config: Dict[str, Any], config_hash: str) -> Path:
        path = self.run_dir / "config.json"
        _write_json(path, {"config_hash": config_hash, "config": config})
        return path

    def write_transition(self, transition: Dict[str, Any], flip_counts: list) -> Path:
        path = self.run_dir / "transition.json"
        _write_json(path, {**transition, "flip_counts": flip_counts})
        return path

    def write_result(self, record: ResultRecord) -> Path:
        name = "result.json" if record.method == "dull" else f"result_{record.method}.json"
        path = self.run_dir / name
        _write_json(path, record.model_dump(mode="json"))
        return path

    def write_summary(self, record: ResultRecord, extra: Optional[Dict[str, Any]] = None) -> Path:
        summary = {
            "run_id": record.run_id,
            "name": record.name,
            "method": record.method,
            "status": record.status,
            "failed_stage": record.failed_stage,
            "config_hash": record.config_hash,
            "overall_acc": record.overall_acc,
            "tail_acc": record.tail_acc,
            "hit_rate": record.hit_rate,
            "wall_clock_sec": record.wall_clock_sec,
            "stage_timings_sec": record.stage_timings_sec,
            **(extra or {}),
        }
        suffix = "" if record.method == "dull" else f"_{record.method}"
        path = self.run_dir / f"run_summary{suffix}.json"
        _write_json(path, summary)
        return path

    def append_csv(self, record: ResultRecord, filename: str = "summary.csv") -> Path:
        """One row per run, appended to <out_dir>/<filename>."""
        path = self.out_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        row = pd.DataFrame(
            [
                {
                    "run_id": record.run_id,
                    "name": record.name,
                    "method": record.method,
                    "status": record.status,
                    "config_hash": record.config_hash,
                    "overall_acc": record.overall_acc,
                    "head_acc": record.head_acc,
                    "middle_acc": record.middle_acc,
                    "tail_acc": record.tail_acc,
                    "final_om": record.om_trajectory[-1] if record.om_trajectory else None,
                    "final_lsm": record.lsm_trajectory[-1] if record.lsm_trajectory else None,
                    "hit_rate": record.hit_rate,
                    "wall_clock_sec": record.wall_clock_sec,
                }
            ]
        )
        row.to_csv(path, mode="a", header=not path.exists(), index=False)
        return path
