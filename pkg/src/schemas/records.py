from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

Method = Literal["dull", "ce"]
RunStatus = Literal["ok", "failed"]


class MultiLabelRecord(BaseModel):
    """One line of the relabel dump."""

    model_config = ConfigDict(extra="forbid")

    id: int
    d: float = Field(..., ge=0.0, le=1.0)
    clean: bool
    q: int = Field(..., ge=1)
    labels: list[int] = Field(..., min_length=1)
    observed: Optional[int] = None

    @model_validator(mode="after")
    def _consistent(self) -> "MultiLabelRecord":
        if len(self.labels) != self.q:
            raise ValueError(f"label set size {len(self.labels)} != q={self.q}")
        if not self.clean and self.observed is not None and self.observed in self.labels:
            raise ValueError("noisy record keeps its observed label")
        return self


class EvalMetrics(BaseModel):
    model_config = ConfigDict(extra="forbid")

    overall: float = Field(..., ge=0.0, le=100.0)
    head: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    middle: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    tail: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    per_class: list[Optional[float]] = Field(default_factory=list)
    terciles: dict[str, list[int]] = Field(default_factory=dict)
    tercile_counts: dict[str, int] = Field(default_factory=dict)
    missing_classes: list[int] = Field(default_factory=list)
    n: int = 0


class ResultRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    run_id: str
    name: str = ""
    method: Method = "dull"
    status: RunStatus = "ok"
    failed_stage: Optional[str] = None
    error: Optional[str] = None
    config_hash: str

    overall_acc: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    head_acc: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    middle_acc: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    tail_acc: Optional[float] = Field(default=None, ge=0.0, le=100.0)
    per_class_acc: list[Optional[float]] = Field(default_factory=list)
    terciles: dict[str, list[int]] = Field(default_factory=dict)
    missing_classes: list[int] = Field(default_factory=list)

    om_trajectory: list[float] = Field(default_factory=list)
    lsm_trajectory: list[float] = Field(default_factory=list)

    hit_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    hit_rate_flipped: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    top1_hit_rate: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    top1_hit_rate_flipped: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    transition_matrix: list[list[float]] = Field(default_factory=list)
    flip_counts: list[list[int]] = Field(default_factory=list)
    original_imbalance_factor: Optional[float] = None
    observed_imbalance_factor: Optional[float] = None
    observed_class_sizes: list[int] = Field(default_factory=list)

    wall_clock_sec: float = 0.0
    stage_timings_sec: dict[str, float] = Field(default_factory=dict)

    def apply_metrics(self, metrics: EvalMetrics) -> "ResultRecord":
        return self.model_copy(
            update={
                "overall_acc": metrics.overall,
                "head_acc": metrics.head,
                "middle_acc": metrics.middle,
                "tail_acc": metrics.tail,
                "per_class_acc": metrics.per_class,
                "terciles": metrics.terciles,
                "missing_classes": metrics.missing_classes,
            }
        )

    def comparable(self) -> dict:
        """Everything except wall-clock fields, for reproducibility checks."""
        return self.model_dump(exclude={"run_id", "wall_clock_sec", "stage_timings_sec"})


def load_record(path: str | Path) -> ResultRecord:
    return ResultRecord.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


def load_records(root: str | Path, pattern: str = "**/result*.json") -> list[ResultRecord]:
    return [load_record(p) for p in sorted(Path(root).glob(pattern))]
