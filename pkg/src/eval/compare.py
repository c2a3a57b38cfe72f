from __future__ import annotations

from typing import Sequence

import pandas as pd

from src.schemas.records import ResultRecord

METRICS = ("overall_acc", "head_acc", "middle_acc", "tail_acc", "final_om", "final_lsm", "hit_rate")


def _row(r: ResultRecord) -> dict:
    return {
        "run_id": r.run_id,
        "name": r.name,
        "method": r.method,
        "status": r.status,
        "config_hash": r.config_hash,
        "overall_acc": r.overall_acc,
        "head_acc": r.head_acc,
        "middle_acc": r.middle_acc,
        "tail_acc": r.tail_acc,
        "final_om": r.om_trajectory[-1] if r.om_trajectory else None,
        "final_lsm": r.lsm_trajectory[-1] if r.lsm_trajectory else None,
        "hit_rate": r.hit_rate,
    }


def compare(records: Sequence[ResultRecord]) -> pd.DataFrame:
    """
    One row per record plus `delta_<metric>` columns against the first record.

    Records must share a config hash; comparing runs of different
    experiments is refused.
    """
    if not records:
        raise ValueError("compare needs at least one record")
    hashes = sorted({r.config_hash for r in records})
    if len(hashes) > 1:
        raise ValueError(f"cannot compare records with different config hashes: {hashes}")

    df = pd.DataFrame([_row(r) for r in records])
    for m in METRICS:
        values = pd.to_numeric(df[m], errors="coerce")
        df[f"delta_{m}"] = values - values.iloc[0]
    return df
