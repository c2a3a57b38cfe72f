from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, TextIO

from src.config import RuntimeConfig

_LEVELS = {"DEBUG": 10, "INFO": 20, "WARN": 30, "WARNING": 30, "ERROR": 40}


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _jsonable(v: Any) -> Any:
    if isinstance(v, float):
        return round(v, 6)
    if isinstance(v, Path):
        return str(v)
    return v


class EventLogger:
    """
    Structured run events, one JSON object per line.

    `emit` writes to stdout (or `stream`); `JsonlLog` below keeps the per-epoch
    tables that land next to checkpoints.
    """

    def __init__(
        self,
        run_id: str,
        *,
        log_json: bool = True,
        log_level: str = "INFO",
        stream: Optional[TextIO] = None,
    ) -> None:
        self.run_id = run_id
        self.log_json = log_json
        self.min_level = _LEVELS.get(log_level.upper(), 20)
        self.stream = stream

    @classmethod
    def from_runtime(cls, runtime: RuntimeConfig) -> "EventLogger":
        return cls(runtime.run_id, log_json=runtime.log_json, log_level=runtime.log_level)

    def emit(self, level: str, event: str, **fields: Any) -> None:
        if _LEVELS.get(level.upper(), 20) < self.min_level:
            return
        payload = {
            "ts_utc": utc_now_iso(),
            "level": level.upper(),
            "event": event,
            "run_id": self.run_id,
            **{k: _jsonable(v) for k, v in fields.items()},
        }
        out = self.stream or sys.stdout
        if self.log_json:
            out.write(json.dumps(payload, ensure_ascii=False, default=str) + "\n")
        else:
            out.write(" ".join(f"{k}={v}" for k, v in payload.items()) + "\n")
        out.flush()

    def info(self, event: str, **fields: Any) -> None:
        self.emit("info", event, **fields)

    def warn(self, event: str, **fields: Any) -> None:
        self.emit("warn", event, **fields)

    def error(self, event: str, **fields: Any) -> None:
        self.emit("error", event, **fields)


class NullLogger(EventLogger):
    def __init__(self) -> None:
        super().__init__("-", log_level="ERROR")

    def emit(self, level: str, event: str, **fields: Any) -> None:
        return None


class JsonlLog:
    """Append-only JSON-lines table (per-epoch training logs, relabel dumps)."""

    def __init__(self, path: Optional[str | Path]) -> None:
        self.path = Path(path) if path is not None else None
        self.rows: list[dict[str, Any]] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def append(self, row: dict[str, Any]) -> None:
        self.rows.append(row)
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")
