from __future__ import annotations

import argparse
import sys

from rich.console import Console

from src.report import build_report
from src.schemas.records import load_records


def main() -> int:
    ap = argparse.ArgumentParser(description="Plots and report.md from stored result records.")
    ap.add_argument("--dir", required=True, help="directory searched for result*.json")
    ap.add_argument("--out", default="data/reports")
    args = ap.parse_args()

    console = Console()
    records = load_records(args.dir)
    if not records:
        console.print(f"[red]no result records under {args.dir}[/red]")
        return 1
    path = build_report(records, args.out)
    console.print(f"wrote {path} ({len(records)} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
