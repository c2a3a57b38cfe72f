from __future__ import annotations

import argparse
import sys

from rich.console import Console
from rich.table import Table

from src.eval.compare import METRICS, compare
from src.schemas.records import load_record


def _cell(v) -> str:
    if v is None or v != v:
        return "-"
    return f"{v:+.2f}" if isinstance(v, float) else str(v)


def main() -> int:
    ap = argparse.ArgumentParser(description="Delta table across result records.")
    ap.add_argument("--runs", nargs="+", required=True, help="result*.json files")
    ap.add_argument("--csv", default=None, help="also write the table as CSV")
    args = ap.parse_args()

    console = Console()
    records = [load_record(p) for p in args.runs]
    try:
        df = compare(records)
    except ValueError as e:
        console.print(f"[red]{e}[/red]")
        return 2

    table = Table(title=f"config {records[0].config_hash}")
    table.add_column("run")
    table.add_column("method")
    table.add_column("status")
    for m in METRICS:
        table.add_column(m, justify="right")
        table.add_column(f"Δ{m}", justify="right")
    for _, row in df.iterrows():
        cells = [str(row["name"] or row["run_id"]), str(row["method"]), str(row["status"])]
        for m in METRICS:
            v = row[m]
            cells.append("-" if v is None or v != v else f"{float(v):.4g}")
            cells.append(_cell(row[f"delta_{m}"]))
        table.add_row(*cells)
    console.print(table)

    if args.csv:
        df.to_csv(args.csv, index=False)
    return 0


if __name__ == "__main__":
    sys.exit(main())
