from __future__ import annotations

from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.eval.compare import compare  # noqa: E402
from src.schemas.records import ResultRecord  # noqa: E402


def _label(r: ResultRecord) -> str:
    return f"{r.name or r.run_id}:{r.method}"


def _save(fig: plt.Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_disentangle_curves(records: Sequence[ResultRecord], path: Path) -> Path:
    fig, (ax_om, ax_lsm) = plt.subplots(1, 2, figsize=(11, 4))
    for r in records:
        if r.om_trajectory:
            epochs = np.arange(1, len(r.om_trajectory) + 1)
            ax_om.plot(epochs, r.om_trajectory, label=_label(r))
            ax_lsm.plot(epochs, r.lsm_trajectory, label=_label(r))
    c = next((len(r.per_class_acc) for r in records if r.per_class_acc), 0)
    if c:
        ax_lsm.axhline(1.0 / c, color="grey", linestyle="--", linewidth=1, label="1/C")
    ax_om.set_title("OM")
    ax_lsm.set_title("LSM")
    for ax in (ax_om, ax_lsm):
        ax.set_xlabel("epoch")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=7)
    return _save(fig, path)


def plot_accuracy_bars(records: Sequence[ResultRecord], path: Path) -> Path:
    groups = ("overall", "head", "middle", "tail")
    x = np.arange(len(groups))
    width = 0.8 / max(len(records), 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    for i, r in enumerate(records):
        values = [r.overall_acc, r.head_acc, r.middle_acc, r.tail_acc]
        heights = [np.nan if v is None else v for v in values]
        ax.bar(x + i * width, heights, width, label=_label(r))
    ax.set_xticks(x + width * (len(records) - 1) / 2)
    ax.set_xticklabels(groups)
    ax.set_ylabel("top-1 accuracy (%)")
    ax.set_ylim(0, 100)
    if records:
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_flip_heatmap(record: ResultRecord, path: Path) -> Path:
    """Raw per-class flip counts, true class on rows, observed class on columns."""
    counts = np.asarray(record.flip_counts or [[0]], dtype=np.int64)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(counts, cmap="viridis")
    fig.colorbar(im, ax=ax, label="# flipped")
    ax.set_xlabel("observed class")
    ax.set_ylabel("true class")
    ax.set_title(f"T2H flips ({_label(record)})")
    return _save(fig, path)


def emit_plots(records: Sequence[ResultRecord], outdir: str | Path) -> List[Path]:
    out = Path(outdir)
    paths = [
        plot_disentangle_curves(records, out / "om_lsm.png"),
        plot_accuracy_bars(records, out / "accuracy.png"),
    ]
    with_flips = [r for r in records if r.flip_counts]
    if with_flips:
        paths.append(plot_flip_heatmap(with_flips[0], out / "flip_counts.png"))
    return paths


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "-"
    return f"{v:.2f}" if isinstance(v, float) else str(v)


def build_report(records: Sequence[ResultRecord], outdir: str | Path) -> Path:
    """Plots plus report.md, built from stored records only."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    plots = emit_plots(records, out)

    lines = ["# T2H noise experiment report\n"]
    lines.append(f"- Runs: **{len(records)}**")
    lines.append(f"- Failed: **{sum(r.status == 'failed' for r in records)}**\n")

    lines.append("## Runs\n")
    lines.append("| run | method | status | hash | overall | head | middle | tail | hit rate |")
    lines.append("|---|---|---|---|---|---|---|---|---|")
    for r in records:
        lines.append(
            f"| {r.name or r.run_id} | {r.method} | {r.status} | {r.config_hash} "
            f"| {_fmt(r.overall_acc)} | {_fmt(r.head_acc)} | {_fmt(r.middle_acc)} "
            f"| {_fmt(r.tail_acc)} | {_fmt(r.hit_rate)} |"
        )
    lines.append("")

    for h in sorted({r.config_hash for r in records}):
        group = [r for r in records if r.config_hash == h]
        if len(group) < 2:
            continue
        df = compare(group)
        lines.append(f"## Deltas for config {h} (against {_label(group[0])})\n")
        lines.append("| run | d_overall | d_tail | d_hit_rate |")
        lines.append("|---|---|---|---|")
        for _, row in df.iterrows():
            lines.append(
                f"| {row['name'] or row['run_id']}:{row['method']} "
                f"| {_fmt(row['delta_overall_acc'])} | {_fmt(row['delta_tail_acc'])} "
                f"| {_fmt(row['delta_hit_rate'])} |"
            )
        lines.append("")

    failed = [r for r in records if r.status == "failed"]
    if failed:
        lines.append("## Failures\n")
        for r in failed:
            lines.append(f"- {_label(r)}: stage `{r.failed_stage}`: {r.error}")
        lines.append("")

    lines.append("## Plots\n")
    for p in plots:
        lines.append(f"![{p.stem}]({p.name})")

    path = out / "report.md"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
