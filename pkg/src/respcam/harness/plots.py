"""SVG summary plots for benchmark reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def rate_histogram(rates_bpm: list[float], out_path: str | Path, bins: int = 20) -> None:
    """Respiration-rate distribution of a dataset or evaluation run."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(rates_bpm, bins=bins, color="#4878cf", edgecolor="white")
    ax.set_xlabel("respiration rate (BPM)")
    ax.set_ylabel("clips")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def fold_mae_box(per_fold_mae: list[list[float]], out_path: str | Path) -> None:
    """Per-fold MAE distribution across test subjects."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.boxplot(per_fold_mae, showmeans=True, meanline=True)
    ax.set_xlabel("fold")
    ax.set_ylabel("MAE (BPM)")
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def split_mae_distribution(values: list[float], out_path: str | Path) -> None:
    """Distribution of a metric over exhaustively enumerated splits."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.violinplot([values], showextrema=False)
    ax.boxplot([values], widths=0.15)
    ax.set_ylabel("MAE (BPM)")
    ax.set_xticks([])
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def report_plots(report: dict, out_dir: str | Path) -> list[Path]:
    """Write the standard plots for an evaluation report; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    truth_rates = [c["truth_bpm"] for c in report["clips"] if c["truth_bpm"] is not None]
    if truth_rates:
        p = out_dir / "rate_histogram.svg"
        rate_histogram(truth_rates, p)
        written.append(p)

    per_fold = []
    for fold in report["folds"]:
        maes = [r["mae"] for r in fold["subjects"].values() if r["mae"] is not None]
        per_fold.append(maes or [0.0])
    if per_fold:
        p = out_dir / "fold_mae_box.svg"
        fold_mae_box(per_fold, p)
        written.append(p)
    return written
