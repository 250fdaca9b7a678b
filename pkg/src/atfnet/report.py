"""Report writers: delimited text files plus matplotlib figures.

Every report path gets a machine-readable TSV (``key<TAB>value`` rows, keys
documented in the README) next to the rendered PNG figures.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataio import DatasetStats
from .metrics import MetricsReport, THRESHOLDS

METRIC_COLUMNS = ("mae", "max_f_measure", "s_measure", "e_measure")


def write_stats_report(stats: DatasetStats, out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = {
        "frames": stats.frame_count,
        "size_ratio_mean": f"{stats.size_ratio_mean:.6f}",
        "size_ratio_min": f"{stats.size_ratio_min:.6f}",
        "size_ratio_max": f"{stats.size_ratio_max:.6f}",
        "histogram_bins": stats.size_ratio_histogram.size,
    }
    lines = [f"{k}\t{v}" for k, v in rows.items()]
    for i, mass in enumerate(stats.size_ratio_histogram):
        lo, hi = stats.bin_edges[i], stats.bin_edges[i + 1]
        lines.append(f"histogram[{lo:.3f},{hi:.3f})\t{mass:.6f}")
    (out_dir / "stats.tsv").write_text("\n".join(lines) + "\n")

    fig, ax = plt.subplots(figsize=(6, 4))
    centers = (stats.bin_edges[:-1] + stats.bin_edges[1:]) / 2
    ax.bar(centers, stats.size_ratio_histogram, width=np.diff(stats.bin_edges), edgecolor="k")
    ax.set_xlabel("foreground fraction")
    ax.set_ylabel("fraction of frames")
    ax.set_title(f"object size distribution (mean {stats.size_ratio_mean:.4f})")
    fig.tight_layout()
    fig.savefig(out_dir / "size_histogram.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(stats.center_bias_map, cmap="magma", vmin=0.0, vmax=max(stats.center_bias_map.max(), 1e-6))
    fig.colorbar(im, ax=ax, label="mean mask value")
    ax.set_title("center bias (mean of all masks)")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_dir / "center_bias.png", dpi=120)
    plt.close(fig)

    return rows


def write_metrics_report(report: MetricsReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    # line-oriented table
    header = f"{'video':<16}" + "".join(f"{c:>14}" for c in METRIC_COLUMNS) + f"{'frames':>8}"
    lines = [header, "-" * len(header)]
    for vid, row in report.per_video.items():
        lines.append(
            f"{vid:<16}" + "".join(f"{row[c]:>14.6f}" for c in METRIC_COLUMNS)
            + f"{row['frames']:>8d}"
        )
    lines.append("-" * len(header))
    ov = report.overall
    lines.append(
        f"{'overall':<16}" + "".join(f"{ov[c]:>14.6f}" for c in METRIC_COLUMNS)
        + f"{ov['frames']:>8d}"
    )
    if ov["empty_gt_frames"]:
        lines.append(f"# {ov['empty_gt_frames']} frames with empty ground truth "
                     "excluded from max_f_measure")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")

    # machine-readable key-value rows
    kv = []
    for key, val in report.constants.items():
        kv.append(f"constants.{key}\t{val}")
    for col in METRIC_COLUMNS + ("frames", "empty_gt_frames"):
        kv.append(f"overall.{col}\t{ov[col]}")
    for vid, row in report.per_video.items():
        for col in METRIC_COLUMNS + ("frames", "empty_gt_frames"):
            kv.append(f"video.{vid}.{col}\t{row[col]}")
    (out_dir / "report.tsv").write_text("\n".join(kv) + "\n")

    np.savetxt(out_dir / "f_curve.txt", np.column_stack([THRESHOLDS, report.f_curve]),
               header="threshold mean_f_measure")
    np.savetxt(out_dir / "e_curve.txt", np.column_stack([THRESHOLDS, report.e_curve]),
               header="threshold mean_e_alignment")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(THRESHOLDS, report.f_curve, label="F-measure")
    ax.plot(THRESHOLDS, report.e_curve, label="E alignment")
    ax.set_xlabel("binarization threshold")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.set_title("threshold sweeps (frame-averaged)")
    fig.tight_layout()
    fig.savefig(out_dir / "threshold_curves.png", dpi=120)
    plt.close(fig)


def write_training_curves(records, out_dir: str | Path) -> None:
    if not records:
        return
    out_dir = Path(out_dir)
    steps = [r.step for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r.loss for r in records], label="total")
    for key in records[0].terms:
        ax.plot(steps, [r.terms[key] for r in records], alpha=0.6, label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "loss_curves.png", dpi=120)
    plt.close(fig)
