"""CSV and SVG outputs: loss curves, tracking durations, purity sweeps."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "stssl"  # stable ids in SVG output

import matplotlib.pyplot as plt
import numpy as np

from .clustering import purity
from .config import Config
from .pipeline import preprocess_sequence
from .scene_io import FrameSequence
from .tracking import Trajectory, trajectory_lengths


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_loss_curves(log_path: str | Path, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = [json.loads(line) for line in Path(log_path).read_text().splitlines() if line]
    csv_path = out_dir / "loss_curves.csv"
    fields = ["step", "lr", "weight", "p2c", "inter", "total", "p2c_mean", "inter_mean", "skipped"]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(records)

    steps = [r["step"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(steps, [r["p2c_mean"] for r in records], label="point-to-cluster (per pair)")
    ax1.plot(steps, [r["inter_mean"] for r in records], label="inter-frame (per pair)")
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss per pair")
    ax1.legend()
    ax2.plot(steps, [r["total"] for r in records], label="total (weighted sum)")
    ax2.plot(steps, [r["weight"] for r in records], label="temporal weight", linestyle="--")
    ax2.set_xlabel("step")
    ax2.legend()
    fig.tight_layout()
    svg_path = out_dir / "loss_curves.svg"
    _save_svg(fig, svg_path)
    return csv_path, svg_path


def write_tracking_histogram(trajectories: list[Trajectory], out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lengths = trajectory_lengths(trajectories)
    csv_path = out_dir / "tracking_durations.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duration_frames", "n_trajectories"])
        if lengths.size:
            for value, count in zip(*np.unique(lengths, return_counts=True)):
                writer.writerow([int(value), int(count)])

    fig, ax = plt.subplots(figsize=(6, 4))
    if lengths.size:
        ax.hist(lengths, bins=np.arange(0.5, lengths.max() + 1.5, 1.0))
    ax.set_xlabel("trajectory duration (frames)")
    ax.set_ylabel("count")
    fig.tight_layout()
    svg_path = out_dir / "tracking_durations.svg"
    _save_svg(fig, svg_path)
    return csv_path, svg_path


def run_purity_sweep(
    seq: FrameSequence,
    cfg: Config,
    eps_values: list[float],
) -> list[dict]:
    """Re-cluster the sequence at each eps; aggregate cluster purity.

    The returned rows hold, per eps, the proportion of clusters whose
    dominant class covers at least 90% of their points.
    """
    rows = []
    for eps in eps_values:
        sweep_cfg = Config.from_dict(cfg.to_dict())
        sweep_cfg.dbscan.eps = float(eps)
        pre = preprocess_sequence(seq, sweep_cfg)
        pure_count = 0
        total = 0
        fractions = []
        for art in pre.frames:
            if art.cluster_set.n_clusters == 0:
                continue
            rep = purity(art.cluster_set, art.frame.labels)
            pure_count += int((rep.fractions >= rep.threshold).sum())
            total += art.cluster_set.n_clusters
            fractions.extend(rep.fractions.tolist())
        rows.append(
            {
                "eps": float(eps),
                "n_clusters": total,
                "proportion_pure": pure_count / total if total else 1.0,
                "min_fraction": min(fractions) if fractions else 1.0,
            }
        )
    return rows


def write_purity_sweep(rows: list[dict], out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "purity_sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["eps", "n_clusters", "proportion_pure", "min_fraction"])
        writer.writeheader()
        writer.writerows(rows)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r["eps"] for r in rows], [r["proportion_pure"] for r in rows], marker="o")
    ax.axhline(0.9, linestyle="--", linewidth=0.8)
    ax.set_xlabel("clustering distance threshold (m)")
    ax.set_ylabel("proportion of clusters >= 90% single class")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    svg_path = out_dir / "purity_vs_eps.svg"
    _save_svg(fig, svg_path)
    return csv_path, svg_path
