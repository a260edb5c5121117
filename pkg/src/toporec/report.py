"""Run reports: delimited per-object rows, text summaries, and figures.

Every report writer emits a CSV, a human-readable summary, and matplotlib
figures rendered to PNG files in the same directory. CSV and summary
content is deterministic for identical results; figures are rendered with
the Agg backend so reports work headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save_fig(fig, path: Path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def write_training_report(out_dir, histories: dict, accuracies: dict,
                          n_samples: int) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "training.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch"] + [f"loss_{name}" for name in sorted(histories)])
        for epoch in range(len(next(iter(histories.values())))):
            writer.writerow([epoch + 1] + [f"{histories[name][epoch]:.6f}"
                                           for name in sorted(histories)])
    with open(out_dir / "training_summary.txt", "w") as fh:
        fh.write(f"training samples: {n_samples}\n")
        for name in sorted(histories):
            fh.write(f"{name}: final loss {histories[name][-1]:.6f}, "
                     f"train accuracy {accuracies[name]:.4f}\n")

    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(histories):
        ax.plot(range(1, len(histories[name]) + 1), histories[name], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss")
    _save_fig(fig, out_dir / "training_loss.png")


def write_recognition_report(out_dir, results, warnings) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "recognition.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "label", "confidence", "occluded",
                         "model", "n_points"])
        for r in results:
            writer.writerow([r.instance_id, r.label, f"{r.confidence:.6f}",
                             int(r.occluded), r.model, r.n_points])
    with open(out_dir / "recognition_summary.txt", "w") as fh:
        fh.write(f"instances recognized: {len(results)}\n")
        for r in results:
            flag = " (occluded)" if r.occluded else ""
            fh.write(f"  instance {r.instance_id}: {r.label} "
                     f"p={r.confidence:.4f} via {r.model}{flag}\n")
        for w in warnings:
            fh.write(f"warning: {w}\n")

    if results:
        fig, ax = plt.subplots(figsize=(6, 3 + 0.3 * len(results)))
        names = [f"#{r.instance_id} {r.label}" for r in results]
        confidences = [r.confidence for r in results]
        colors = ["tab:orange" if r.occluded else "tab:blue" for r in results]
        ax.barh(names, confidences, color=colors)
        ax.set_xlim(0, 1)
        ax.set_xlabel("fused confidence")
        ax.set_title("scene recognition")
        _save_fig(fig, out_dir / "recognition_confidence.png")


def _confusion(rows, labels):
    index = {lab: i for i, lab in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for r in rows:
        matrix[index[r["truth"]], index[r["predicted"]]] += 1
    return matrix


def write_evaluation_report(out_dir, report: dict) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report["rows"]
    summary = report["summary"]
    with open(out_dir / "evaluation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "truth", "predicted", "confidence", "model",
                         "occlusion_fraction", "correct"])
        for r in rows:
            writer.writerow([r["file"], r["truth"], r["predicted"],
                             f"{r['confidence']:.6f}", r["model"],
                             r["occlusion_fraction"], int(r["correct"])])
    with open(out_dir / "evaluation_summary.txt", "w") as fh:
        fh.write(f"samples: {summary['n']}\n")
        fh.write(f"overall accuracy: {summary['overall']:.4f}\n")
        for label, acc in summary["per_class"].items():
            fh.write(f"  {label}: {acc:.4f}\n")

    labels = sorted({r["truth"] for r in rows} | {r["predicted"] for r in rows})
    if rows and labels:
        matrix = _confusion(rows, labels)
        fig, ax = plt.subplots(figsize=(1.2 + 0.6 * len(labels),
                                        1.0 + 0.6 * len(labels)))
        im = ax.imshow(matrix, cmap="Blues")
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("truth")
        for i in range(len(labels)):
            for j in range(len(labels)):
                if matrix[i, j]:
                    ax.text(j, i, str(matrix[i, j]), ha="center", va="center",
                            fontsize=8)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title("confusion matrix")
        _save_fig(fig, out_dir / "confusion_matrix.png")

        per_class = summary["per_class"]
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar(list(per_class.keys()), list(per_class.values()))
        ax.set_ylim(0, 1)
        ax.set_ylabel("accuracy")
        ax.tick_params(axis="x", rotation=45)
        ax.set_title("per-class accuracy")
        _save_fig(fig, out_dir / "per_class_accuracy.png")


def write_fold_report(out_dir, report: dict) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "folds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "accuracy"])
        for k, acc in enumerate(report["fold_accuracies"]):
            writer.writerow([k, f"{acc:.6f}"])
    with open(out_dir / "folds_summary.txt", "w") as fh:
        for k, acc in enumerate(report["fold_accuracies"]):
            fh.write(f"fold {k}: {acc:.4f}\n")
        fh.write(f"mean: {report['mean']:.4f}\n")
        fh.write(f"std: {report['std']:.4f}\n")

    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar([str(k) for k in range(len(report["fold_accuracies"]))],
           report["fold_accuracies"])
    ax.axhline(report["mean"], color="tab:red", linestyle="--",
               label=f"mean {report['mean']:.3f}")
    ax.set_ylim(0, 1)
    ax.set_xlabel("fold")
    ax.set_ylabel("accuracy")
    ax.legend()
    ax.set_title("cross-validation accuracy")
    _save_fig(fig, out_dir / "fold_accuracy.png")
