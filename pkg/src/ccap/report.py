"""Report emission: metric tables, plot-ready curve files, and figures.

The report path writes, under one output directory:

* ``report.json``       machine-readable metrics and run facts
* ``report.txt``        aligned five-metric table, one row per model
* ``curves/<model>_roc.tsv`` and ``..._pr.tsv``  two-column curve points
* ``figures/roc.png`` and ``figures/pr.png``     rendered overlays

Everything written is a pure function of the evaluation results, so equal
configs on equal inputs give byte-identical output trees.
"""

from __future__ import annotations

import json
import os
import re

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

METRIC_COLUMNS = ["Precision", "Recall", "F1-Score", "AUC", "Kappa"]


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def report_row(name: str, ev: EvalReport) -> dict:
    return {
        "name": name,
        "precision": ev.precision,
        "recall": ev.recall,
        "f1": ev.f1,
        "auc": ev.auc,
        "kappa": ev.kappa,
        "threshold": ev.threshold,
        "confusion": {
            "tp": ev.confusion.tp,
            "fp": ev.confusion.fp,
            "tn": ev.confusion.tn,
            "fn": ev.confusion.fn,
        },
        "degenerate": sorted(ev.degenerate),
    }


def render_table(rows: list[dict]) -> str:
    """Aligned text table with the five metric columns per model."""
    header = ["Model"] + METRIC_COLUMNS
    body = [
        [
            r["name"],
            f"{r['precision']:.4f}",
            f"{r['recall']:.4f}",
            f"{r['f1']:.4f}",
            f"{r['auc']:.4f}",
            f"{r['kappa']:.4f}",
        ]
        for r in rows
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(widths[i]) for i, c in enumerate(b)) for b in body]
    return "\n".join(lines) + "\n"


def _write_curve(path: str, points: np.ndarray, x_label: str, y_label: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {x_label}\t{y_label}\n")
        for x, y in points:
            fh.write(f"{x:.10g}\t{y:.10g}\n")


def _render_figure(path: str, named_curves, kind: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for name, pts in named_curves:
        ax.plot(pts[:, 0], pts[:, 1], linewidth=1.4, label=name)
    if kind == "roc":
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title("ROC curves")
    else:
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_title("Precision-recall curves")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right" if kind == "roc" else "upper right", fontsize=8)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_outputs(
    out_dir: str,
    report: dict,
    evaluations: list[tuple[str, EvalReport]],
    figures: bool = True,
) -> list[str]:
    """Write the report tree; returns the list of paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    path = os.path.join(out_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_table(report["models"]))
    written.append(path)

    curve_dir = os.path.join(out_dir, "curves")
    os.makedirs(curve_dir, exist_ok=True)
    for name, ev in evaluations:
        slug = slugify(name)
        roc_path = os.path.join(curve_dir, f"{slug}_roc.tsv")
        _write_curve(roc_path, ev.roc_points, "fpr", "tpr")
        pr_path = os.path.join(curve_dir, f"{slug}_pr.tsv")
        _write_curve(pr_path, ev.pr_points, "recall", "precision")
        written += [roc_path, pr_path]

    if figures:
        fig_dir = os.path.join(out_dir, "figures")
        os.makedirs(fig_dir, exist_ok=True)
        roc_png = os.path.join(fig_dir, "roc.png")
        _render_figure(roc_png, [(n, e.roc_points) for n, e in evaluations], "roc")
        pr_png = os.path.join(fig_dir, "pr.png")
        _render_figure(pr_png, [(n, e.pr_points) for n, e in evaluations], "pr")
        written += [roc_png, pr_png]
    return written


def render_profile(rows: list[dict], group_columns: list[str]) -> str:
    """Aligned text table for the profile command."""
    if not rows:
        return "(empty)\n"
    has_rate = "label_rate" in rows[0]
    header = group_columns + ["count"] + (["label_rate"] if has_rate else [])
    body = []
    for r in rows:
        line = [str(r[c]) for c in group_columns] + [str(r["count"])]
        if has_rate:
            line.append(f"{r['label_rate']:.4f}")
        body.append(line)
    widths = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(c.ljust(widths[i]) for i, c in enumerate(b)) for b in body]
    return "\n".join(lines) + "\n"
