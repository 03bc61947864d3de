"""Report emission: metrics JSON, ROC as CSV + standalone SVG, rendered PNG
figures, and cross-method comparison tables."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .metrics import MetricsReport


def emit_report(report: MetricsReport, path: str | Path, extra: dict | None = None) -> None:
    """Write metrics.json; ``extra`` merges additional provenance fields
    (e.g. the resolved-config digest) into the document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_roc_csv(points: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, thr in points:
        # repr of builtin floats round-trips exactly; numpy scalars do not
        lines.append(f"{float(fpr)!r},{float(tpr)!r},{float(thr)!r}")
    path.write_text("\n".join(lines) + "\n")


def emit_roc_svg(points: np.ndarray, path: str | Path, size: int = 480) -> None:
    """Hand-rolled SVG so the artifact has no renderer dependency: axes as
    lines, the chance diagonal dashed, and the curve as a single polyline
    with one vertex per ROC point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    margin = 48
    span = size - 2 * margin

    def sx(fpr: float) -> float:
        return margin + fpr * span

    def sy(tpr: float) -> float:
        return size - margin - tpr * span

    verts = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in points)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" '
        f'y2="{size - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" '
        f'stroke="black"/>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" '
        f'y2="{margin}" stroke="#999" stroke-dasharray="6,4"/>',
        f'<polyline points="{verts}" fill="none" stroke="#c33" stroke-width="2"/>',
        f'<text x="{size // 2}" y="{size - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">false positive rate</text>',
        f'<text x="14" y="{size // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14" transform="rotate(-90 14 {size // 2})">true positive rate</text>',
        "</svg>",
    ]
    path.write_text("\n".join(parts) + "\n")


def plot_roc_png(
    points: np.ndarray, path: str | Path, label: str = "", auc: float | None = None
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 5))
    name = label or "ROC"
    if auc is not None:
        name = f"{name} (AUC {auc:.4f})"
    ax.plot(points[:, 0], points[:, 1], color="#c0392b", lw=2, label=name)
    ax.plot([0, 1], [0, 1], color="#999999", ls="--", lw=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_metrics_bundle(
    report: MetricsReport, out_dir: str | Path, label: str = "", extra: dict | None = None
) -> dict:
    """metrics.json + roc.csv + roc.svg + roc.png in one directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(report, out_dir / "metrics.json", extra=extra)
    emit_roc_csv(report.roc, out_dir / "roc.csv")
    emit_roc_svg(report.roc, out_dir / "roc.svg")
    plot_roc_png(report.roc, out_dir / "roc.png", label=label, auc=report.auc)
    return {
        "metrics": str(out_dir / "metrics.json"),
        "roc_csv": str(out_dir / "roc.csv"),
        "roc_svg": str(out_dir / "roc.svg"),
        "roc_png": str(out_dir / "roc.png"),
    }


COMPARISON_COLUMNS = (
    "run",
    "mode",
    "accuracy_imposter",
    "accuracy_genuine",
    "accuracy_entire",
    "f1_entire",
    "auc",
    "eer",
)


def comparison_rows(named_reports: dict[str, MetricsReport]) -> list[dict]:
    rows = []
    for name in sorted(named_reports):
        r = named_reports[name]
        rows.append(
            {
                "run": name,
                "mode": r.mode,
                "accuracy_imposter": r.accuracy["imposter"],
                "accuracy_genuine": r.accuracy["genuine"],
                "accuracy_entire": r.accuracy["entire"],
                "f1_entire": r.f1["entire"],
                "auc": r.auc,
                "eer": r.eer,
            }
        )
    return rows


def emit_comparison(named_reports: dict[str, MetricsReport], out_dir: str | Path) -> dict:
    """Cross-run comparison as CSV plus a bar-chart PNG of entire-data accuracy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(named_reports)

    csv_path = out_dir / "comparison.csv"
    lines = [",".join(COMPARISON_COLUMNS)]
    for row in rows:
        cells = []
        for col in COMPARISON_COLUMNS:
            v = row[col]
            cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    png_path = out_dir / "comparison.png"
    names = [r["run"] for r in rows]
    accs = [r["accuracy_entire"] for r in rows]
    aucs = [r["auc"] for r in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(5, 1.4 * len(names)), 4))
    ax.bar(x - 0.2, accs, width=0.4, label="accuracy (entire)", color="#2980b9")
    ax.bar(x + 0.2, aucs, width=0.4, label="AUC", color="#c0392b")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.axhline(0.75, color="#777", ls=":", lw=1)  # always-imposter baseline at 1:3
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return {"csv": str(csv_path), "png": str(png_path)}
