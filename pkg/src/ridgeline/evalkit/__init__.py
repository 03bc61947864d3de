"""Verification evaluation: scoring, metrics, and report emission."""

from .metrics import (
    MetricsReport,
    ScoreSet,
    confusion_at,
    eer,
    report,
    roc_curve,
    select_threshold,
)
from .reports import (
    emit_comparison,
    emit_report,
    emit_roc_csv,
    emit_roc_svg,
    plot_roc_png,
    write_metrics_bundle,
)
from .scoring import score_pairs

__all__ = [
    "MetricsReport",
    "ScoreSet",
    "confusion_at",
    "eer",
    "emit_comparison",
    "emit_report",
    "emit_roc_csv",
    "emit_roc_svg",
    "plot_roc_png",
    "report",
    "roc_curve",
    "score_pairs",
    "select_threshold",
    "write_metrics_bundle",
]
