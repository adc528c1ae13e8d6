"""Per-class precision/recall/F1 reporting, table rendering, and report comparison."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .manifest import CLASS_ORDER, ClassLabel

N_CLASSES = len(CLASS_ORDER)


@dataclass(frozen=True)
class ClassMetrics:
    label: ClassLabel
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    """Per-class metrics plus macro aggregates; rows follow CLASS_ORDER."""

    per_class: tuple[ClassMetrics, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    mode: str
    seed: int
    confusion: Optional[np.ndarray] = None  # (5, 5); rows true, columns predicted

    @property
    def total(self) -> int:
        return sum(row.support for row in self.per_class)

    def row(self, label: ClassLabel) -> ClassMetrics:
        return self.per_class[int(label)]


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int]) -> np.ndarray:
    """Count matrix with rows = true class, columns = predicted class."""
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(y_true, y_pred, strict=True):
        cm[int(t), int(p)] += 1
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def per_class_metrics(cm: np.ndarray, mode: str = "baseline", seed: int = 0) -> EvalReport:
    """Precision/recall/F1/support per class from a confusion matrix.

    0/0 cells are defined as 0; F1 is always the harmonic mean of the
    computed precision and recall.
    """
    cm = np.asarray(cm)
    if cm.shape != (N_CLASSES, N_CLASSES):
        raise ValueError(f"expected a {N_CLASSES}x{N_CLASSES} confusion matrix, got {cm.shape}")
    rows = []
    for label in CLASS_ORDER:
        i = int(label)
        tp = float(cm[i, i])
        precision = _safe_div(tp, float(cm[:, i].sum()))
        recall = _safe_div(tp, float(cm[i, :].sum()))
        f1 = _safe_div(2 * precision * recall, precision + recall)
        rows.append(
            ClassMetrics(label=label, precision=precision, recall=recall, f1=f1, support=int(cm[i, :].sum()))
        )
    return EvalReport(
        per_class=tuple(rows),
        macro_precision=float(np.mean([r.precision for r in rows])),
        macro_recall=float(np.mean([r.recall for r in rows])),
        macro_f1=float(np.mean([r.f1 for r in rows])),
        mode=mode,
        seed=seed,
        confusion=cm.copy(),
    )


def report_from_rows(
    rows: Sequence[tuple[ClassLabel, float, float, float, int]],
    mode: str = "baseline",
    seed: int = 0,
) -> EvalReport:
    """Build a report from literal (label, P, R, F1, support) rows.

    Values are taken as given - nothing is recomputed - so published tables
    can be compared verbatim even when their printed F1 disagrees with
    2PR/(P+R).
    """
    by_label = {label: None for label in CLASS_ORDER}
    for label, p, r, f1, support in rows:
        by_label[label] = ClassMetrics(label, float(p), float(r), float(f1), int(support))
    missing = [l.name for l, v in by_label.items() if v is None]
    if missing:
        raise ValueError(f"missing rows for classes: {missing}")
    ordered = tuple(by_label[label] for label in CLASS_ORDER)
    return EvalReport(
        per_class=ordered,
        macro_precision=float(np.mean([r.precision for r in ordered])),
        macro_recall=float(np.mean([r.recall for r in ordered])),
        macro_f1=float(np.mean([r.f1 for r in ordered])),
        mode=mode,
        seed=seed,
    )


# --- rendering ----------------------------------------------------------------

_HEADER = f"{'Category':<10}{'Precision':>10}{'Recall':>8}{'F1-Score':>10}{'Support':>9}"


def render_report(report: EvalReport) -> str:
    """Fixed-column text table, metrics at 2 d.p., rows in class order."""
    lines = [_HEADER]
    if report.total > 0:
        for row in report.per_class:
            lines.append(
                f"{row.label.name:<10}{row.precision:>10.2f}{row.recall:>8.2f}"
                f"{row.f1:>10.2f}{row.support:>9d}"
            )
        lines.append(
            f"{'macro':<10}{report.macro_precision:>10.2f}{report.macro_recall:>8.2f}"
            f"{report.macro_f1:>10.2f}{report.total:>9d}"
        )
    else:
        lines.append(f"{'macro':<10}{'n/a':>10}{'n/a':>8}{'n/a':>10}{0:>9d}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    """Machine-readable twin: label,precision,recall,f1,support plus a macro row."""
    lines = [
        f"# mode = {report.mode}",
        f"# seed = {report.seed}",
        "label,precision,recall,f1,support",
    ]
    for row in report.per_class:
        lines.append(f"{row.label.name},{row.precision:.6f},{row.recall:.6f},{row.f1:.6f},{row.support}")
    lines.append(
        f"macro,{report.macro_precision:.6f},{report.macro_recall:.6f},{report.macro_f1:.6f},{report.total}"
    )
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> EvalReport:
    """Parse either the text table or the CSV twin back into a report."""
    mode, seed = "baseline", 0
    rows: list[tuple[ClassLabel, float, float, float, int]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("mode"):
                mode = body.split("=", 1)[1].strip()
            elif body.startswith("seed"):
                seed = int(body.split("=", 1)[1].strip())
            continue
        fields = [f.strip() for f in (line.split(",") if "," in line else line.split())]
        if not fields or fields[0] in ("label", "Category", "macro"):
            continue
        if fields[0] not in ClassLabel.__members__:
            continue
        label = ClassLabel[fields[0]]
        rows.append((label, float(fields[1]), float(fields[2]), float(fields[3]), int(fields[4])))
    if len(rows) != N_CLASSES:
        raise ValueError(f"expected {N_CLASSES} class rows, parsed {len(rows)}")
    return report_from_rows(rows, mode=mode, seed=seed)


def write_report(report: EvalReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / "report.txt"
    csv = out_dir / "report.csv"
    txt.write_text(render_report(report), encoding="utf-8")
    csv.write_text(report_csv(report), encoding="utf-8")
    if report.confusion is not None:
        header = "true\\pred," + ",".join(l.name for l in CLASS_ORDER)
        lines = [header]
        for label in CLASS_ORDER:
            lines.append(label.name + "," + ",".join(str(int(v)) for v in report.confusion[int(label)]))
        (out_dir / "confusion.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return txt, csv


# --- comparison ---------------------------------------------------------------


@dataclass(frozen=True)
class ClassDelta:
    label: ClassLabel
    delta_precision: float
    delta_recall: float
    delta_f1: float


@dataclass(frozen=True)
class ComparisonReport:
    per_class: tuple[ClassDelta, ...]
    delta_macro_precision: float
    delta_macro_recall: float
    delta_macro_f1: float
    improved_all_metrics: tuple[ClassLabel, ...]  # classes where P, R, and F1 all rose


def compare(a: EvalReport, b: EvalReport) -> ComparisonReport:
    """Per-class and macro deltas (b - a); inputs must share the test split."""
    supports_a = [r.support for r in a.per_class]
    supports_b = [r.support for r in b.per_class]
    if supports_a != supports_b:
        raise ValueError(f"reports cover different test sets: supports {supports_a} vs {supports_b}")
    deltas = []
    improved = []
    for ra, rb in zip(a.per_class, b.per_class):
        delta = ClassDelta(
            label=ra.label,
            delta_precision=rb.precision - ra.precision,
            delta_recall=rb.recall - ra.recall,
            delta_f1=rb.f1 - ra.f1,
        )
        deltas.append(delta)
        if delta.delta_precision > 0 and delta.delta_recall > 0 and delta.delta_f1 > 0:
            improved.append(ra.label)
    return ComparisonReport(
        per_class=tuple(deltas),
        delta_macro_precision=b.macro_precision - a.macro_precision,
        delta_macro_recall=b.macro_recall - a.macro_recall,
        delta_macro_f1=b.macro_f1 - a.macro_f1,
        improved_all_metrics=tuple(improved),
    )


def comparison_csv(cmp: ComparisonReport) -> str:
    lines = ["label,delta_p,delta_r,delta_f1"]
    for d in cmp.per_class:
        lines.append(f"{d.label.name},{d.delta_precision:.6f},{d.delta_recall:.6f},{d.delta_f1:.6f}")
    lines.append(
        f"macro,{cmp.delta_macro_precision:.6f},{cmp.delta_macro_recall:.6f},{cmp.delta_macro_f1:.6f}"
    )
    return "\n".join(lines) + "\n"


def render_comparison(cmp: ComparisonReport) -> str:
    lines = [f"{'Category':<10}{'dP':>8}{'dR':>8}{'dF1':>8}"]
    for d in cmp.per_class:
        lines.append(
            f"{d.label.name:<10}{d.delta_precision:>+8.2f}{d.delta_recall:>+8.2f}{d.delta_f1:>+8.2f}"
        )
    lines.append(
        f"{'macro':<10}{cmp.delta_macro_precision:>+8.2f}{cmp.delta_macro_recall:>+8.2f}"
        f"{cmp.delta_macro_f1:>+8.2f}"
    )
    improved = ", ".join(l.name for l in cmp.improved_all_metrics) or "none"
    lines.append(f"improved on all metrics: {improved}")
    return "\n".join(lines) + "\n"


def write_comparison(cmp: ComparisonReport, out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / "comparison.txt"
    csv = out_dir / "comparison.csv"
    txt.write_text(render_comparison(cmp), encoding="utf-8")
    csv.write_text(comparison_csv(cmp), encoding="utf-8")
    return txt, csv
