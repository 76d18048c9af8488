"""Report suite over model predictions: overall and per-language weighted
metrics, per-label error rates, aspect-capacity sweeps, and run deltas."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal

from .corpus import LABELS
from .errors import DataError
from .srl_metrics import pct


@dataclass(frozen=True)
class Prediction:
    """One scored example, with the metadata the breakdowns group on."""

    pair_id: str
    predicted: str
    gold: str
    lang: str
    predicates1: int = 0
    predicates2: int = 0

    def __post_init__(self):
        if self.predicted not in LABELS or self.gold not in LABELS:
            raise DataError(
                f"prediction {self.pair_id!r} has labels outside {LABELS}"
            )


def confusion_from_ids(golds, preds) -> list[list[int]]:
    """3x3 confusion matrix, gold rows x predicted columns."""
    if len(golds) != len(preds):
        raise DataError("gold/prediction length mismatch")
    n = len(LABELS)
    cm = [[0] * n for _ in range(n)]
    for g, p in zip(golds, preds):
        cm[g][p] += 1
    return cm


def confusion_matrix(predictions) -> list[list[int]]:
    golds = [LABELS.index(p.gold) for p in predictions]
    preds = [LABELS.index(p.predicted) for p in predictions]
    return confusion_from_ids(golds, preds)


def accuracy_from_confusion(cm) -> float:
    total = sum(sum(row) for row in cm)
    if total == 0:
        raise DataError("empty confusion matrix")
    return sum(cm[i][i] for i in range(len(cm))) / total


def class_prf_from_confusion(cm):
    """Per-class (precision, recall, f1, support) from the confusion matrix."""
    out = {}
    for i, label in enumerate(LABELS):
        tp = cm[i][i]
        support = sum(cm[i])
        predicted = sum(row[i] for row in cm)
        p = tp / predicted if predicted else 0.0
        r = tp / support if support else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        out[label] = (p, r, f1, support)
    return out

def weighted_prf_from_confusion(cm):
    """Support-weighted average of the per-class precision/recall/f1."""
    per_class = class_prf_from_confusion(cm)
    total = sum(support for _, _, _, support in per_class.values())
    if total == 0:
        raise DataError("empty confusion matrix")
    w_p = sum(p * s for p, _, _, s in per_class.values()) / total
    w_r = sum(r * s for _, r, _, s in per_class.values()) / total
    w_f1 = sum(f * s for _, _, f, s in per_class.values()) / total
    return w_p, w_r, w_f1


@dataclass
class MetricReport:
    """Accuracy plus weighted P/R/F1 and the per-class / per-language /
    per-label / per-predicate-count breakdowns, all stored as fractions."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int
    per_class: dict[str, dict] = field(default_factory=dict)
    per_label_error: dict[str, float] = field(default_factory=dict)
    by_predicate_count: dict[int, dict] = field(default_factory=dict)
    per_language: dict[str, "MetricReport"] | None = None
    per_m_f1: dict[int, float] | None = None

    def to_json_dict(self) -> dict:
        out = {
            "accuracy": pct(self.accuracy),
            "precision": pct(self.precision),
            "recall": pct(self.recall),
            "f1": pct(self.f1),
            "support": self.support,
            "per_class": {
                label: {
                    "precision": pct(vals["precision"]),
                    "recall": pct(vals["recall"]),
                    "f1": pct(vals["f1"]),
                    "support": vals["support"],
                }
                for label, vals in self.per_class.items()
            },
            "per_label_error": {
                label: pct(err) for label, err in self.per_label_error.items()
            },
            "by_predicate_count": {
                str(count): {"support": v["support"], "accuracy": pct(v["accuracy"])}
                for count, v in sorted(self.by_predicate_count.items())
            },
        }
        if self.per_language is not None:
            out["per_language"] = {
                lang: rep.to_json_dict() for lang, rep in sorted(self.per_language.items())
            }
        if self.per_m_f1 is not None:
            out["per_m_f1"] = {str(m): pct(f1) for m, f1 in sorted(self.per_m_f1.items())}
        return out


def per_label_error(predictions) -> dict[str, float]:
    """Fraction of wrong predictions among each gold label's examples."""
    totals = {label: 0 for label in LABELS}
    wrong = {label: 0 for label in LABELS}
    for p in predictions:
        totals[p.gold] += 1
        if p.predicted != p.gold:
            wrong[p.gold] += 1
    return {
        label: (wrong[label] / totals[label]) if totals[label] else 0.0
        for label in LABELS
    }


def overall_metrics(predictions) -> MetricReport:
    """Accuracy and support-weighted P/R/F1 from the 3x3 confusion matrix."""
    predictions = list(predictions)
    if not predictions:
        raise DataError("cannot score zero predictions")
    cm = confusion_matrix(predictions)
    per_class = {
        label: {"precision": p, "recall": r, "f1": f, "support": s}
        for label, (p, r, f, s) in class_prf_from_confusion(cm).items()
    }
    w_p, w_r, w_f1 = weighted_prf_from_confusion(cm)

    by_count: dict[int, dict] = {}
    for p in predictions:
        count = max(p.predicates1, p.predicates2)
        slot = by_count.setdefault(count, {"support": 0, "correct": 0})
        slot["support"] += 1
        slot["correct"] += int(p.predicted == p.gold)
    by_predicate_count = {
        count: {"support": v["support"], "accuracy": v["correct"] / v["support"]}
        for count, v in by_count.items()
    }

    return MetricReport(
        accuracy=accuracy_from_confusion(cm),
        precision=w_p,
        recall=w_r,
        f1=w_f1,
        support=len(predictions),
        per_class=per_class,
        per_label_error=per_label_error(predictions),
        by_predicate_count=by_predicate_count,
    )


def per_language(predictions) -> dict[str, MetricReport]:
    """Partition by language, then score each partition on its own."""
    groups: dict[str, list[Prediction]] = {}
    for p in predictions:
        groups.setdefault(p.lang, []).append(p)
    return {lang: overall_metrics(group) for lang, group in sorted(groups.items())}


def full_report(predictions) -> MetricReport:
    report = overall_metrics(predictions)
    report.per_language = per_language(predictions)
    return report


def aspect_sweep(run_for_m, m_values) -> dict[int, float]:
    """F1 per aspect capacity; `run_for_m(m)` retrains/evaluates and
    returns the test F1 fraction for that capacity."""
    m_values = list(m_values)
    if not m_values:
        raise DataError("empty sweep")
    if any(m < 1 or m > 5 for m in m_values):
        raise DataError(f"sweep values must lie in [1, 5], got {m_values}")
    return {m: run_for_m(m) for m in m_values}


def _delta(a, b):
    return float(Decimal(repr(a)) - Decimal(repr(b)))


def compare_runs(report_a: dict, report_b: dict) -> dict:
    """Elementwise a-minus-b over two serialized reports of equal schema."""
    if sorted(report_a) != sorted(report_b):
        raise DataError(
            f"report schemas differ: {sorted(report_a)} vs {sorted(report_b)}"
        )
    out = {}
    for key, value_a in report_a.items():
        value_b = report_b[key]
        if isinstance(value_a, dict) and isinstance(value_b, dict):
            out[key] = compare_runs(value_a, value_b)
        elif isinstance(value_a, (int, float)) and isinstance(value_b, (int, float)):
            out[key] = _delta(value_a, value_b)
        else:
            raise DataError(f"cannot diff field {key!r}")
    return out


_TABLE_COLUMNS = ("Accuracy", "Precision", "Recall", "F1-score")


def render_table(rows: dict[str, dict]) -> str:
    """Aligned text table, one row per run name, metric columns in percent."""
    name_width = max([len("Model")] + [len(name) for name in rows])
    header = ["Model".ljust(name_width)] + [c.rjust(10) for c in _TABLE_COLUMNS]
    lines = ["  ".join(header)]
    keys = ("accuracy", "precision", "recall", "f1")
    for name, report in rows.items():
        cells = [name.ljust(name_width)]
        for key in keys:
            value = report.get(key)
            cells.append(("-" if value is None else f"{value:.2f}").rjust(10))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
