"""Threshold-free ranking metrics: per-class one-vs-rest ROC-AUC and average
precision, macro-averaged with equal class weight, plus curve export and
averaging across cross-validation folds.

AUC follows the rank-statistic definition (tied pairs credit 0.5); AP is the
step-wise area under the precision-recall sweep with tied scores processed
as one block, no interpolation. Classes without both a positive and a
negative example are excluded from the macro mean and reported.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllClassesDegenerate, DegenerateClass, NonFiniteValue

# Published end-to-end supervised reference system (reported, never recomputed).
SUPERVISED_REFERENCE_AUC = {"elev": 0.8710, "ldc": 0.9570}


@dataclass
class ScoreMatrix:
    scores: np.ndarray  # (N, C) probabilities or logits; ranking is what matters
    labels: np.ndarray  # (N,) primary class indices
    overlap_sets: list | None = None  # per-row sets for any-overlap accuracy

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.labels.size:
            raise ValueError("scores must be (N, C) with one label per row")
        if not np.all(np.isfinite(self.scores)):
            raise NonFiniteValue("scores contain NaN or Inf")
        if self.labels.size and self.labels.max() >= self.scores.shape[1]:
            raise ValueError("label index out of range")


@dataclass
class ClassMetrics:
    class_index: int
    auc: float
    ap: float
    positives: int


@dataclass
class EvalReport:
    fold: int
    macro_auc: float
    macro_ap: float
    per_class: list
    degenerate: list = field(default_factory=list)
    top1_any_overlap: float | None = None
    roc_curves: dict = field(default_factory=dict)  # class -> (fpr, tpr, thresholds)
    pr_curves: dict = field(default_factory=dict)  # class -> (recall, precision, thresholds)

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "macro_auc": self.macro_auc,
            "macro_ap": self.macro_ap,
            "per_class": [
                {"class": m.class_index, "auc": m.auc, "ap": m.ap, "positives": m.positives}
                for m in self.per_class
            ],
            "degenerate": list(self.degenerate),
            "top1_any_overlap": self.top1_any_overlap,
            "roc_curves": {str(c): [list(map(float, col)) for col in cols]
                           for c, cols in self.roc_curves.items()},
            "pr_curves": {str(c): [list(map(float, col)) for col in cols]
                          for c, cols in self.pr_curves.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            fold=doc["fold"],
            macro_auc=doc["macro_auc"],
            macro_ap=doc["macro_ap"],
            per_class=[ClassMetrics(m["class"], m["auc"], m["ap"], m["positives"])
                       for m in doc["per_class"]],
            degenerate=list(doc.get("degenerate", [])),
            top1_any_overlap=doc.get("top1_any_overlap"),
            roc_curves={int(c): tuple(np.asarray(col) for col in cols)
                        for c, cols in doc.get("roc_curves", {}).items()},
            pr_curves={int(c): tuple(np.asarray(col) for col in cols)
                       for c, cols in doc.get("pr_curves", {}).items()},
        )


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank of their block."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + 1 + j)  # mean of ranks i+1 .. j
        i = j
    return ranks


def roc_auc_binary(scores, positives) -> float:
    """Probability a random positive outranks a random negative, ties at 0.5.

    Computed by sorting: the normalized Mann-Whitney U statistic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClass("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _tie_block_sweep(scores, positives):
    """Cumulative (tp, fp) after each distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    last = np.append(boundaries, scores.size - 1)  # last index of each block
    tp = np.cumsum(sorted_pos)[last].astype(np.float64)
    fp = (last + 1) - tp
    return tp, fp, sorted_scores[last]


def average_precision(scores, positives) -> float:
    """Step-wise AP over descending-score prefixes, tie blocks processed whole."""
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise DegenerateClass("AP needs at least one positive")
    tp, fp, _ = _tie_block_sweep(scores, positives)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def roc_curve_points(scores, positives):
    """(fpr, tpr, thresholds), one point per distinct score plus the origin."""
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClass("ROC curve needs both positives and negatives")
    tp, fp, thresholds = _tie_block_sweep(scores, positives)
    fpr = np.concatenate([[0.0], fp / n_neg])
    tpr = np.concatenate([[0.0], tp / n_pos])
    return fpr, tpr, np.concatenate([[np.inf], thresholds])


def pr_curve_points(scores, positives):
    """(recall, precision, thresholds) along the descending-score sweep."""
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise DegenerateClass("PR curve needs at least one positive")
    tp, fp, thresholds = _tie_block_sweep(scores, positives)
    return tp / n_pos, tp / (tp + fp), thresholds


_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2.0 fallback


def trapezoid_area(x, y) -> float:
    return float(_trapezoid(y, x))


def macro_metrics(m: ScoreMatrix, fold: int = 0, with_curves: bool = True) -> EvalReport:
    """One-vs-rest metrics per class, macro-averaged over non-degenerate classes."""
    n_classes = m.scores.shape[1]
    per_class = []
    degenerate = []
    roc_curves = {}
    pr_curves = {}
    for c in range(n_classes):
        positives = m.labels == c
        n_pos = int(positives.sum())
        if n_pos == 0 or n_pos == m.labels.size:
            degenerate.append(c)
            continue
        col = m.scores[:, c]
        per_class.append(ClassMetrics(c, roc_auc_binary(col, positives),
                                      average_precision(col, positives), n_pos))
        if with_curves:
            roc_curves[c] = roc_curve_points(col, positives)
            pr_curves[c] = pr_curve_points(col, positives)
    if not per_class:
        raise AllClassesDegenerate("no class has both positives and negatives")
    top1 = None
    if m.overlap_sets is not None:
        predicted = m.scores.argmax(axis=1)
        top1 = float(np.mean([p in s for p, s in zip(predicted, m.overlap_sets)]))
    return EvalReport(
        fold=fold,
        macro_auc=float(np.mean([x.auc for x in per_class])),
        macro_ap=float(np.mean([x.ap for x in per_class])),
        per_class=per_class,
        degenerate=degenerate,
        top1_any_overlap=top1,
        roc_curves=roc_curves,
        pr_curves=pr_curves,
    )


@dataclass
class FoldSummary:
    mean_auc: float
    mean_ap: float
    fold_aucs: list
    fold_aps: list
    excluded_folds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mean_auc": self.mean_auc,
            "mean_ap": self.mean_ap,
            "fold_aucs": self.fold_aucs,
            "fold_aps": self.fold_aps,
            "excluded_folds": self.excluded_folds,
        }


def fold_average(reports) -> FoldSummary:
    """Unweighted mean of the macro metrics across folds.

    Folds whose macro values are NaN (flagged degenerate) are excluded from
    the mean and listed.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one fold report")
    kept = [r for r in reports if math.isfinite(r.macro_auc) and math.isfinite(r.macro_ap)]
    excluded = [r.fold for r in reports if r not in kept]
    if not kept:
        raise AllClassesDegenerate("every fold is degenerate")
    return FoldSummary(
        mean_auc=float(np.mean([r.macro_auc for r in kept])),
        mean_ap=float(np.mean([r.macro_ap for r in kept])),
        fold_aucs=[r.macro_auc for r in reports],
        fold_aps=[r.macro_ap for r in reports],
        excluded_folds=excluded,
    )


# ---------------------------------------------------------------------------
# curve export


def _write_csv(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def export_curves(report: EvalReport, out_dir: str | Path, prefix: str = "") -> list:
    """One CSV per (class, curve type): fpr,tpr,threshold / recall,precision,threshold."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for c, (fpr, tpr, thr) in sorted(report.roc_curves.items()):
        path = out_dir / f"{prefix}class{c:02d}_fold{report.fold}_roc.csv"
        _write_csv(path, ["fpr", "tpr", "threshold"], (fpr, tpr, thr))
        written.append(path)
    for c, (recall, precision, thr) in sorted(report.pr_curves.items()):
        path = out_dir / f"{prefix}class{c:02d}_fold{report.fold}_pr.csv"
        _write_csv(path, ["recall", "precision", "threshold"], (recall, precision, thr))
        written.append(path)
    return written


def vertically_averaged_roc(reports, grid_size: int = 101):
    """Mean TPR over folds on a common FPR grid (the averaged-curve export)."""
    grid = np.linspace(0.0, 1.0, grid_size)
    curves = []
    for report in reports:
        per_fold = []
        for fpr, tpr, _ in report.roc_curves.values():
            per_fold.append(np.interp(grid, fpr, tpr))
        if per_fold:
            curves.append(np.mean(per_fold, axis=0))
    if not curves:
        raise AllClassesDegenerate("no curves to average")
    return grid, np.mean(curves, axis=0)


def export_averaged_roc(reports, out_dir: str | Path, prefix: str = "") -> Path:
    grid, mean_tpr = vertically_averaged_roc(reports)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{prefix}roc_fold_mean.csv"
    _write_csv(path, ["fpr", "tpr"], (grid, mean_tpr))
    return path
