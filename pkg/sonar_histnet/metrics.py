"""Classification scores, multiclass MCC and Fisher discriminant ratios."""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from .types import (
    CLASS_NAMES,
    NUM_CLASSES,
    ExperimentSummary,
    FeatureKind,
    MetricsReport,
    MetricStat,
    ModelKind,
    _ArrayRecord,
)

_log = logging.getLogger("sonar_histnet")

FDR_EPS = 1e-12

Aggregate = Literal["sum", "mean", "pooled"]


def confusion(preds: Sequence[int], labels: Sequence[int], num_classes: int = NUM_CLASSES) -> np.ndarray:
    """C x C counts; rows are true classes, columns predictions."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(f"preds {preds.shape} and labels {labels.shape} must be equal-length 1-D")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} index out of range [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


class ClassScores(BaseModel):
    """Macro-averaged scores; absent classes score 0."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: List[float]
    per_class_recall: List[float]
    per_class_f1: List[float]


def classification_metrics(cm: np.ndarray) -> ClassScores:
    """Accuracy plus macro precision, recall and F1; 0/0 counts as 0."""
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return ClassScores(
        accuracy=float(tp.sum() / total),
        precision=float(precision.mean()),
        recall=float(recall.mean()),
        f1=float(f1.mean()),
        per_class_precision=precision.tolist(),
        per_class_recall=recall.tolist(),
        per_class_f1=f1.tolist(),
    )


def mcc(cm: np.ndarray) -> float:
    """Multiclass Matthews correlation (R_K); 0 when the denominator vanishes."""
    cm = np.asarray(cm, dtype=np.float64)
    s = cm.sum()
    c = np.trace(cm)
    p = cm.sum(axis=0)
    t = cm.sum(axis=1)
    cov_pt = c * s - p @ t
    den = (s * s - p @ p) * (s * s - t @ t)
    if den <= 0:
        return 0.0
    return float(np.clip(cov_pt / np.sqrt(den), -1.0, 1.0))


def subset_accuracy(cm: np.ndarray, classes: Sequence[int]) -> float:
    """Accuracy over samples whose true class is in ``classes``."""
    cm = np.asarray(cm)
    rows = cm[list(classes)]
    total = rows.sum()
    if total == 0:
        return 0.0
    return float(sum(cm[k, k] for k in classes) / total)


# --------------------------------------------------------------------------
# Fisher discriminant ratio
# --------------------------------------------------------------------------


def _frobenius_gram(a: np.ndarray) -> float:
    """||a.T @ a||_F, computed through the smaller Gram matrix."""
    g = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    return float(np.sqrt(np.sum(g * g)))


class ScatterStats(_ArrayRecord):
    class_means: np.ndarray
    global_mean: np.ndarray
    counts: np.ndarray
    between_norms: np.ndarray
    within_norms: np.ndarray


def scatter_stats(embeddings: np.ndarray, labels: Sequence[int], num_classes: int = NUM_CLASSES) -> ScatterStats:
    """Frobenius norms of S_B,c = N_c (mu_c - mu)(mu_c - mu)^T and S_W,c per class."""
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != labels.size:
        raise ValueError(f"embeddings {x.shape} do not match {labels.size} labels")
    mu = x.mean(axis=0)
    d = x.shape[1]
    means = np.zeros((num_classes, d))
    counts = np.zeros(num_classes, dtype=np.int64)
    sb = np.zeros(num_classes)
    sw = np.zeros(num_classes)
    for c in range(num_classes):
        xc = x[labels == c]
        counts[c] = len(xc)
        if not len(xc):
            continue
        means[c] = xc.mean(axis=0)
        diff = means[c] - mu
        sb[c] = counts[c] * float(diff @ diff)
        sw[c] = _frobenius_gram(xc - means[c])
    return ScatterStats(class_means=means, global_mean=mu, counts=counts, between_norms=sb, within_norms=sw)


class FDRResult(BaseModel):
    """
    Log Fisher ratios of an embedding.

    ``per_class`` holds ``None`` for classes with fewer than two samples.
    ``compact_classes`` lists classes whose within-class scatter is zero.
    """

    per_class: List[Optional[float]]
    overall: Optional[float]
    compact_classes: List[int]


def _log_ratio(sb: float, sw: float) -> float:
    ratio = sb / (sw + FDR_EPS)
    return float(np.log(ratio)) if ratio > 0 else float("-inf")


def fdr(
    embeddings: np.ndarray,
    labels: Sequence[int],
    aggregate: Aggregate = "sum",
    num_classes: int = NUM_CLASSES,
    strict: bool = True,
) -> FDRResult:
    """
    Natural-log Fisher discriminant ratios, per class and overall.

    ``aggregate`` picks the overall value: the sum or mean of the
    per-class ratios, or the ratio of the pooled scatter matrices.
    Classes with zero within-scatter are listed in ``compact_classes``.

    Raises:
        ValueError: a class has fewer than 2 samples and ``strict`` is set
    """
    labels = np.asarray(labels, dtype=np.int64)
    stats = scatter_stats(embeddings, labels, num_classes)
    short = [c for c in range(num_classes) if stats.counts[c] < 2]
    if short and strict:
        raise ValueError(f"classes {short} have fewer than 2 samples")
    if short:
        _log.warning("sonar-histnet: FDR undefined for classes %s (fewer than 2 samples)", short)

    per_class: List[Optional[float]] = []
    ratios = []
    for c in range(num_classes):
        if c in short:
            per_class.append(None)
            continue
        per_class.append(_log_ratio(stats.between_norms[c], stats.within_norms[c]))
        ratios.append(stats.between_norms[c] / (stats.within_norms[c] + FDR_EPS))
    compact = [c for c in range(num_classes) if c not in short and stats.within_norms[c] == 0.0]

    overall: Optional[float] = None
    if not short:
        if aggregate == "sum":
            total = float(np.sum(ratios))
            overall = float(np.log(total)) if total > 0 else float("-inf")
        elif aggregate == "mean":
            total = float(np.mean(ratios))
            overall = float(np.log(total)) if total > 0 else float("-inf")
        elif aggregate == "pooled":
            overall = _pooled_log_ratio(np.asarray(embeddings, dtype=np.float64), labels, stats)
        else:
            raise ValueError(f"unknown FDR aggregate {aggregate!r}")
    return FDRResult(per_class=per_class, overall=overall, compact_classes=compact)


def _pooled_log_ratio(x: np.ndarray, labels: np.ndarray, stats: ScatterStats) -> float:
    between = np.sqrt(stats.counts)[:, None] * (stats.class_means - stats.global_mean)
    within = x - stats.class_means[labels]
    return _log_ratio(_frobenius_gram(between), _frobenius_gram(within))


# --------------------------------------------------------------------------
# Reports and files
# --------------------------------------------------------------------------


def build_report(
    preds: Sequence[int],
    labels: Sequence[int],
    embeddings: Optional[np.ndarray] = None,
    aggregate: Aggregate = "sum",
    num_classes: int = NUM_CLASSES,
) -> MetricsReport:
    cm = confusion(preds, labels, num_classes)
    scores = classification_metrics(cm)
    if embeddings is not None:
        ratios = fdr(embeddings, labels, aggregate, num_classes, strict=False)
    else:
        ratios = FDRResult(per_class=[None] * num_classes, overall=None, compact_classes=[])
    return MetricsReport(
        **scores.model_dump(),
        mcc=mcc(cm),
        per_class_fdr=ratios.per_class,
        overall_fdr=ratios.overall,
        compact_classes=ratios.compact_classes,
        confusion=cm.tolist(),
    )


def metric_stat(values: Sequence[float]) -> MetricStat:
    """
    Mean and population standard deviation.

    Sums are taken relative to the first value, so identical inputs
    give that value back with a std of exactly 0.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to summarize")
    shifted = arr - arr[0]
    offset = math.fsum(shifted) / arr.size
    spread = math.fsum((shifted - offset) ** 2) / arr.size
    return MetricStat(mean=float(arr[0] + offset), std=math.sqrt(spread))


def export_embeddings(embeddings: np.ndarray, labels: Sequence[int], path: Path) -> None:
    """CSV with header ``label,e_0,...,e_{d-1}``."""
    x = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != labels.size:
        raise ValueError(f"embeddings {x.shape} do not match {labels.size} labels")
    header = ",".join(["label"] + [f"e_{i}" for i in range(x.shape[1])])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for label, row in zip(labels, x):
            fh.write(",".join([str(int(label))] + [f"{v:.9g}" for v in row.tolist()]) + "\n")


def read_embeddings(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`export_embeddings`: ``(embeddings float32, labels)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    labels = np.array([int(r[0]) for r in body], dtype=np.int64)
    x = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float32)
    return x.reshape(len(body), len(rows[0]) - 1), labels


def write_confusion_csv(cm, path: Path, class_names: Sequence[str] = CLASS_NAMES) -> None:
    """
    Write a labelled confusion matrix, rows true and columns predicted.

    Args:
        cm: counts (written as integers) or means (6 significant digits)
        path: destination CSV
        class_names: row and column labels
    """
    arr = np.asarray(cm)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, arr):
            if np.issubdtype(arr.dtype, np.integer):
                cells = [str(int(v)) for v in row]
            else:
                cells = [f"{float(v):.6g}" for v in row]
            writer.writerow([name] + cells)


RESULTS_COLUMNS = ("Feature", "Model", "Accuracy", "Precision", "Recall", "F1", "MCC", "logFDR")
_PERCENT_METRICS = ("accuracy", "precision", "recall", "f1", "mcc")


def _cell(stat: MetricStat, scale: float) -> str:
    return f"{stat.mean * scale:.2f} ± {stat.std * scale:.2f}"


def write_results_csv(summaries: Sequence[ExperimentSummary], path: Path) -> None:
    """One row per feature x model; fractions as percentages, mean ± population std."""
    ordered = sorted(summaries, key=lambda s: (list(FeatureKind).index(s.feature), list(ModelKind).index(s.model)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_COLUMNS)
        for s in ordered:
            cells = [_cell(s.metrics[name], 100.0) for name in _PERCENT_METRICS]
            writer.writerow([s.feature.value.upper(), s.model.value.upper()] + cells + [_cell(s.metrics["log_fdr"], 1.0)])
