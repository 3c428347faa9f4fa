"""Tests for classification metrics, MCC and Fisher discriminant ratios."""

import csv
import math

import numpy as np
import pytest

from sonar_histnet.metrics import (
    RESULTS_COLUMNS,
    build_report,
    classification_metrics,
    confusion,
    export_embeddings,
    fdr,
    mcc,
    metric_stat,
    read_embeddings,
    scatter_stats,
    subset_accuracy,
    write_confusion_csv,
    write_results_csv,
)
from sonar_histnet.types import ExperimentSummary, FeatureKind, MetricStat, ModelKind


def brute_force(preds, labels, num_classes):
    """Per-sample oracle for accuracy and macro precision / recall / F1."""
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = sum(1 for p, t in zip(preds, labels) if p == c and t == c)
        fp = sum(1 for p, t in zip(preds, labels) if p == c and t != c)
        fn = sum(1 for p, t in zip(preds, labels) if p != c and t == c)
        pr = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        precision.append(pr)
        recall.append(rc)
        f1.append(2 * pr * rc / (pr + rc) if pr + rc else 0.0)
    acc = sum(1 for p, t in zip(preds, labels) if p == t) / len(labels)
    return acc, np.mean(precision), np.mean(recall), np.mean(f1)


def mcc_oracle(preds, labels, num_classes):
    """R_K from per-sample one-hot covariances."""
    x = np.eye(num_classes)[preds]
    y = np.eye(num_classes)[labels]
    xc, yc = x - x.mean(axis=0), y - y.mean(axis=0)
    cov_xy = np.sum(xc * yc)
    den = math.sqrt(np.sum(xc * xc) * np.sum(yc * yc))
    return cov_xy / den if den > 0 else 0.0


def summary(feature, model, value=0.5):
    stat = MetricStat(mean=value, std=0.01)
    return ExperimentSummary(
        model=model,
        feature=feature,
        seeds=[0],
        completed=[0],
        metrics={k: stat for k in ("accuracy", "precision", "recall", "f1", "mcc", "log_fdr")},
        per_class_fdr=[stat] * 4,
        mean_confusion=[[1.0, 0.0, 0.0, 0.0]] * 4,
    )


class TestConfusion:
    def test_perfect_is_diagonal(self):
        cm = confusion([0, 1, 2, 3, 3], [0, 1, 2, 3, 3])
        assert np.array_equal(cm, np.diag([1, 1, 1, 2]))

    def test_counts_rows_by_truth(self):
        cm = confusion([0, 1], [1, 1], num_classes=2)
        assert cm[1, 0] == 1
        assert cm[1, 1] == 1

    def test_row_sums_are_label_counts(self, rng):
        labels = rng.integers(0, 4, size=200)
        preds = rng.integers(0, 4, size=200)
        cm = confusion(preds, labels)
        assert np.array_equal(cm.sum(axis=1), np.bincount(labels, minlength=4))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            confusion([4], [0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0])


class TestClassificationMetrics:
    def test_diagonal_all_ones(self):
        s = classification_metrics(np.diag([3, 4, 5, 6]))
        assert (s.accuracy, s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_two_class_hand_case(self):
        s = classification_metrics(np.array([[1, 1], [0, 2]]))
        assert s.accuracy == pytest.approx(0.75)
        assert s.per_class_precision == pytest.approx([1.0, 2 / 3])
        assert s.per_class_recall == pytest.approx([0.5, 1.0])
        assert s.f1 == pytest.approx((2 / 3 + 4 / 5) / 2)

    def test_absent_class_scores_zero(self):
        cm = np.array([[2, 0, 0], [0, 2, 0], [0, 0, 0]])
        s = classification_metrics(cm)
        assert s.per_class_precision[2] == 0.0
        assert s.per_class_recall[2] == 0.0
        assert s.precision == pytest.approx(2 / 3)

    def test_empty_matrix(self):
        with pytest.raises(ValueError):
            classification_metrics(np.zeros((4, 4), dtype=int))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            labels = rng.integers(0, 4, size=n)
            preds = np.where(rng.random(n) < 0.5, labels, rng.integers(0, 4, size=n))
            cm = confusion(preds, labels)
            s = classification_metrics(cm)
            acc, pr, rc, f1 = brute_force(preds.tolist(), labels.tolist(), 4)
            assert cm.sum() == n
            assert s.accuracy == pytest.approx(acc, abs=1e-12)
            assert s.precision == pytest.approx(pr, abs=1e-12)
            assert s.recall == pytest.approx(rc, abs=1e-12)
            assert s.f1 == pytest.approx(f1, abs=1e-12)
            assert mcc(cm) == pytest.approx(mcc_oracle(preds, labels, 4), abs=1e-12)


class TestMCC:
    def test_perfect(self):
        assert mcc(np.diag([5, 5, 5, 5])) == pytest.approx(1.0)

    def test_constant_predictor(self):
        cm = np.zeros((4, 4), dtype=int)
        cm[:, 2] = [3, 4, 5, 6]
        assert mcc(cm) == 0.0

    def test_hand_case(self):
        assert mcc(np.array([[1, 1], [0, 2]])) == pytest.approx(4 / math.sqrt(48))

    def test_bounded(self, rng):
        for _ in range(50):
            cm = rng.integers(0, 10, size=(4, 4))
            assert -1.0 <= mcc(cm) <= 1.0


class TestSubsetAccuracy:
    def test_restricted_rows(self):
        cm = np.array([[5, 0, 0, 0], [0, 5, 0, 0], [0, 0, 3, 2], [0, 0, 4, 1]])
        assert subset_accuracy(cm, [2, 3]) == pytest.approx(0.4)
        assert subset_accuracy(cm, [0, 1]) == 1.0


class TestFDR:
    def test_hand_case(self):
        x = np.array([[0.0], [2.0], [4.0], [6.0]])
        result = fdr(x, [0, 0, 1, 1], num_classes=2)
        assert result.per_class == pytest.approx([math.log(4.0), math.log(4.0)])
        assert result.overall == pytest.approx(math.log(8.0))

    def test_scatter_norms(self):
        stats = scatter_stats(np.array([[0.0], [2.0], [4.0], [6.0]]), [0, 0, 1, 1], num_classes=2)
        assert stats.between_norms.tolist() == pytest.approx([8.0, 8.0])
        assert stats.within_norms.tolist() == pytest.approx([2.0, 2.0])

    def test_matrix_form_oracle(self, rng):
        x = rng.normal(size=(40, 5))
        labels = np.repeat(np.arange(4), 10)
        x += labels[:, None] * 0.7
        mu = x.mean(axis=0)
        expected = []
        for c in range(4):
            xc = x[labels == c]
            mc = xc.mean(axis=0)
            sb = len(xc) * np.outer(mc - mu, mc - mu)
            sw = (xc - mc).T @ (xc - mc)
            expected.append(math.log(np.linalg.norm(sb) / (np.linalg.norm(sw) + 1e-12)))
        assert fdr(x, labels).per_class == pytest.approx(expected, rel=1e-9)

    def test_mean_and_pooled_aggregates(self, rng):
        x = rng.normal(size=(40, 3))
        labels = np.repeat(np.arange(4), 10)
        per = fdr(x, labels, aggregate="sum")
        mean = fdr(x, labels, aggregate="mean")
        assert mean.overall == pytest.approx(per.overall - math.log(4))
        pooled = fdr(x, labels, aggregate="pooled")
        assert np.isfinite(pooled.overall)

    def test_identical_means_is_minus_inf(self):
        x = np.array([[-1.0], [1.0], [-1.0], [1.0]])
        result = fdr(x, [0, 0, 1, 1], num_classes=2)
        assert result.per_class == [float("-inf"), float("-inf")]
        assert result.overall == float("-inf")

    def test_compact_classes_flagged(self):
        x = np.array([[0.0], [0.0], [1.0], [1.0]])
        result = fdr(x, [0, 0, 1, 1], num_classes=2)
        assert result.compact_classes == [0, 1]
        assert result.per_class[0] > 20

    def test_scale_invariance(self, rng):
        x = rng.normal(size=(40, 6))
        labels = np.repeat(np.arange(4), 10)
        a = fdr(x, labels).per_class
        b = fdr(3.5 * x, labels).per_class
        assert a == pytest.approx(b, rel=1e-9)

    def test_small_class_strict(self):
        with pytest.raises(ValueError):
            fdr(np.zeros((3, 2)), [0, 0, 1], num_classes=2)

    def test_small_class_lenient(self):
        result = fdr(np.array([[0.0], [1.0], [5.0]]), [0, 0, 1], num_classes=2, strict=False)
        assert result.per_class[1] is None
        assert result.overall is None


class TestReport:
    def test_build_report(self, rng):
        labels = np.repeat(np.arange(4), 5)
        emb = rng.normal(size=(20, 3)) + labels[:, None]
        report = build_report(labels, labels, emb)
        assert report.accuracy == 1.0
        assert report.mcc == pytest.approx(1.0)
        assert len(report.per_class_fdr) == 4
        assert report.confusion == np.diag([5] * 4).tolist()

    def test_report_serializes_minus_inf(self):
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        emb = np.array([[-1.0], [1.0]] * 4)
        report = build_report(labels, labels, emb)
        assert "-Infinity" in report.model_dump_json()

    def test_metric_stat_population_std(self):
        stat = metric_stat([50.0, 52.0, 54.0])
        assert stat.mean == pytest.approx(52.0)
        assert stat.std == pytest.approx(math.sqrt(8 / 3))

    def test_metric_stat_identical(self):
        assert metric_stat([0.7, 0.7, 0.7]).std == 0.0

    @pytest.mark.parametrize("value", [0.1, 0.7, 0.8, 1 / 3, 52.0])
    def test_metric_stat_identical_values_are_exact(self, value):
        stat = metric_stat([value] * 3)
        assert stat.mean == value
        assert stat.std == 0.0


class TestFiles:
    def test_embedding_round_trip(self, tmp_path, rng):
        x = rng.normal(size=(6, 4)).astype(np.float32)
        labels = np.array([0, 1, 2, 3, 0, 1])
        path = tmp_path / "emb.csv"
        export_embeddings(x, labels, path)
        assert path.read_text().splitlines()[0] == "label,e_0,e_1,e_2,e_3"
        x2, l2 = read_embeddings(path)
        assert np.array_equal(x2, x)
        assert np.array_equal(l2, labels)

    def test_confusion_csv(self, tmp_path):
        path = tmp_path / "cm.csv"
        write_confusion_csv(np.diag([1, 2, 3, 4]), path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["true\\pred", "cargo", "passengership", "tanker", "tug"]
        assert rows[2] == ["passengership", "0", "2", "0", "0"]

    def test_results_layout(self, tmp_path):
        path = tmp_path / "report.csv"
        write_results_csv(
            [summary(FeatureKind.STFT, ModelKind.HLTDNN), summary(FeatureKind.STFT, ModelKind.TDNN)], path
        )
        rows = list(csv.reader(open(path, encoding="utf-8")))
        assert tuple(rows[0]) == RESULTS_COLUMNS
        assert len(rows) == 3
        assert rows[1][:2] == ["STFT", "TDNN"]
        assert rows[2][:2] == ["STFT", "HLTDNN"]
        assert rows[1][2] == "50.00 ± 1.00"
        assert rows[1][7] == "0.50 ± 0.01"
