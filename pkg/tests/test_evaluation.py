import numpy as np
import pytest

from callprobe.errors import AllClassesDegenerate, DegenerateClass
from callprobe.evaluation import (
    EvalReport,
    ScoreMatrix,
    average_precision,
    export_averaged_roc,
    export_curves,
    fold_average,
    macro_metrics,
    pr_curve_points,
    roc_auc_binary,
    roc_curve_points,
    trapezoid_area,
)

from .oracles import oracle_ap_prefix, oracle_auc_pairwise


def random_binary_fixture(rng, max_n=200, tie_heavy=False):
    n = int(rng.integers(4, max_n + 1))
    if tie_heavy:
        scores = rng.integers(0, 4, size=n).astype(np.float64)
    else:
        scores = rng.standard_normal(n)
    positives = rng.random(n) < rng.uniform(0.1, 0.9)
    if positives.all():
        positives[0] = False
    if not positives.any():
        positives[0] = True
    return scores, positives


class TestRocAuc:
    def test_hand_value(self):
        auc = roc_auc_binary([0.9, 0.8, 0.7, 0.6], [True, False, True, False])
        assert auc == 0.75

    def test_perfect_ranking(self):
        assert roc_auc_binary([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert roc_auc_binary([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateClass):
            roc_auc_binary([1, 2, 3], [1, 1, 1])
        with pytest.raises(DegenerateClass):
            roc_auc_binary([1, 2, 3], [0, 0, 0])

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(150):
            scores, positives = random_binary_fixture(rng, max_n=60,
                                                      tie_heavy=trial % 3 == 0)
            fast = roc_auc_binary(scores, positives)
            slow = oracle_auc_pairwise(scores, positives)
            assert abs(fast - slow) <= 1e-12

    def test_invariant_under_increasing_transforms(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            scores, positives = random_binary_fixture(rng, max_n=80)
            base = roc_auc_binary(scores, positives)
            assert roc_auc_binary(np.exp(scores), positives) == base
            assert roc_auc_binary(3.0 * scores + 11.0, positives) == base


class TestAveragePrecision:
    def test_hand_value(self):
        # ranking [+, -, +]: prefix precisions 1 and 2/3 at the two recalls
        ap = average_precision([0.9, 0.5, 0.1], [True, False, True])
        np.testing.assert_allclose(ap, 5.0 / 6.0, rtol=1e-15)

    def test_all_positives_first(self):
        assert average_precision([4, 3, 2, 1], [1, 1, 0, 0]) == 1.0

    def test_single_positive_ranked_last(self):
        for n in (3, 7, 20):
            scores = np.arange(n, dtype=float)
            positives = np.zeros(n, dtype=bool)
            positives[0] = True  # lowest score
            np.testing.assert_allclose(average_precision(scores, positives), 1.0 / n)

    def test_no_positives_rejected(self):
        with pytest.raises(DegenerateClass):
            average_precision([1, 2], [0, 0])

    def test_matches_prefix_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(150):
            scores, positives = random_binary_fixture(rng, max_n=60,
                                                      tie_heavy=trial % 3 == 0)
            fast = average_precision(scores, positives)
            slow = oracle_ap_prefix(scores, positives)
            assert abs(fast - slow) <= 1e-12

    def test_random_scores_concentrate_near_prevalence(self):
        rng = np.random.default_rng(3)
        prevalence = 0.1
        n = 500
        values = []
        for _ in range(1000):
            scores = rng.standard_normal(n)
            positives = np.zeros(n, dtype=bool)
            positives[:int(n * prevalence)] = True
            values.append(average_precision(scores, positives))
        assert abs(np.mean(values) - prevalence) < 0.05


class TestCurves:
    def test_roc_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            scores, positives = random_binary_fixture(rng, max_n=50)
            fpr, tpr, thr = roc_curve_points(scores, positives)
            assert (fpr[0], tpr[0]) == (0.0, 0.0)
            assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
            assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
            assert np.all(np.diff(thr) < 0)

    def test_pr_recall_nondecreasing(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            scores, positives = random_binary_fixture(rng, max_n=50)
            recall, precision, _ = pr_curve_points(scores, positives)
            assert np.all(np.diff(recall) >= 0)
            assert recall[-1] == 1.0
            assert np.all((0 <= precision) & (precision <= 1))

    def test_trapezoid_roc_area_equals_auc(self):
        rng = np.random.default_rng(6)
        for trial in range(60):
            scores, positives = random_binary_fixture(rng, tie_heavy=trial % 2 == 0)
            fpr, tpr, _ = roc_curve_points(scores, positives)
            area = trapezoid_area(fpr, tpr)
            assert abs(area - roc_auc_binary(scores, positives)) < 1e-9


class TestMacroMetrics:
    def test_two_class_symmetry(self):
        rng = np.random.default_rng(7)
        logits = rng.standard_normal((40, 1))
        scores = np.hstack([logits, -logits])  # complementary columns
        labels = rng.integers(0, 2, size=40)
        report = macro_metrics(ScoreMatrix(scores, labels))
        assert report.per_class[0].auc == report.per_class[1].auc
        assert report.macro_auc == report.per_class[0].auc

    def test_empty_class_excluded_and_reported(self):
        rng = np.random.default_rng(8)
        scores = rng.standard_normal((30, 4))
        labels = rng.integers(0, 3, size=30)  # class 3 never appears
        report = macro_metrics(ScoreMatrix(scores, labels))
        assert report.degenerate == [3]
        assert len(report.per_class) == 3
        assert report.macro_auc == np.mean([m.auc for m in report.per_class])

    def test_matches_oracles_on_random_matrix(self):
        rng = np.random.default_rng(9)
        scores = rng.standard_normal((50, 4))
        labels = rng.integers(0, 4, size=50)
        report = macro_metrics(ScoreMatrix(scores, labels))
        ref_auc = np.mean([oracle_auc_pairwise(scores[:, c], labels == c) for c in range(4)])
        ref_ap = np.mean([oracle_ap_prefix(scores[:, c], labels == c) for c in range(4)])
        assert abs(report.macro_auc - ref_auc) <= 1e-12
        assert abs(report.macro_ap - ref_ap) <= 1e-12

    def test_all_degenerate_raises(self):
        scores = np.zeros((5, 3))
        labels = np.zeros(5, dtype=int)  # one class only: positives == N
        with pytest.raises(AllClassesDegenerate):
            macro_metrics(ScoreMatrix(scores, labels))

    def test_any_overlap_accuracy(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
        labels = np.array([0, 0, 1])
        overlap = [{0}, {0, 1}, {1}]  # row 2 argmax=1 counts via overlap
        report = macro_metrics(ScoreMatrix(scores, labels, overlap))
        np.testing.assert_allclose(report.top1_any_overlap, 2.0 / 3.0)

    def test_report_round_trips_through_dict(self):
        rng = np.random.default_rng(10)
        scores = rng.standard_normal((20, 3))
        labels = rng.integers(0, 3, size=20)
        report = macro_metrics(ScoreMatrix(scores, labels), fold=2)
        clone = EvalReport.from_dict(report.to_dict())
        assert clone.macro_auc == report.macro_auc
        assert clone.fold == 2
        np.testing.assert_array_equal(clone.roc_curves[0][0], report.roc_curves[0][0])


class TestFoldAverage:
    def make_report(self, fold, auc, ap):
        return EvalReport(fold=fold, macro_auc=auc, macro_ap=ap, per_class=[])

    def test_two_folds(self):
        summary = fold_average([self.make_report(0, 0.8, 0.5), self.make_report(1, 0.9, 0.7)])
        np.testing.assert_allclose(summary.mean_auc, 0.85)
        np.testing.assert_allclose(summary.mean_ap, 0.6)

    def test_single_fold_identity(self):
        summary = fold_average([self.make_report(0, 0.73, 0.41)])
        assert summary.mean_auc == 0.73
        assert summary.mean_ap == 0.41

    def test_nan_fold_excluded_and_reported(self):
        reports = [self.make_report(0, 0.8, 0.5),
                   self.make_report(1, float("nan"), float("nan")),
                   self.make_report(2, 0.9, 0.7)]
        summary = fold_average(reports)
        np.testing.assert_allclose(summary.mean_auc, 0.85)
        assert summary.excluded_folds == [1]
        assert len(summary.fold_aucs) == 3


class TestExport:
    def test_curve_files(self, tmp_path):
        rng = np.random.default_rng(11)
        scores = rng.standard_normal((25, 3))
        labels = rng.integers(0, 3, size=25)
        report = macro_metrics(ScoreMatrix(scores, labels), fold=1)
        files = export_curves(report, tmp_path, prefix="lr_")
        assert len(files) == 6
        roc = (tmp_path / "lr_class00_fold1_roc.csv").read_text().splitlines()
        assert roc[0] == "fpr,tpr,threshold"
        assert float(roc[1].split(",")[0]) == 0.0
        avg = export_averaged_roc([report], tmp_path, prefix="lr_")
        lines = avg.read_text().splitlines()
        assert lines[0] == "fpr,tpr"
        assert len(lines) == 102
