import numpy as np
import pytest

from ccap.metrics import (
    ConfusionMatrix,
    auc,
    classification_metrics,
    confusion,
    curve_points,
    evaluate_model,
)


def pairwise_auc(y, scores):
    """O(n^2) oracle: P(s+ > s-) + 0.5 * P(s+ = s-)."""
    y = np.asarray(y)
    scores = np.asarray(scores, dtype=float)
    pos = scores[y == 1]
    neg = scores[y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def metrics_oracle(tp, fp, tn, fn):
    """Direct-formula evaluation with explicit 0/0 -> 0 handling."""
    n = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    po = (tp + tn) / n
    pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / n**2
    kappa = (po - pe) / (1 - pe) if 1 - pe else 0.0
    return precision, recall, f1, kappa


class TestConfusion:
    def test_clean_separation(self):
        c = confusion([1, 0], [0.9, 0.1], 0.5)
        assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)

    def test_threshold_boundary_is_positive(self):
        # score >= threshold predicts positive
        c = confusion([1, 0, 1], [0.5, 0.5, 0.5], 0.5)
        assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 0, 0)

    def test_four_cell_case(self):
        c = confusion([1, 1, 0, 0], [0.6, 0.4, 0.6, 0.4], 0.5)
        assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([1, 0], [0.5], 0.5)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            confusion([1, 0], [0.9, 0.1], 1.0)


class TestClassificationMetrics:
    def test_hand_case(self):
        m = classification_metrics(ConfusionMatrix(tp=9, fp=1, tn=81, fn=9))
        assert m.precision == pytest.approx(0.9, abs=1e-12)
        assert m.recall == pytest.approx(0.5, abs=1e-12)
        assert m.f1 == pytest.approx(2 * 0.9 * 0.5 / 1.4, abs=1e-12)

    def test_perfect_agreement(self):
        m = classification_metrics(ConfusionMatrix(tp=4, fp=0, tn=6, fn=0))
        assert (m.precision, m.recall, m.f1, m.kappa) == (1.0, 1.0, 1.0, 1.0)

    def test_chance_level_kappa(self):
        m = classification_metrics(ConfusionMatrix(tp=25, fp=25, tn=25, fn=25))
        assert m.kappa == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_cells_flagged(self):
        m = classification_metrics(ConfusionMatrix(tp=0, fp=0, tn=5, fn=2))
        assert m.precision == 0.0
        assert "precision" in m.degenerate

    def test_exhaustive_small_matrices(self):
        # every 2x2 matrix with cells in {0..3} vs the direct-formula oracle
        for tp in range(4):
            for fp in range(4):
                for tn in range(4):
                    for fn in range(4):
                        if tp + fp + tn + fn == 0:
                            continue
                        m = classification_metrics(
                            ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)
                        )
                        p, r, f1, k = metrics_oracle(tp, fp, tn, fn)
                        assert m.precision == pytest.approx(p, abs=1e-12)
                        assert m.recall == pytest.approx(r, abs=1e-12)
                        assert m.f1 == pytest.approx(f1, abs=1e-12)
                        assert m.kappa == pytest.approx(k, abs=1e-12)

    def test_f1_is_harmonic_mean(self):
        m = classification_metrics(ConfusionMatrix(tp=7, fp=3, tn=11, fn=2))
        assert m.f1 == pytest.approx(
            2 * m.precision * m.recall / (m.precision + m.recall), abs=1e-12
        )

    def test_kappa_one_iff_no_errors(self):
        for fp, fn in [(0, 1), (1, 0), (2, 3)]:
            m = classification_metrics(ConfusionMatrix(tp=5, fp=fp, tn=5, fn=fn))
            assert m.kappa < 1.0


class TestAuc:
    def test_perfect_ranking(self):
        assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_inverted_ranking(self):
        assert auc([0, 0, 1, 1], [0.9, 0.8, 0.2, 0.1]) == 0.0

    def test_tie_case_matches_oracle(self):
        y = [1, 0, 1, 0]
        s = [0.8, 0.8, 0.6, 0.4]
        assert auc(y, s) == pytest.approx(pairwise_auc(y, s), abs=1e-12)
        assert auc(y, s) == pytest.approx(0.625, abs=1e-12)

    def test_single_tie_contributes_half(self):
        y = [1, 0, 1, 0]
        s = [0.9, 0.8, 0.8, 0.4]
        assert auc(y, s) == pytest.approx(0.875, abs=1e-12)

    def test_oracle_agreement_random(self):
        rng = np.random.default_rng(7)
        for trial in range(200):
            n = int(rng.integers(2, 101))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            # a coarse grid forces plenty of ties
            s = rng.integers(0, 6, size=n) / 5.0
            assert auc(y, s) == pytest.approx(pairwise_auc(y, s), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 2, size=60)
        y[0], y[1] = 0, 1
        s = rng.random(60)
        assert auc(y, s) == pytest.approx(auc(y, np.exp(3 * s) + 2), abs=1e-12)

    def test_label_flip(self):
        rng = np.random.default_rng(4)
        y = rng.integers(0, 2, size=80)
        y[0], y[1] = 0, 1
        s = rng.random(80)
        assert auc(1 - y, s) == pytest.approx(1.0 - auc(y, s), abs=1e-12)

    def test_single_class_aborts(self):
        with pytest.raises(ValueError):
            auc([1, 1, 1], [0.1, 0.2, 0.3])


class TestCurvePoints:
    def test_roc_endpoints_and_count(self):
        pts = curve_points([1, 0], [0.8, 0.2], "roc")
        assert pts.shape == (3, 2)
        assert tuple(pts[0]) == (0.0, 0.0)
        assert tuple(pts[-1]) == (1.0, 1.0)

    def test_roc_monotone(self):
        rng = np.random.default_rng(11)
        y = rng.integers(0, 2, size=50)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 8, size=50) / 7.0
        pts = curve_points(y, s, "roc")
        assert (np.diff(pts[:, 0]) >= 0).all()
        assert (np.diff(pts[:, 1]) >= 0).all()

    def test_trapezoid_area_equals_auc(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            y = rng.integers(0, 2, size=40)
            y[0], y[1] = 0, 1
            s = rng.integers(0, 5, size=40) / 4.0
            pts = curve_points(y, s, "roc")
            area = np.trapezoid(pts[:, 1], pts[:, 0])
            assert area == pytest.approx(auc(y, s), abs=1e-12)

    def test_pr_first_point_is_top_ranked_precision(self):
        y = [0, 1, 1, 0]
        s = [0.9, 0.8, 0.3, 0.1]
        pts = curve_points(y, s, "pr")
        # top-ranked item is a negative: precision 0 at recall 0
        assert pts[0, 1] == 0.0
        pts2 = curve_points([1, 0, 1, 0], s, "pr")
        assert pts2[0, 1] == 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            curve_points([1, 0], [0.8, 0.2], "gain")


class TestEvaluateModel:
    def test_constant_scores_on_balanced_data(self):
        y = np.array([1] * 10 + [0] * 10)
        s = np.full(20, 0.5)
        # constant classifier has an undefined AUC in the Mann-Whitney
        # sense only when single-class; with ties AUC is 0.5
        r = evaluate_model(s, y, threshold=0.5)
        assert r.precision == pytest.approx(0.5, abs=1e-12)
        assert r.recall == pytest.approx(1.0, abs=1e-12)
        assert r.kappa == pytest.approx(0.0, abs=1e-12)
        assert r.auc == pytest.approx(0.5, abs=1e-12)

    def test_recall_monotone_in_threshold(self):
        rng = np.random.default_rng(21)
        y = rng.integers(0, 2, size=200)
        y[0], y[1] = 0, 1
        s = rng.random(200)
        prev = 2.0
        for t in np.linspace(0.005, 0.995, 101):
            c = confusion(y, s, float(t))
            rec = c.tp / (c.tp + c.fn)
            assert rec <= prev + 1e-12
            prev = rec

    def test_report_assembles_all_fields(self):
        rng = np.random.default_rng(5)
        y = rng.integers(0, 2, size=30)
        y[0], y[1] = 0, 1
        s = rng.random(30)
        r = evaluate_model(s, y)
        assert 0.0 <= r.auc <= 1.0
        assert r.confusion.total == 30
        assert r.roc_points[0].tolist() == [0.0, 0.0]
        assert r.roc_points[-1].tolist() == [1.0, 1.0]
        assert len(r.pr_points) >= 1
