import math

import numpy as np
import pytest

from ccap.errors import TrainingError
from ccap.learners import (
    ConstSpec,
    DTSpec,
    GBSpec,
    KNNSpec,
    LRSpec,
    RFSpec,
    SVMSpec,
    entropy,
    fit,
    info_gain,
    predict_proba,
    sigmoid,
)


def blob_data(n=200, d=4, seed=0, sep=2.0):
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.vstack(
        [rng.normal(0, 1, size=(half, d)), rng.normal(sep, 1, size=(n - half, d))]
    )
    y = np.array([0] * half + [1] * (n - half), dtype=float)
    perm = rng.permutation(n)
    return X[perm], y[perm]


class TestSigmoid:
    def test_symmetry_point(self):
        assert sigmoid(0.0) == 0.5

    def test_large_argument_no_overflow(self):
        with np.errstate(over="raise"):
            assert sigmoid(800.0) == 1.0
            assert sigmoid(-800.0) == 0.0

    def test_reflection_identity(self):
        assert sigmoid(-1.7) == pytest.approx(1.0 - sigmoid(1.7), abs=1e-15)

    def test_vectorized(self):
        out = sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert out.tolist() == [0.0, 0.5, 1.0]


class TestEntropyGain:
    def test_uniform_binary(self):
        assert entropy((5, 5)) == 1.0

    def test_pure_node(self):
        assert entropy((7, 0)) == 0.0

    def test_hand_value(self):
        # -(3/4) log2(3/4) - (1/4) log2(1/4)
        expected = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
        assert entropy((3, 1)) == pytest.approx(expected, abs=1e-12)
        assert entropy((3, 1)) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            entropy((0, 0))

    def test_perfect_split(self):
        assert info_gain((5, 5), (5, 0), (0, 5)) == pytest.approx(1.0, abs=1e-12)

    def test_proportional_children_zero_gain(self):
        assert info_gain((5, 5), (4, 4), (1, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_arithmetic_oracle(self):
        parent, left, right = (8, 4), (6, 1), (2, 3)
        expected = entropy(parent) - (7 * entropy(left) + 5 * entropy(right)) / 12
        assert info_gain(parent, left, right) == pytest.approx(expected, abs=1e-12)
        assert info_gain(parent, left, right) >= 0

    def test_additivity_violation_aborts(self):
        with pytest.raises(ValueError, match="add up"):
            info_gain((5, 5), (4, 4), (2, 1))


class TestLogisticRegression:
    def test_separable_ordering(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0.0, 1.0])
        model = fit(LRSpec(learning_rate=0.5, epochs=500, l2=0.0), X, y)
        p = model.predict_proba(X)
        assert p[0] < p[1]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            n, d = int(rng.integers(5, 30)), int(rng.integers(1, 5))
            X = rng.normal(size=(n, d))
            y = (rng.random(n) < 0.5).astype(float)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            l2 = float(rng.choice([0.0, 0.01, 0.1]))
            eta = 1e-3

            # one implementation step from zero recovers its gradient
            model = fit(LRSpec(learning_rate=eta, epochs=1, l2=l2), X, y)
            grad_w = -model.weights / eta
            grad_b = -model.intercept / eta

            def loss(w, b):
                z = X @ w + b
                bce = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))
                return bce + 0.5 * l2 * float(w @ w)

            h = 1e-6
            w0 = np.zeros(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                fd = (loss(w0 + e, 0.0) - loss(w0 - e, 0.0)) / (2 * h)
                denom = max(abs(fd), abs(grad_w[j]), 1e-6)
                assert abs(fd - grad_w[j]) / denom < 1e-4
            fd_b = (loss(w0, h) - loss(w0, -h)) / (2 * h)
            assert abs(fd_b - grad_b) / max(abs(fd_b), abs(grad_b), 1e-6) < 1e-4

    def test_loss_non_increasing_small_rate(self):
        X, y = blob_data(seed=5)
        X = (X - X.mean(axis=0)) / X.std(axis=0)
        model = fit(LRSpec(learning_rate=0.01, epochs=200, l2=0.0), X, y)
        diffs = np.diff(model.loss_history)
        assert (diffs <= 1e-12).all()

    def test_single_class_aborts(self):
        with pytest.raises(TrainingError, match="both classes"):
            fit(LRSpec(), np.zeros((3, 1)), np.ones(3))

    def test_non_finite_aborts(self):
        X = np.array([[np.nan], [1.0]])
        with pytest.raises(TrainingError, match="non-finite"):
            fit(LRSpec(), X, np.array([0.0, 1.0]))


class TestSVM:
    def test_separable_ordering(self):
        X, y = blob_data(n=80, d=2, seed=7, sep=4.0)
        model = fit(SVMSpec(c=1.0, epochs=200), X, y)
        p = model.predict_proba(X)
        assert (p[y == 1].mean()) > (p[y == 0].mean())
        # margin sign agrees with the 0.5 probability cut
        margins = X @ model.weights + model.bias
        assert np.array_equal(margins >= 0, p >= 0.5)

    def test_deterministic(self):
        X, y = blob_data(n=60, d=3, seed=8)
        a = fit(SVMSpec(), X, y)
        b = fit(SVMSpec(), X, y)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


class TestKNN:
    def test_vote_fraction(self):
        X = np.array([[0.0], [0.1], [0.2], [10.0]])
        y = np.array([1.0, 1.0, 0.0, 0.0])
        model = fit(KNNSpec(k=3), X, y)
        assert model.predict_proba(np.array([[0.05]]))[0] == pytest.approx(2 / 3)

    def test_self_neighbor(self):
        X = np.array([[0.0], [5.0], [9.0]])
        y = np.array([1.0, 0.0, 1.0])
        model = fit(KNNSpec(k=1), X, y)
        assert model.predict_proba(X).tolist() == [1.0, 0.0, 1.0]

    def test_k_equals_n_gives_base_rate(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(40, 3))
        y = (rng.random(40) < 0.3).astype(float)
        model = fit(KNNSpec(k=40), X, y)
        p = model.predict_proba(rng.normal(size=(10, 3)))
        assert np.allclose(p, y.mean(), atol=1e-12)

    def test_distance_tie_broken_by_lower_index(self):
        X = np.array([[-1.0], [1.0]])
        y = np.array([0.0, 1.0])
        model = fit(KNNSpec(k=1), X, y)
        # query exactly between both training points: index 0 wins
        assert model.predict_proba(np.array([[0.0]]))[0] == 0.0

    def test_single_class_tolerated(self):
        X = np.array([[0.0], [1.0]])
        model = fit(KNNSpec(k=2), X, np.zeros(2))
        assert model.predict_proba(np.array([[0.5]]))[0] == 0.0

    def test_large_path_matches_exact_path(self):
        rng = np.random.default_rng(10)
        Xtr = rng.normal(size=(5000, 4))
        ytr = (rng.random(5000) < 0.4).astype(float)
        q = rng.normal(size=(50, 4))
        big = fit(KNNSpec(k=7), Xtr, ytr).predict_proba(q)
        from ccap.learners import _knn_scores

        exact = np.array(
            [
                ytr[
                    np.argsort(np.sum((Xtr - qi) ** 2, axis=1), kind="stable")[:7]
                ].mean()
                for qi in q
            ]
        )
        assert np.allclose(big, exact, atol=1e-12)


def walk_gains(tree, X, y):
    """Recompute the info gain of every accepted split in a fitted tree."""
    gains = []

    def visit(node, rows):
        f = tree.feature[node]
        if f < 0:
            return
        thr = tree.threshold[node]
        go_left = X[rows, f] <= thr
        left_rows, right_rows = rows[go_left], rows[~go_left]
        parent = (np.sum(y[rows] == 0), np.sum(y[rows] == 1))
        left = (np.sum(y[left_rows] == 0), np.sum(y[left_rows] == 1))
        right = (np.sum(y[right_rows] == 0), np.sum(y[right_rows] == 1))
        gains.append(info_gain(parent, left, right))
        visit(tree.left[node], left_rows)
        visit(tree.right[node], right_rows)

    visit(0, np.arange(len(X)))
    return gains


class TestDecisionTree:
    # XOR-like 5-point set: (0,0)->0 twice, (0,1)->1, (1,0)->1, (1,1)->0.
    # Hand enumeration of greedy splits: both features split at 0.5 with
    # gain H(2,3) - (3/5 H(1,2) + 2/5 H(1,1)) ~ 0.02, tie broken by the
    # lower feature index; each child then splits pure on feature 1.
    XOR_X = np.array([[0, 0], [0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    XOR_Y = np.array([0, 0, 1, 1, 0], dtype=float)

    def test_xor_like_training_accuracy(self):
        model = fit(DTSpec(max_depth=2, min_samples_split=2), self.XOR_X, self.XOR_Y)
        p = model.predict_proba(self.XOR_X)
        assert np.array_equal(p >= 0.5, self.XOR_Y == 1)
        assert model.tree.feature[0] == 0  # tie resolved to lowest feature

    def test_depth_bound_and_leaf_range(self):
        X, y = blob_data(n=300, d=5, seed=11, sep=1.0)
        model = fit(DTSpec(max_depth=3, min_samples_split=5), X, y)
        assert model.tree.depth <= 3
        p = model.predict_proba(X)
        assert ((p >= 0.0) & (p <= 1.0)).all()

    def test_every_accepted_split_has_positive_gain(self):
        X, y = blob_data(n=200, d=4, seed=12, sep=0.8)
        model = fit(DTSpec(max_depth=6, min_samples_split=4), X, y)
        gains = walk_gains(model.tree, X, y)
        assert gains and all(g > 0 for g in gains)

    def test_deterministic(self):
        X, y = blob_data(n=120, d=3, seed=13)
        a = fit(DTSpec(), X, y)
        b = fit(DTSpec(), X, y)
        assert np.array_equal(a.tree.feature, b.tree.feature)
        assert np.array_equal(a.tree.threshold, b.tree.threshold)


class TestRandomForest:
    def test_degenerate_forest_equals_lone_tree(self):
        X, y = blob_data(n=150, d=4, seed=14)
        rf = fit(
            RFSpec(
                n_trees=1,
                max_depth=4,
                min_samples_split=4,
                feature_subsample=4,
                bootstrap=False,
                seed=0,
            ),
            X,
            y,
        )
        dt = fit(DTSpec(max_depth=4, min_samples_split=4), X, y)
        assert np.array_equal(rf.predict_proba(X), dt.predict_proba(X))

    def test_prediction_is_mean_of_trees(self):
        X, y = blob_data(n=200, d=5, seed=15)
        rf = fit(RFSpec(n_trees=7, max_depth=4, seed=3), X, y)
        q = X[:31]
        stacked = np.mean([t.predict(q) for t in rf.trees], axis=0)
        assert np.allclose(rf.predict_proba(q), stacked, atol=1e-15)

    def test_seed_determinism(self):
        X, y = blob_data(n=100, d=4, seed=16)
        a = fit(RFSpec(n_trees=5, seed=4), X, y)
        b = fit(RFSpec(n_trees=5, seed=4), X, y)
        c = fit(RFSpec(n_trees=5, seed=5), X, y)
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
        assert not np.array_equal(a.predict_proba(X), c.predict_proba(X))


class TestGradientBoosting:
    def test_zero_rate_predicts_base_rate(self):
        X, y = blob_data(n=100, d=3, seed=17)
        model = fit(GBSpec(n_rounds=10, learning_rate=0.0, max_depth=2), X, y)
        assert np.allclose(model.predict_proba(X), y.mean(), atol=1e-12)

    def test_depth_zero_single_round_newton_oracle(self):
        X, y = blob_data(n=80, d=2, seed=18)
        lam = 1.5
        model = fit(
            GBSpec(n_rounds=1, learning_rate=1.0, max_depth=0, l2_leaf=lam), X, y
        )
        p0 = y.mean()
        f0 = math.log(p0 / (1 - p0))
        grad = y - p0
        hess = np.full_like(y, p0 * (1 - p0))
        leaf = np.sum(grad) / (np.sum(hess) + lam)
        expected = 1.0 / (1.0 + np.exp(-(f0 + leaf)))
        assert np.allclose(model.predict_proba(X), expected, atol=1e-12)

    def test_boosting_fits_nonlinear_signal(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(400, 2))
        y = ((X[:, 0] * X[:, 1]) > 0).astype(float)  # pure interaction
        model = fit(GBSpec(n_rounds=40, learning_rate=0.3, max_depth=3), X, y)
        acc = np.mean((model.predict_proba(X) >= 0.5) == (y == 1))
        assert acc > 0.95

    def test_regularization_shrinks_leaves(self):
        X, y = blob_data(n=100, d=3, seed=20)
        plain = fit(GBSpec(n_rounds=5, learning_rate=1.0, max_depth=2), X, y)
        reg = fit(
            GBSpec(n_rounds=5, learning_rate=1.0, max_depth=2, l2_leaf=50.0), X, y
        )
        spread = lambda m: np.abs(m.decision_function(X) - m.base_score).mean()
        assert spread(reg) < spread(plain)

    def test_deterministic(self):
        X, y = blob_data(n=90, d=3, seed=21)
        a = fit(GBSpec(n_rounds=8), X, y)
        b = fit(GBSpec(n_rounds=8), X, y)
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))


class TestContracts:
    def test_probabilities_in_unit_interval(self):
        X, y = blob_data(n=60, d=3, seed=22)
        q = np.random.default_rng(0).normal(size=(20, 3))
        specs = [
            LRSpec(epochs=50),
            SVMSpec(epochs=50),
            KNNSpec(k=5),
            DTSpec(max_depth=3),
            RFSpec(n_trees=3, max_depth=3),
            GBSpec(n_rounds=5),
            ConstSpec(),
        ]
        for spec in specs:
            p = fit(spec, X, y).predict_proba(q)
            assert ((p >= 0.0) & (p <= 1.0)).all(), spec.kind

    def test_width_mismatch_aborts(self):
        X, y = blob_data(n=40, d=3, seed=23)
        for spec in [LRSpec(epochs=5), KNNSpec(k=3), DTSpec(max_depth=2),
                     RFSpec(n_trees=2, max_depth=2), GBSpec(n_rounds=2)]:
            model = fit(spec, X, y)
            with pytest.raises(ValueError, match="width"):
                model.predict_proba(np.zeros((2, 5)))

    def test_constant_learner(self):
        X, y = blob_data(n=20, d=2, seed=24)
        model = fit(ConstSpec(value=0.5), X, y)
        assert np.all(model.predict_proba(X) == 0.5)
