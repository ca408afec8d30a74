import numpy as np
import pytest

from ccap.errors import TrainingError
from ccap.neural import (
    MlpSpec,
    embedding_widths,
    forward,
    gradient_check,
    init_model,
    relu,
    train,
)


def blob(n=200, d=4, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.vstack([rng.normal(0, 1, size=(half, d)), rng.normal(2.5, 1, size=(n - half, d))])
    y = np.array([0.0] * half + [1.0] * (n - half))
    perm = rng.permutation(n)
    return X[perm], y[perm]


class TestRelu:
    def test_elementwise(self):
        assert relu([-1.0, 0.0, 2.0]).tolist() == [0.0, 0.0, 2.0]

    def test_all_negative(self):
        assert relu([-3.0, -0.5]).tolist() == [0.0, 0.0]

    def test_idempotent(self):
        v = np.random.default_rng(1).normal(size=50)
        assert np.array_equal(relu(relu(v)), relu(v))


class TestForward:
    def test_zero_weights_output_half(self):
        spec = MlpSpec(hidden_sizes=(4, 3, 2), seed=0)
        model = init_model(spec, n_dense=3)
        for w in model.weights:
            w[:] = 0.0
        out = forward(model, np.random.default_rng(2).normal(size=(5, 3)))
        assert np.allclose(out, 0.5, atol=1e-15)

    def test_dense_only_consumes_no_ids(self):
        spec = MlpSpec(hidden_sizes=(4, 4, 4), seed=1)
        model = init_model(spec, n_dense=2)
        out = forward(model, np.zeros((3, 2)))
        assert out.shape == (3,)
        assert ((out > 0.0) & (out < 1.0)).all()

    def test_deterministic_replay(self):
        spec = MlpSpec(hidden_sizes=(8, 8, 8), seed=7, embeddings=((4, 2),))
        x = np.random.default_rng(3).normal(size=(6, 5))
        ids = np.random.default_rng(4).integers(0, 4, size=(6, 1))
        a = forward(init_model(spec, 5), x, ids)
        b = forward(init_model(spec, 5), x, ids)
        assert np.array_equal(a, b)

    def test_out_of_range_category_aborts(self):
        spec = MlpSpec(embeddings=((3, 2),))
        model = init_model(spec, n_dense=2)
        with pytest.raises(ValueError, match="out of range"):
            forward(model, np.zeros((1, 2)), np.array([[3]]))

    def test_width_mismatch_aborts(self):
        model = init_model(MlpSpec(), n_dense=4)
        with pytest.raises(ValueError, match="width"):
            forward(model, np.zeros((2, 3)))

    def test_output_strictly_inside_unit_interval(self):
        spec = MlpSpec(hidden_sizes=(16, 8, 4), seed=5)
        model = init_model(spec, n_dense=6)
        x = np.random.default_rng(6).normal(size=(50, 6)) * 3
        out = forward(model, x)
        assert ((out > 0.0) & (out < 1.0)).all()


class TestTrain:
    def test_loss_decreases_on_separable_blob(self):
        X, y = blob(n=200, d=4, seed=10)
        model = train(MlpSpec(hidden_sizes=(16, 8, 4), learning_rate=3e-3, epochs=50, seed=0), X, None, y)
        assert len(model.loss_history) == 50
        assert model.loss_history[-1] < model.loss_history[0]

    def test_zero_learning_rate_is_noop(self):
        X, y = blob(n=50, d=3, seed=11)
        spec = MlpSpec(hidden_sizes=(4, 4, 4), learning_rate=0.0, epochs=3, seed=2)
        trained = train(spec, X, None, y)
        fresh = init_model(spec, n_dense=3)
        for a, b in zip(trained.parameters(), fresh.parameters()):
            assert np.array_equal(a, b)

    def test_xor_capability(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
        y = np.array([0.0, 1.0, 1.0, 0.0])
        spec = MlpSpec(
            hidden_sizes=(8, 8, 8), learning_rate=0.01, epochs=2000, batch_size=4, seed=3
        )
        model = train(spec, X, None, y)
        pred = forward(model, X) >= 0.5
        assert np.array_equal(pred, y == 1)

    def test_determinism(self):
        X, y = blob(n=80, d=3, seed=12)
        spec = MlpSpec(hidden_sizes=(8, 4, 2), epochs=5, seed=9)
        a = train(spec, X, None, y)
        b = train(spec, X, None, y)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_divergence_reports_epoch(self):
        X, y = blob(n=40, d=2, seed=13)
        with pytest.raises(TrainingError, match="epoch"):
            train(
                MlpSpec(hidden_sizes=(4, 4, 4), learning_rate=1e308, epochs=3,
                        batch_size=8, seed=0),
                X, None, y,
            )

    def test_embedding_tables_learn_when_informative(self):
        rng = np.random.default_rng(14)
        n = 300
        ids = rng.integers(0, 4, size=(n, 1))
        y = (ids[:, 0] >= 2).astype(float)  # only the category matters
        dense = rng.normal(size=(n, 2))  # pure noise
        spec = MlpSpec(
            hidden_sizes=(8, 8, 8), learning_rate=5e-3, epochs=30, seed=4,
            embeddings=((4, 2),),
        )
        trained = train(spec, dense, ids, y)
        fresh = init_model(spec, n_dense=2)
        assert not np.allclose(trained.emb_tables[0], fresh.emb_tables[0])


def _kink_free(model, dense, ids, margin=1e-4):
    """True when no ReLU pre-activation sits within margin of zero."""
    from ccap.neural import _assemble_input, _check_inputs, _forward_pass

    dense, ids = _check_inputs(model, dense, ids)
    _, _, pres = _forward_pass(model, _assemble_input(model, dense, ids))
    return all(np.abs(p).min(initial=1.0) > margin for p in pres)


class TestGradientCheck:
    def test_correct_backprop_with_and_without_embeddings(self):
        rng = np.random.default_rng(15)
        for trial in range(6):
            with_emb = trial % 2 == 0
            emb = ((3, 2), (5, 3)) if with_emb else ()
            spec = MlpSpec(
                hidden_sizes=(5, 4, 3), seed=100 + trial, embeddings=emb
            )
            model = init_model(spec, n_dense=3)
            # keep pre-activations away from the ReLU kink: zero-initialized
            # biases can leave dead rows at exactly zero
            kink_rng = np.random.default_rng(1000 + trial)
            for b in model.biases:
                b += kink_rng.uniform(0.01, 0.05, size=b.shape)
            n = 12
            dense = rng.normal(size=(n, 3))
            ids = (
                np.column_stack([rng.integers(0, 3, n), rng.integers(0, 5, n)])
                if with_emb
                else None
            )
            y = rng.integers(0, 2, size=n).astype(float)
            assert _kink_free(model, dense, ids)
            err = gradient_check(model, dense, ids, y)
            assert err < 1e-4, f"trial {trial}: {err}"

    def test_corrupted_gradient_detected(self):
        spec = MlpSpec(hidden_sizes=(4, 3, 2), seed=20)
        model = init_model(spec, n_dense=2)
        rng = np.random.default_rng(16)
        dense = rng.normal(size=(8, 2))
        y = rng.integers(0, 2, size=8).astype(float)
        err = gradient_check(model, dense, None, y, corrupt_scale=0.05)
        assert err > 1e-2

    def test_zero_weight_model_matches(self):
        spec = MlpSpec(hidden_sizes=(4, 3, 2), seed=21)
        model = init_model(spec, n_dense=2)
        for w in model.weights:
            w[:] = 0.0
        for b in model.biases:
            b[:] = 0.0
        rng = np.random.default_rng(17)
        dense = rng.normal(size=(6, 2))
        y = rng.integers(0, 2, size=6).astype(float)
        err = gradient_check(model, dense, None, y)
        assert np.isfinite(err) and err < 1e-4


class TestSpecValidation:
    def test_default_three_hidden_layers(self):
        assert MlpSpec().hidden_sizes == (64, 32, 16)

    def test_bad_sizes_rejected(self):
        with pytest.raises(ValueError):
            MlpSpec(hidden_sizes=())
        with pytest.raises(ValueError):
            MlpSpec(hidden_sizes=(4, 0, 4))

    def test_embedding_width_rule(self):
        assert embedding_widths([2, 5, 40]) == [1, 3, 8]
