import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from painmtl import nn
from painmtl.baselines import (
    LinearConfig,
    LinearModel,
    logistic_gradient,
    logistic_objective,
    load_linear,
    predict_linear,
    save_linear,
    svm_objective,
    train_linear_svm,
    train_logistic,
    tune_regularization,
)
from painmtl.errors import DimensionMismatch, SingleClassData, ValidationError


def symmetric_1d():
    x = np.r_[-np.ones(50), np.ones(50)][:, None]
    y = np.r_[np.zeros(50), np.ones(50)]
    return x, y


def blobs(n, seed, gap=1.0):
    # classes separated by a slab of half-width ``gap`` along (1, 1)/sqrt(2)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    along = np.where(y == 1, 1, -1) * (gap + rng.exponential(1.0, n))
    across = rng.normal(0, 2, n)
    u, v = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    return along[:, None] * u + across[:, None] * v, y


class TestLogistic:
    def test_symmetric_problem(self):
        x, y = symmetric_1d()
        m = train_logistic(x, y, l2=0.1)
        assert m.weights[0] > 0 and abs(m.bias) < 1e-3
        assert np.mean(predict_linear(m, x) == y) == 1.0

    def test_random_labels(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(1000, 5)), rng.integers(0, 2, 1000)
        acc = np.mean(predict_linear(train_logistic(x, y), x) == y)
        assert 0.45 <= acc <= 0.60

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(80, 3)), rng.integers(0, 2, 80).astype(float)
        m = train_logistic(x, y, l2=0.05)
        gw, gb = logistic_gradient(m.weights, m.bias, x, y, 0.05)
        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (logistic_objective(m.weights + e, m.bias, x, y, 0.05)
                  - logistic_objective(m.weights - e, m.bias, x, y, 0.05)) / (2 * h)
            assert abs(fd - gw[i]) <= 1e-6
        fd_b = (logistic_objective(m.weights, m.bias + h, x, y, 0.05)
                - logistic_objective(m.weights, m.bias - h, x, y, 0.05)) / (2 * h)
        assert abs(fd_b - gb) <= 1e-6
        assert np.sqrt(gw @ gw + gb * gb) <= 1e-6

    def test_convex_sanity(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(100, 4)), rng.integers(0, 2, 100)
        m = train_logistic(x, y, l2=0.01)
        best = logistic_objective(m.weights, m.bias, x, y, 0.01)
        for _ in range(50):
            w, b = rng.normal(0, 1, 4), rng.normal()
            assert best <= logistic_objective(w, b, x, y, 0.01)

    def test_single_class(self):
        with pytest.raises(SingleClassData):
            train_logistic(np.zeros((4, 2)), np.ones(4))

    def test_too_few(self):
        with pytest.raises(ValidationError):
            train_logistic(np.zeros((1, 2)), np.ones(1))

    def test_reproducible(self):
        x, y = blobs(60, 3)
        a, b = train_logistic(x, y), train_logistic(x, y)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.bias == b.bias


class TestSvm:
    def test_symmetric_problem(self):
        x, y = symmetric_1d()
        m = train_linear_svm(x, y, c=1.0)
        assert m.weights[0] > 0
        assert np.mean(predict_linear(m, x) == y) == 1.0

    def test_tiny_c(self):
        x, y = blobs(100, 4)
        m = train_linear_svm(x, y, c=1e-9)
        assert np.linalg.norm(m.weights) <= 1e-3

    def test_margin_blobs_generalize(self):
        x, y = blobs(400, 5)
        xt, yt = blobs(2000, 6)
        m = train_linear_svm(x, y, c=10.0, cfg=LinearConfig(max_iter=4000))
        assert np.mean(predict_linear(m, xt) == yt) >= 0.99

    def test_objective_decreases_from_zero(self):
        x, y = blobs(100, 7)
        m = train_linear_svm(x, y, c=1.0)
        assert svm_objective(m.weights, m.bias, x, y, 1.0) < svm_objective(np.zeros(2), 0.0, x, y, 1.0)


class TestPredict:
    def test_zero_model_tie(self):
        for kind in ("logistic", "hinge"):
            m = LinearModel(np.zeros(3), 0.0, kind)
            assert np.all(predict_linear(m, np.random.default_rng(0).normal(size=(10, 3))) == 1)

    def test_negative_input(self):
        m = LinearModel(np.array([1.0]), 0.0, "logistic")
        assert predict_linear(m, np.array([-2.0])) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_linear(LinearModel(np.zeros(3), 0.0, "hinge"), np.zeros((2, 4)))

    def test_agrees_with_zero_hidden_network(self):
        rng = np.random.default_rng(8)
        w, b = rng.normal(size=4), rng.normal()
        x = rng.normal(size=(100, 4))
        spec = nn.NetworkSpec(4, (), ())
        params = nn.init_params(spec, rng)
        params.head.weights[0, 0] = w
        params.head.biases[0, 0] = b
        lin = predict_linear(LinearModel(w, b, "logistic"), x)
        np.testing.assert_array_equal(lin, nn.predict_labels(params, spec, x, ["all"] * 100))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, seed, k):
        rng = np.random.default_rng(seed)
        w, b = rng.normal(size=3), rng.normal()
        x = rng.normal(size=(50, 3))
        for kind in ("logistic", "hinge"):
            base = predict_linear(LinearModel(w, b, kind), x)
            scaled = predict_linear(LinearModel(k * w, k * b, kind), x)
            z = x @ w + b
            # only decision values rounding across 0 may flip
            safe = np.abs(z) > 1e-9
            np.testing.assert_array_equal(base[safe], scaled[safe])


class TestTuningAndPersistence:
    def test_tune_picks_from_grid(self):
        x, y = blobs(120, 9)
        assert tune_regularization("logistic", x, y) in (0.01, 0.1, 1.0, 10.0)
        assert tune_regularization("hinge", x, y, grid=(0.5,)) == 0.5

    def test_round_trip(self, tmp_path):
        x, y = blobs(50, 10)
        m = train_logistic(x, y)
        save_linear(tmp_path / "lr.json", m)
        back = load_linear(tmp_path / "lr.json")
        assert back.kind == "logistic" and back.bias == m.bias
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(predict_linear(back, x), predict_linear(m, x))

    def test_kind_checked(self, tmp_path):
        spec = nn.NetworkSpec(2)
        nn.save_model(tmp_path / "mlp.json", spec, nn.init_params(spec, np.random.default_rng(0)))
        with pytest.raises(ValidationError):
            load_linear(tmp_path / "mlp.json")
