import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathospeech.errors import DataError, EmptyClassError, EmptyFeatureError
from pathospeech.features import FeatureMatrix
from pathospeech.lasso import (
    LassoModel,
    fit_lasso,
    kkt_violation,
    lasso_objective,
    load_model,
    predict_utterance,
    save_model,
    soft_threshold,
    sweep_alpha,
)

PAPER_ALPHA_GRID = (0.1, 0.01, 0.001, 0.0001)


def toy_problem(n=40, d=2, seed=0, noise=0.05):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w_true = rng.uniform(0.5, 1.5, d)
    y = (X @ w_true + noise * rng.standard_normal(n) > 0).astype(float)
    if y.min() == y.max():  # force both classes
        y[0] = 1.0 - y[0]
    return X, y


def ista_oracle(X, y, alpha, iters=200_000):
    """Proximal subgradient descent on the same objective, coded
    independently of the coordinate-descent path."""
    n, d = X.shape
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = (X - mean) / scale
    b = y.mean()
    w = np.zeros(d)
    lipschitz = np.linalg.norm(Xs, 2) ** 2 / n
    step = 1.0 / lipschitz
    for _ in range(iters):
        grad = -(Xs.T @ (y - Xs @ w - b)) / n
        z = w - step * grad
        w_new = np.sign(z) * np.maximum(np.abs(z) - step * alpha, 0.0)
        if np.max(np.abs(w_new - w)) < 1e-13:
            w = w_new
            break
        w = w_new
    return w, b


class TestSoftThreshold:
    def test_positive(self):
        assert soft_threshold(3.0, 1.0) == 2.0

    def test_negative(self):
        assert soft_threshold(-3.0, 1.0) == -2.0

    def test_inside_band(self):
        assert soft_threshold(0.5, 1.0) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(
        x=st.floats(-1e6, 1e6, allow_nan=False),
        lam=st.floats(0.0, 1e6, allow_nan=False),
    )
    def test_shrinks_toward_zero(self, x, lam):
        out = soft_threshold(x, lam)
        assert abs(out) == max(abs(x) - lam, 0.0)
        assert out * x >= 0.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(DataError):
            soft_threshold(1.0, -0.1)


class TestFit:
    def test_null_model_condition(self):
        X, y = toy_problem(seed=1)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        Xs = (X - mean) / scale
        alpha_max = np.max(np.abs(Xs.T @ (y - y.mean()))) / len(y)
        model = fit_lasso(X, y, alpha=alpha_max * 1.0001)
        assert np.count_nonzero(model.weights) == 0
        assert model.intercept == y.mean()

    def test_matches_subgradient_oracle(self):
        X, y = toy_problem(n=60, d=2, seed=2)
        alpha = 0.01
        model = fit_lasso(X, y, alpha, max_iters=100_000, tol=1e-12)
        w_oracle, b_oracle = ista_oracle(X, y, alpha)
        np.testing.assert_allclose(model.weights, w_oracle, atol=1e-4)
        assert model.intercept == pytest.approx(b_oracle, abs=1e-10)

    def test_matches_oracle_five_features(self):
        X, y = toy_problem(n=80, d=5, seed=3)
        alpha = 0.02
        model = fit_lasso(X, y, alpha, max_iters=100_000, tol=1e-12)
        w_oracle, _ = ista_oracle(X, y, alpha)
        np.testing.assert_allclose(model.weights, w_oracle, atol=1e-4)

    def test_duplicate_columns_pruned(self):
        # Typical-case collinearity pruning. The dropped duplicate's
        # optimum sits exactly on the soft-threshold boundary, so allow
        # float dust at the 1e-12 level.
        rng = np.random.default_rng(4)
        base = rng.standard_normal(60)
        X = np.stack([base, base, rng.standard_normal(60)], axis=1)
        y = (base > 0).astype(float)
        model = fit_lasso(X, y, alpha=0.01)
        assert np.count_nonzero(np.abs(model.weights[:2]) > 1e-12) <= 1

    def test_objective_non_increasing(self):
        X, y = toy_problem(n=50, d=6, seed=5)
        model = fit_lasso(X, y, alpha=0.005)
        path = np.array(model.meta["objective_path"])
        assert (np.diff(path) <= 1e-12).all()

    def test_kkt_on_random_problems(self):
        for seed in range(10):
            X, y = toy_problem(n=30 + seed, d=4, seed=seed)
            model = fit_lasso(X, y, alpha=0.01, max_iters=50_000, tol=1e-10)
            assert kkt_violation(model, X, y) < 1e-5

    def test_sparsity_monotone_in_alpha(self):
        X, y = toy_problem(n=60, d=8, seed=6)
        counts = [
            fit_lasso(X, y, alpha).n_nonzero for alpha in PAPER_ALPHA_GRID
        ]
        # Grid is descending in alpha, so counts must be non-decreasing.
        assert all(a <= b for a, b in zip(counts, counts[1:])), counts

    def test_constant_column_pinned(self):
        X, y = toy_problem(n=40, d=3, seed=7)
        X[:, 1] = 5.0
        model = fit_lasso(X, y, alpha=0.001)
        assert model.weights[1] == 0.0
        assert model.feature_scale[1] == 1.0

    def test_empty_class_rejected(self):
        X = np.random.default_rng(8).standard_normal((10, 2))
        with pytest.raises(EmptyClassError):
            fit_lasso(X, np.zeros(10), alpha=0.01)

    def test_non_finite_rejected(self):
        X, y = toy_problem(seed=9)
        X[0, 0] = np.nan
        with pytest.raises(DataError):
            fit_lasso(X, y, alpha=0.01)

    def test_bad_labels_rejected(self):
        X, _ = toy_problem(seed=10)
        y = np.full(len(X), 0.5)
        with pytest.raises(DataError):
            fit_lasso(X, y, alpha=0.01)

    def test_refit_invariant_to_column_rescale(self):
        X, y = toy_problem(n=50, d=3, seed=11)
        base = fit_lasso(X, y, alpha=0.01)
        rescaled = X.copy()
        rescaled[:, 0] = rescaled[:, 0] * 250.0 - 3.0
        other = fit_lasso(rescaled, y, alpha=0.01)
        for row, row_rescaled in zip(X, rescaled):
            a = predict_utterance(base, row[np.newaxis, :])
            b = predict_utterance(other, row_rescaled[np.newaxis, :])
            assert a.label == b.label


def _fm(data, kind="ltas"):
    return FeatureMatrix(
        data=data, kind=kind, frame_hop_ms=10.0, frame_len_ms=25.0,
        sample_rate=16000,
    )


class TestPredict:
    def test_zero_weights_intercept_only(self):
        model = LassoModel(
            weights=np.zeros(3), intercept=0.7, alpha=0.1,
            feature_mean=np.zeros(3), feature_scale=np.ones(3),
            feature_kind="ltas",
        )
        result = predict_utterance(model, np.zeros((1, 3)))
        assert result.score == pytest.approx(0.7, abs=1e-15)
        assert result.label == "pathological"

    def test_boundary_is_pathological(self):
        # Per-frame predictions {0.2, 0.8} average to exactly 0.5.
        model = LassoModel(
            weights=np.array([0.3]), intercept=0.5, alpha=0.1,
            feature_mean=np.zeros(1), feature_scale=np.ones(1),
            feature_kind="mfcc",
        )
        result = predict_utterance(model, np.array([[-1.0], [1.0]]))
        assert result.score == pytest.approx(0.5, abs=1e-15)
        assert result.label == "pathological"

    def test_single_row_equals_single_frame_path(self):
        rng = np.random.default_rng(12)
        model = LassoModel(
            weights=rng.standard_normal(4), intercept=0.2, alpha=0.1,
            feature_mean=rng.standard_normal(4),
            feature_scale=rng.uniform(0.5, 2.0, 4),
            feature_kind="ltas",
        )
        row = rng.standard_normal((1, 4))
        assert predict_utterance(model, row).score == predict_utterance(
            model, _fm(row)
        ).score

    def test_zero_rows_error(self):
        model = LassoModel(
            weights=np.zeros(2), intercept=0.0, alpha=0.1,
            feature_mean=np.zeros(2), feature_scale=np.ones(2),
            feature_kind="ltas",
        )
        with pytest.raises(EmptyFeatureError):
            predict_utterance(model, np.empty((0, 2)))

    def test_dim_mismatch(self):
        model = LassoModel(
            weights=np.zeros(2), intercept=0.0, alpha=0.1,
            feature_mean=np.zeros(2), feature_scale=np.ones(2),
            feature_kind="ltas",
        )
        with pytest.raises(DataError):
            predict_utterance(model, np.zeros((1, 3)))


class TestSweep:
    def _setup(self, seed=13):
        # Widely separated classes so every alpha on the grid separates
        # them perfectly (needed by the tie-break test).
        rng = np.random.default_rng(seed)
        n = 60
        X = np.concatenate(
            [rng.normal(-4.0, 0.5, (n // 2, 3)), rng.normal(4.0, 0.5, (n // 2, 3))]
        )
        y = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
        items = []
        for i in range(10):
            healthy = rng.normal(-4.0, 0.5, (1, 3))
            items.append((f"h{i}", f"sh{i}", "healthy", _fm(healthy)))
            patho = rng.normal(4.0, 0.5, (1, 3))
            items.append((f"p{i}", f"sp{i}", "pathological", _fm(patho)))
        return (X, y), items

    def test_paper_grid_four_rows(self):
        train, items = self._setup()
        _, rows = sweep_alpha(train, items, grid=PAPER_ALPHA_GRID)
        assert [r.param for r in rows] == list(PAPER_ALPHA_GRID)

    def test_singleton(self):
        train, items = self._setup()
        model, rows = sweep_alpha(train, items, grid=(0.01,))
        assert len(rows) == 1
        assert model.alpha == 0.01

    def test_tie_goes_to_larger_alpha(self):
        train, items = self._setup()
        model, rows = sweep_alpha(train, items, grid=(0.1, 0.01))
        # Separable setup: both alphas hit accuracy 1.0, the sparser wins.
        assert all(r.accuracy == 1.0 for r in rows)
        assert model.alpha == 0.1


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X, y = toy_problem(n=50, d=6, seed=14)
        model = fit_lasso(X, y, alpha=0.01)
        path = tmp_path / "model.json"
        save_model(path, model)
        back = load_model(path)
        np.testing.assert_array_equal(back.weights, model.weights)
        assert back.intercept == model.intercept
        assert back.alpha == model.alpha
        row = X[:1]
        assert predict_utterance(back, row).score == predict_utterance(
            model, row
        ).score

    def test_reject_garbage(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(DataError):
            load_model(path)


def test_objective_helper_matches_definition():
    rng = np.random.default_rng(15)
    Xs = rng.standard_normal((10, 3))
    y = rng.integers(0, 2, 10).astype(float)
    w = rng.standard_normal(3)
    b = 0.4
    n = 10
    resid = y - Xs @ w - b
    expected = resid @ resid / (2 * n) + 0.05 * np.abs(w).sum()
    assert lasso_objective(Xs, y, w, b, 0.05) == pytest.approx(expected, rel=1e-15)
