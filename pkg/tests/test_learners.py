import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mob.data import TargetKind
from mob.learners import ForestModel, ForestParams, fit_forest, predict_forest

REG, BIN = TargetKind.REGRESSION, TargetKind.BINARY


def manual_forest(trees, d=1, categorical=None):
    cat = [False] * d if categorical is None else categorical
    return ForestModel.from_dict({
        "type": "forest", "kind": "regression", "params": ForestParams(num_trees=len(trees)).to_dict(),
        "categorical": cat, "n_levels": [3 if c else 0 for c in cat], "trees": trees,
    })


class TestFitForest:
    def test_separable_stump(self):
        params = ForestParams(num_trees=1, mtry=1, min_node_size=1, bootstrap=False)
        model = fit_forest([[0.0], [1.0]], [0.0, 1.0], REG, params)
        np.testing.assert_array_equal(predict_forest(model, [[0.0], [1.0]]), [0.0, 1.0])
        assert model.tree_to_dict(0)["threshold"] == 0.5

    @pytest.mark.parametrize("kind,value", [(REG, 3.0), (BIN, 1.0)])
    def test_constant_target(self, kind, value):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 3))
        model = fit_forest(X, np.full(30, value), kind, ForestParams(num_trees=20))
        np.testing.assert_array_equal(predict_forest(model, rng.normal(size=(10, 3))), value)

    def test_square_beats_mean(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-1, 1, 200)
        y = x ** 2
        x_test = rng.uniform(-1, 1, 500)
        y_test = x_test ** 2
        model = fit_forest(x[:, None], y, REG, ForestParams(num_trees=100, seed=3))
        forest_mse = np.mean((predict_forest(model, x_test[:, None]) - y_test) ** 2)
        # oracle: MSE of predicting the training mean everywhere
        mean_mse = np.mean((y.mean() - y_test) ** 2)
        assert forest_mse < mean_mse

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        X, y = rng.normal(size=(40, 5)), rng.normal(size=40)
        a = fit_forest(X, y, REG, ForestParams(num_trees=30, seed=9))
        b = fit_forest(X, y, REG, ForestParams(num_trees=30, seed=9))
        c = fit_forest(X, y, REG, ForestParams(num_trees=30, seed=10))
        np.testing.assert_array_equal(a.predict(X), b.predict(X))
        assert not np.array_equal(a.predict(X), c.predict(X))

    def test_classification_probability_range(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 4))
        y = (X[:, 0] + rng.normal(0, 0.5, 60) > 0).astype(float)
        p = predict_forest(fit_forest(X, y, BIN, ForestParams(num_trees=50)), rng.normal(size=(100, 4)))
        assert np.all((p >= 0) & (p <= 1))

    def test_unbootstrapped_fully_grown_tree_interpolates(self):
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(25, 2)), rng.normal(size=25)
        params = ForestParams(num_trees=1, mtry=2, min_node_size=1, bootstrap=False)
        np.testing.assert_allclose(predict_forest(fit_forest(X, y, REG, params), X), y)

    def test_max_depth(self):
        rng = np.random.default_rng(4)
        X, y = rng.normal(size=(50, 2)), rng.normal(size=50)
        model = fit_forest(X, y, REG, ForestParams(num_trees=5, max_depth=1))

        def depth(nd):
            return 0 if "value" in nd else 1 + max(depth(nd["left"]), depth(nd["right"]))
        assert all(depth(model.tree_to_dict(t)) <= 1 for t in range(5))

    def test_categorical_split(self):
        x = np.array([0, 1, 2, 0, 1, 2] * 5, dtype=float)
        y = (x == 1).astype(float) * 10
        params = ForestParams(num_trees=1, mtry=1, min_node_size=1, bootstrap=False)
        model = fit_forest(x[:, None], y, REG, params, categorical=[True], n_levels=[3])
        assert model.tree_to_dict(0)["level"] == 1
        np.testing.assert_array_equal(model.predict([[0], [1], [2]]), [0, 10, 0])

    @pytest.mark.parametrize("X,y", [(np.zeros((0, 2)), np.zeros(0)), (np.zeros((3, 2)), np.zeros(2))])
    def test_rejects_bad_shapes(self, X, y):
        with pytest.raises(ValueError):
            fit_forest(X, y, REG)

    def test_mtry_out_of_range(self):
        with pytest.raises(ValueError):
            fit_forest(np.zeros((4, 2)), np.zeros(4), REG, ForestParams(mtry=3))

    def test_default_params(self):
        assert ForestParams().resolve(30, BIN).mtry == 6
        assert ForestParams().resolve(30, REG).mtry == 10
        assert ForestParams().resolve(30, BIN).min_node_size == 1
        assert ForestParams().resolve(30, REG).min_node_size == 5
        assert ForestParams().num_trees == 500

    @given(st.integers(0, 2**32), st.integers(5, 30), st.integers(1, 4))
    @settings(max_examples=25, deadline=None)
    def test_predictions_within_target_range(self, seed, n, d):
        rng = np.random.default_rng(seed)
        X, y = rng.normal(size=(n, d)), rng.normal(size=n)
        p = predict_forest(fit_forest(X, y, REG, ForestParams(num_trees=10, seed=seed)), rng.normal(size=(20, d)))
        assert np.all(p >= y.min() - 1e-12) and np.all(p <= y.max() + 1e-12)


class TestPredictForest:
    def test_single_leaf(self):
        model = manual_forest([{"value": 0.25}], d=2)
        assert predict_forest(model, [1.0, -7.0]) == 0.25
        np.testing.assert_array_equal(predict_forest(model, np.zeros((3, 2))), 0.25)

    def test_average_of_trees(self):
        model = manual_forest([{"value": 0.0}, {"value": 1.0}])
        assert predict_forest(model, [3.0]) == 0.5

    def test_unseen_level_goes_right(self):
        tree = {"feature": 0, "level": 1, "left": {"value": 1.0}, "right": {"value": 2.0}}
        model = manual_forest([tree], categorical=[True])
        np.testing.assert_array_equal(model.predict([[1], [0], [7], [-1]]), [1.0, 2.0, 2.0, 2.0])

    def test_threshold_goes_left_inclusive(self):
        tree = {"feature": 0, "threshold": 0.5, "left": {"value": -1.0}, "right": {"value": 1.0}}
        np.testing.assert_array_equal(manual_forest([tree]).predict([[0.5], [0.50001]]), [-1, 1])

    def test_arity_mismatch(self):
        with pytest.raises(ValueError, match="features"):
            predict_forest(manual_forest([{"value": 0.0}], d=2), [[1.0, 2.0, 3.0]])

    def test_json_round_trip(self):
        rng = np.random.default_rng(5)
        X = np.column_stack([rng.normal(size=40), rng.integers(0, 3, 40)])
        y = rng.normal(size=40)
        model = fit_forest(X, y, REG, ForestParams(num_trees=15), categorical=[False, True])
        back = ForestModel.from_dict(json.loads(json.dumps(model.to_dict())))
        np.testing.assert_array_equal(back.predict(X), model.predict(X))
        assert back.to_dict() == model.to_dict()
