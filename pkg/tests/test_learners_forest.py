import numpy as np
import pytest

from dmlfair.errors import InputError
from dmlfair.learners import ForestModel, LearnerSpec, fit_forest, fit_tree


def _toy(seed=0, n=120, p=4):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    y = x[:, 0] * 3 - 2 * (x[:, 1] > 0) + rng.normal(scale=0.5, size=n)
    return x, y


class TestFitForest:
    def test_constant_target_predicts_constant_exactly(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(50, 3))
        model = fit_forest(x, np.full(50, 5.0), LearnerSpec.forest(n_trees=20, seed=4))
        assert np.all(model.predict(rng.normal(size=(30, 3))) == 5.0)

    def test_same_seed_bit_identical(self):
        x, y = _toy()
        spec = LearnerSpec.forest(n_trees=40, seed=11)
        a = fit_forest(x, y, spec).predict(x)
        b = fit_forest(x, y, spec).predict(x)
        assert np.array_equal(a, b)

    def test_thread_count_does_not_change_results(self):
        import numba

        x, y = _toy(seed=2)
        spec = LearnerSpec.forest(n_trees=24, seed=5)
        before = numba.get_num_threads()
        try:
            numba.set_num_threads(1)
            single = fit_forest(x, y, spec).predict(x)
            numba.set_num_threads(max(2, before))
            multi = fit_forest(x, y, spec).predict(x)
        finally:
            numba.set_num_threads(before)
        assert np.array_equal(single, multi)

    def test_seed_changes_results(self):
        x, y = _toy(seed=3)
        a = fit_forest(x, y, LearnerSpec.forest(n_trees=10, seed=1)).predict(x)
        b = fit_forest(x, y, LearnerSpec.forest(n_trees=10, seed=2)).predict(x)
        assert not np.array_equal(a, b)

    def test_degenerate_forest_equals_single_tree(self):
        x, y = _toy(seed=4, n=80, p=3)
        spec = LearnerSpec.forest(n_trees=1, mtry=3, min_leaf=4, seed=9)
        forest = fit_forest(x, y, spec, bootstrap=False)
        tree = fit_tree(x, y, min_leaf=4)
        assert np.array_equal(forest.predict(x), tree.predict(x))

    def test_prediction_is_mean_over_trees(self):
        # hand-built forest of three single-leaf trees valued 1, 2, 6
        leaf = dict(
            threshold=np.zeros(1), left=np.zeros(1, np.int32),
            right=np.zeros(1, np.int32), count=np.ones(1, np.int32),
        )
        model = ForestModel(
            kind="forest",
            feature=np.full(3, -1, dtype=np.int32),
            threshold=np.zeros(3),
            left=np.zeros(3, np.int32),
            right=np.zeros(3, np.int32),
            value=np.array([1.0, 2.0, 6.0]),
            count=np.ones(3, np.int32),
            offsets=np.array([0, 1, 2, 3], dtype=np.int64),
            n_features=2,
            spec=LearnerSpec.forest(n_trees=3),
        )
        assert model.predict(np.zeros((4, 2))).tolist() == [3.0, 3.0, 3.0, 3.0]
        del leaf

    def test_forest_agrees_with_per_tree_mean(self):
        x, y = _toy(seed=5)
        model = fit_forest(x, y, LearnerSpec.forest(n_trees=15, seed=3))
        per_tree = model.predict_per_tree(x)
        assert model.predict(x) == pytest.approx(per_tree.mean(axis=0), abs=1e-12)

    def test_training_mse_beats_worst_tree(self):
        x, y = _toy(seed=6, n=300)
        model = fit_forest(x, y, LearnerSpec.forest(n_trees=100, seed=8))
        forest_mse = float(np.mean((model.predict(x) - y) ** 2))
        per_tree = model.predict_per_tree(x)
        worst = max(float(np.mean((per_tree[t] - y) ** 2)) for t in range(100))
        assert forest_mse <= worst

    def test_mtry_default_is_third_of_features(self):
        spec = LearnerSpec.forest()
        assert spec.resolve_mtry(12) == 4
        assert spec.resolve_mtry(2) == 1
        assert LearnerSpec.tree().resolve_mtry(7) == 7

    def test_mtry_validation(self):
        x, y = _toy()
        with pytest.raises(InputError):
            fit_forest(x, y, LearnerSpec.forest(n_trees=2, mtry=99))
        with pytest.raises(InputError):
            LearnerSpec.forest(n_trees=0)
        with pytest.raises(InputError):
            LearnerSpec.forest(min_leaf=0)

    def test_empty_data_error(self):
        with pytest.raises(InputError):
            fit_forest(np.zeros((0, 2)), np.zeros(0), LearnerSpec.forest(n_trees=2))

    def test_tree_accessor_round_trips(self):
        x, y = _toy(seed=7, n=60)
        model = fit_forest(x, y, LearnerSpec.forest(n_trees=5, seed=2))
        per_tree = model.predict_per_tree(x)
        for t in range(5):
            assert np.array_equal(model.tree(t).predict(x), per_tree[t])
