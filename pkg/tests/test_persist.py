import numpy as np
import pytest

from dmlfair.errors import InputError
from dmlfair.learners import LearnerSpec, fit_forest, fit_linear, fit_tree
from dmlfair.persist import load_model, save_model


@pytest.fixture
def xy():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(80, 3))
    y = x[:, 0] - 0.5 * x[:, 2] + rng.normal(scale=0.3, size=80)
    return x, y


def test_linear_round_trip(tmp_path, xy):
    x, y = xy
    model = fit_linear(x, y, feature_names=("a", "b", "c"))
    path = tmp_path / "m.npz"
    save_model(model, path)
    again = load_model(path)
    assert np.array_equal(again.predict(x), model.predict(x))
    assert again.feature_names == ("a", "b", "c")
    assert again.intercept == model.intercept


def test_tree_round_trip(tmp_path, xy):
    x, y = xy
    model = fit_tree(x, y, max_depth=4, min_leaf=3)
    path = tmp_path / "m.npz"
    save_model(model, path)
    again = load_model(path)
    assert np.array_equal(again.predict(x), model.predict(x))


def test_forest_round_trip_exact(tmp_path, xy):
    x, y = xy
    spec = LearnerSpec.forest(n_trees=25, seed=3)
    model = fit_forest(x, y, spec)
    path = tmp_path / "m.npz"
    save_model(model, path)
    again = load_model(path)
    assert np.array_equal(again.predict(x), model.predict(x))
    assert again.spec == spec


def test_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, meta=np.zeros(1))
    with pytest.raises((InputError, KeyError)):
        load_model(path)
