import numpy as np
import pytest

from dmlfair.errors import InputError
from dmlfair.learners import LearnerSpec, LinearModel, fit_linear
from dmlfair.orthogonal import (
    NuisanceSet,
    crossfit_nuisance,
    nuisance_predict_avg,
    residualize,
)
from dmlfair.tabular import (
    CATEGORICAL,
    Column,
    ColumnRole,
    Dataset,
    DROP_FIRST,
    EncodedMatrix,
    FoldAssignment,
    NUMERIC,
    Schema,
    assign_folds,
    encode_columns,
)

LINEAR = LearnerSpec.linear()


def _enc(values, names=None):
    values = np.asarray(values, dtype=np.float64)
    names = tuple(names or (f"d{j}" for j in range(values.shape[1])))
    return EncodedMatrix(values, names, {n: (j,) for j, n in enumerate(names)}, "onehot")


def _three_level_d(n, seed):
    """Random 3-level sensitive factor, drop-first encoded (2 columns)."""
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, 3, size=n)
    cols = np.column_stack([(codes == 1).astype(float), (codes == 2).astype(float)])
    return codes, _enc(cols, names=("d=b", "d=c"))


class TestCrossfit:
    def test_out_of_fold_discipline(self):
        d_enc = _enc(np.arange(4).reshape(-1, 1))
        targets = {"y": np.array([1.0, 2.0, 3.0, 4.0])}
        folds = assign_folds(4, 2, seed=0)
        nuis = crossfit_nuisance(d_enc, targets, folds, LINEAR)
        for row in range(4):
            fold = folds.fold_of_row[row]
            assert row not in nuis.fold_train_rows[fold]
            other_folds = [f for f in range(2) if f != fold]
            for f in other_folds:
                assert row in nuis.fold_train_rows[f]

    def test_sensitive_indicator_target_residualizes_to_zero(self):
        n = 2000
        codes, d_enc = _three_level_d(n, seed=1)
        target = d_enc.values[:, 0].copy()  # exactly a sensitive indicator
        folds = assign_folds(n, 5, seed=2)
        nuis = crossfit_nuisance(d_enc, {"t": target}, folds, LINEAR)
        res = residualize(nuis, d_enc, {"t": target})
        assert np.max(np.abs(nuis.oof["t"] - target)) < 1e-8
        assert abs(res.y.mean()) <= 0.05

    def test_noise_target_passes_through(self):
        n = 2000
        rng = np.random.default_rng(3)
        _, d_enc = _three_level_d(n, seed=4)
        target = rng.normal(size=n)
        folds = assign_folds(n, 5, seed=5)
        nuis = crossfit_nuisance(d_enc, {"t": target}, folds, LINEAR)
        res = residualize(nuis, d_enc, {"t": target})
        corr = np.corrcoef(res.y, target)[0, 1]
        assert corr >= 0.99

    def test_small_training_complement_rejected(self):
        d_enc = _enc(np.arange(2).reshape(-1, 1))
        folds = FoldAssignment(2, np.array([0, 1], dtype=np.int32))
        with pytest.raises(InputError, match="training rows"):
            crossfit_nuisance(d_enc, {"y": np.zeros(2)}, folds, LINEAR)

    def test_target_length_validation(self):
        d_enc = _enc(np.arange(4).reshape(-1, 1))
        folds = assign_folds(4, 2, seed=0)
        with pytest.raises(InputError):
            crossfit_nuisance(d_enc, {"y": np.zeros(5)}, folds, LINEAR)


class TestResidualize:
    def _constant_nuisance(self, oof: dict, n: int, outcome="y"):
        models = {
            name: (LinearModel(kind="linear", intercept=0.0, coef=np.zeros(1)),)
            for name in oof
        }
        return NuisanceSet(
            targets=tuple(oof),
            outcome=outcome,
            models=models,
            learner=LINEAR,
            folds=FoldAssignment.single_fold(n),
            oof={k: np.asarray(v, dtype=np.float64) for k, v in oof.items()},
            fold_train_rows=(np.arange(n),),
        )

    def test_exact_fit_gives_zero_residuals(self):
        nuis = self._constant_nuisance({"y": [1.0, 3.0]}, 2)
        res = residualize(nuis, _enc([[0.0], [1.0]]), {"y": np.array([1.0, 3.0])})
        assert res.y.tolist() == [0.0, 0.0]

    def test_subtraction(self):
        nuis = self._constant_nuisance({"y": [1.0, 1.0]}, 2)
        res = residualize(nuis, _enc([[0.0], [1.0]]), {"y": np.array([2.0, 4.0])})
        assert res.y.tolist() == [1.0, 3.0]

    def test_row_count_mismatch(self):
        nuis = self._constant_nuisance({"y": [1.0, 1.0]}, 2)
        with pytest.raises(InputError):
            residualize(nuis, _enc([[0.0], [1.0], [2.0]]), {"y": np.zeros(3)})

    def test_predictor_matrix_layout(self):
        nuis = self._constant_nuisance(
            {"y": [0.0, 0.0], "x1": [1.0, 1.0], "x2": [2.0, 2.0]}, 2
        )
        targets = {
            "y": np.array([5.0, 6.0]),
            "x1": np.array([2.0, 3.0]),
            "x2": np.array([2.0, 2.0]),
        }
        res = residualize(nuis, _enc([[0.0], [1.0]]), targets)
        assert res.x_names == ("x1", "x2")
        assert res.x.tolist() == [[1.0, 0.0], [2.0, 0.0]]
        assert res.y.tolist() == [5.0, 6.0]


class TestPredictAvg:
    def test_mean_of_two_models(self):
        models = {
            "y": (
                LinearModel(kind="linear", intercept=4.0, coef=np.zeros(1)),
                LinearModel(kind="linear", intercept=6.0, coef=np.zeros(1)),
            )
        }
        nuis = NuisanceSet(targets=("y",), outcome="y", models=models, learner=LINEAR)
        avg = nuisance_predict_avg(nuis, _enc([[0.0]]), "y")
        assert avg.tolist() == [5.0]

    def test_identical_models_degenerate_average(self):
        n = 40
        d_enc = _enc(np.random.default_rng(0).normal(size=(n, 1)))
        target = np.full(n, 7.0)  # constant target: every fold model is identical
        nuis = crossfit_nuisance(d_enc, {"y": target}, assign_folds(n, 4, seed=1), LINEAR)
        avg = nuisance_predict_avg(nuis, d_enc, "y")
        single = nuis.models_for("y")[0].predict(d_enc.values)
        assert avg == pytest.approx(single, abs=1e-12)

    def test_unknown_target(self):
        models = {"y": (LinearModel(kind="linear", intercept=0.0, coef=np.zeros(1)),)}
        nuis = NuisanceSet(targets=("y",), outcome="y", models=models, learner=LINEAR)
        with pytest.raises(InputError):
            nuisance_predict_avg(nuis, _enc([[0.0]]), "zzz")

    def test_average_tracks_true_conditional_mean(self):
        # linear DGP: y = 2 + 3 d; the K-model average at new points should sit
        # within 2 standard errors of the truth (OLS sampling-distribution oracle)
        n = 5000
        rng = np.random.default_rng(17)
        d = rng.normal(size=(n, 1))
        sigma = 1.5
        y = 2.0 + 3.0 * d[:, 0] + rng.normal(scale=sigma, size=n)
        d_enc = _enc(d)
        nuis = crossfit_nuisance(d_enc, {"y": y}, assign_folds(n, 10, seed=3), LINEAR)
        new = np.array([[-1.0], [0.0], [2.0]])
        avg = nuisance_predict_avg(nuis, _enc(new), "y")
        truth = 2.0 + 3.0 * new[:, 0]
        design = np.column_stack([np.ones(n), d[:, 0]])
        cov = sigma**2 * np.linalg.inv(design.T @ design)
        for j in range(3):
            x0 = np.array([1.0, new[j, 0]])
            se = float(np.sqrt(x0 @ cov @ x0))
            assert abs(avg[j] - truth[j]) <= 2.0 * se


class TestStatisticalInvariants:
    def test_near_centering(self):
        n = 3000
        rng = np.random.default_rng(8)
        codes, d_enc = _three_level_d(n, seed=9)
        y = 1.0 + 2.0 * (codes == 1) - 1.0 * (codes == 2) + rng.normal(size=n)
        nuis = crossfit_nuisance(d_enc, {"y": y}, assign_folds(n, 5, seed=10), LINEAR)
        res = residualize(nuis, d_enc, {"y": y})
        assert abs(res.y.mean()) <= 3.0 * res.y.std(ddof=1) / np.sqrt(n)

    def test_linear_orthogonality_to_every_sensitive_column(self):
        n = 2000
        rng = np.random.default_rng(11)
        codes, d_enc = _three_level_d(n, seed=12)
        x1 = 0.5 + 1.5 * (codes == 1) + rng.normal(size=n)
        x2 = -1.0 + 2.0 * (codes == 2) + rng.normal(size=n)
        y = x1 + x2 + 4.0 * (codes == 1) + rng.normal(size=n)
        targets = {"y": y, "x1": x1, "x2": x2}
        nuis = crossfit_nuisance(d_enc, targets, assign_folds(n, 5, seed=13), LINEAR)
        res = residualize(nuis, d_enc, targets)
        for j in range(res.x.shape[1]):
            for l in range(d_enc.values.shape[1]):
                corr = np.corrcoef(res.x[:, j], d_enc.values[:, l])[0, 1]
                assert abs(corr) <= 0.05

    def test_sim_residual_outcome_independent_of_gender(self):
        # forest nuisances on the hiring simulation: the residualized outcome
        # should be uncorrelated with the male indicator
        from dmlfair.simlab import SimConfig, generate
        from dmlfair.tabular import ONEHOT

        data, _ = generate(SimConfig(n=5000, seed=21))
        d_enc = encode_columns(data, ["age", "gender", "race"], ONEHOT)
        y = data.column_values("rating")
        nuis = crossfit_nuisance(
            d_enc, {"rating": y}, assign_folds(5000, 5, seed=2),
            LearnerSpec.forest(n_trees=60, seed=3),
        )
        res = residualize(nuis, d_enc, {"rating": y})
        male = (data.labels("gender") == "male").astype(float)
        assert abs(np.corrcoef(res.y, male)[0, 1]) <= 0.05

    def test_fwl_equivalence_with_single_fold_hook(self):
        # residual-on-residual regression must reproduce the full joint OLS
        n = 2000
        rng = np.random.default_rng(14)
        codes, d_enc = _three_level_d(n, seed=15)
        x = np.column_stack([rng.normal(size=n) + (codes == 1),
                             rng.normal(size=n) - 0.5 * (codes == 2)])
        y = 1.5 + 2.0 * x[:, 0] - 3.0 * x[:, 1] + 1.0 * (codes == 1) + rng.normal(size=n)
        targets = {"y": y, "x1": x[:, 0], "x2": x[:, 1]}
        nuis = crossfit_nuisance(
            d_enc, targets, FoldAssignment.single_fold(n), LINEAR
        )
        res = residualize(nuis, d_enc, targets)
        second_stage = fit_linear(res.x, res.y)
        full = fit_linear(np.column_stack([x, d_enc.values]), y)
        assert second_stage.coef == pytest.approx(full.coef[:2], abs=1e-8)
