import json
from pathlib import Path

import numpy as np
import pytest

from dmlfair.cli import main, subgroup_mask
from dmlfair.simlab import SimConfig, generate
from dmlfair.tabular import write_csv


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One simulate+train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cliws")
    assert main([
        "simulate", "--n", "420", "--seed", "5",
        "--out", str(root / "data.csv"),
        "--latent", str(root / "latent.csv"),
        "--split-train", "320",
    ]) == 0
    assert main([
        "train",
        "--data", str(root / "data.train.csv"),
        "--schema", str(root / "data.csv.schema.json"),
        "--trees", "25", "--folds", "5", "--seed", "3",
        "--base", "age=18,gender=male,race=white",
        "--model", str(root / "model.npz"),
        "--unaware-model", str(root / "unaware.npz"),
    ]) == 0
    return root


class TestSimulate:
    def test_outputs_and_manifest(self, workspace):
        for name in ("data.csv", "data.csv.schema.json", "latent.csv",
                     "latent.csv.config.json", "data.train.csv", "data.test.csv",
                     "latent.train.csv", "latent.test.csv"):
            assert (workspace / name).is_file(), name
        manifest = json.loads((workspace / "data.csv.manifest.json").read_text())
        assert manifest["subcommand"] == "simulate"
        assert manifest["config"]["n"] == 420
        assert manifest["config"]["seed"] == 5
        assert str(workspace / "data.csv") in manifest["outputs"]

    def test_split_sizes(self, workspace):
        train_rows = (workspace / "data.train.csv").read_text().strip().splitlines()
        test_rows = (workspace / "data.test.csv").read_text().strip().splitlines()
        assert len(train_rows) - 1 == 320
        assert len(test_rows) - 1 == 100


class TestTrainPredict:
    def test_predict_writes_predictions(self, workspace, tmp_path):
        out = tmp_path / "preds.csv"
        assert main([
            "predict", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"), "--out", str(out),
        ]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "row,prediction"
        assert len(lines) == 101

    def test_rerun_from_manifest_is_byte_identical(self, workspace, tmp_path):
        manifest = workspace / "model.npz.manifest.json"
        assert manifest.is_file()
        retrain_model = tmp_path / "model2.npz"
        assert main([
            "train", "--config", str(manifest), "--model", str(retrain_model),
        ]) == 0
        preds_a, preds_b = tmp_path / "a.csv", tmp_path / "b.csv"
        for model, out in ((workspace / "model.npz", preds_a), (retrain_model, preds_b)):
            assert main([
                "predict", "--model", str(model),
                "--data", str(workspace / "data.test.csv"), "--out", str(out),
            ]) == 0
        assert preds_a.read_bytes() == preds_b.read_bytes()

    def test_threads_flag_does_not_change_predictions(self, workspace, tmp_path):
        outs = []
        for threads in ("1", "2"):
            model = tmp_path / f"m{threads}.npz"
            assert main([
                "train", "--config", str(workspace / "model.npz.manifest.json"),
                "--model", str(model), "--threads", threads,
            ]) == 0
            out = tmp_path / f"p{threads}.csv"
            assert main([
                "predict", "--model", str(model),
                "--data", str(workspace / "data.test.csv"), "--out", str(out),
            ]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_max_floor_rule(self, workspace, tmp_path):
        plain = tmp_path / "plain.csv"
        floored = tmp_path / "floored.csv"
        assert main([
            "predict", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"), "--out", str(plain),
        ]) == 0
        assert main([
            "predict", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"), "--out", str(floored),
            "--rule", "max_floor", "--unaware-model", str(workspace / "unaware.npz"),
        ]) == 0

        def read(path):
            return np.array([
                float(line.split(",")[1])
                for line in path.read_text().strip().splitlines()[1:]
            ])

        assert np.all(read(floored) >= read(plain))

    def test_max_floor_needs_unaware_model(self, workspace, tmp_path):
        assert main([
            "predict", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"),
            "--out", str(tmp_path / "x.csv"), "--rule", "max_floor",
        ]) == 2


class TestEvaluate:
    def test_report_and_plots(self, workspace, tmp_path):
        report = tmp_path / "report.json"
        plots = tmp_path / "plots"
        assert main([
            "evaluate", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"),
            "--unaware-model", str(workspace / "unaware.npz"),
            "--latent", str(workspace / "latent.test.csv"),
            "--sim-config", str(workspace / "latent.csv.config.json"),
            "--cf-gender", "male", "--cf-race", "white",
            "--subgroup", "race!=white&gender!=male",
            "--subgroup", "gender=female&race=white",
            "--report", str(report), "--plots", str(plots),
            "--bootstrap", "150",
        ]) == 0
        doc = json.loads(report.read_text())
        assert doc["n_rows"] == 100
        assert "gender" in doc["group_stats"]["dmlfair"]
        assert "race!=white&gender!=male" in doc["cf_error"]
        cf = doc["cf_error"]["race!=white&gender!=male"]
        assert cf["unaware"]["mean"] < cf["dmlfair"]["mean"]
        assert set(doc["bootstrap_mean_ci"]) == {"dmlfair", "unaware"}
        csvs = list(plots.glob("*.csv"))
        svgs = list(plots.glob("*.svg"))
        assert csvs and svgs
        svg_text = svgs[0].read_text()
        assert svg_text.startswith("<svg") and "</svg>" in svg_text

    def test_byte_identical_reports_on_rerun(self, workspace, tmp_path):
        args = [
            "evaluate", "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"),
        ]
        r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
        assert main([*args, "--report", str(r1)]) == 0
        assert main([*args, "--report", str(r2)]) == 0
        assert r1.read_bytes() == r2.read_bytes()


class TestExplain:
    def test_trees_for_each_level(self, workspace, tmp_path):
        out_dir = tmp_path / "trees"
        assert main([
            "explain", "--model", str(workspace / "model.npz"),
            "--unaware-model", str(workspace / "unaware.npz"),
            "--data", str(workspace / "data.train.csv"),
            "--group-col", "gender", "--max-depth", "3",
            "--out", str(out_dir),
        ]) == 0
        produced = {p.name for p in out_dir.glob("*.txt")}
        # every level present in the data gets a tree
        assert {"gender_male.txt", "gender_female.txt"} <= produced
        doc = json.loads((out_dir / "gender_male.json").read_text())
        assert "mean" in doc and "n" in doc


class TestErrorPaths:
    def test_schema_mismatch_exit_code(self, workspace, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n", encoding="utf-8")
        code = main([
            "predict", "--model", str(workspace / "model.npz"),
            "--data", str(bad), "--out", str(tmp_path / "p.csv"),
        ])
        assert code == 3

    def test_bad_arguments_exit_code(self, workspace, tmp_path):
        code = main([
            "train", "--data", str(workspace / "data.train.csv"),
            "--schema", str(workspace / "data.csv.schema.json"),
            "--folds", "3", "--model", str(tmp_path / "m.npz"),
        ])  # missing --base
        assert code == 2

    def test_numeric_failure_exit_code(self, tmp_path):
        # duplicated predictor makes plain OLS singular
        path = tmp_path / "dup.csv"
        path.write_text(
            "d,x1,x2,y\n" + "\n".join(
                f"{'ab'[i % 2]},{i},{i},{i * 2}" for i in range(30)
            ) + "\n",
            encoding="utf-8",
        )
        code = main([
            "train", "--data", str(path), "--sensitive", "d", "--outcome", "y",
            "--learner", "linear", "--folds", "3",
            "--base", "d=a", "--model", str(tmp_path / "m.npz"),
        ])
        assert code == 4

    def test_failed_run_leaves_no_partial_outputs(self, workspace, tmp_path):
        model = tmp_path / "never.npz"
        code = main([
            "train", "--data", str(workspace / "data.train.csv"),
            "--schema", str(workspace / "data.csv.schema.json"),
            "--folds", "5", "--base", "age=18,gender=martian,race=white",
            "--model", str(model),
        ])
        assert code == 2
        assert not model.exists()
        assert not model.with_suffix(".npz.manifest.json").exists()

    def test_unknown_config_key_rejected(self, workspace, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"banana": 1}), encoding="utf-8")
        assert main([
            "predict", "--config", str(cfg),
            "--model", str(workspace / "model.npz"),
            "--data", str(workspace / "data.test.csv"),
            "--out", str(tmp_path / "p.csv"),
        ]) == 2


@pytest.fixture(scope="module")
def data():
    data, _ = generate(SimConfig(n=300, seed=13))
    return data


class TestSubgroupExpressions:
    def test_and_or_precedence(self, data):
        gender = data.labels("gender")
        race = data.labels("race")
        mask = subgroup_mask(data, "race!=white&gender!=male")
        expected = (race != "white") & (gender != "male")
        assert np.array_equal(mask, expected)
        mask_or = subgroup_mask(data, "race=white|gender=male&race=black")
        expected_or = (race == "white") | ((gender == "male") & (race == "black"))
        assert np.array_equal(mask_or, expected_or)

    def test_numeric_atoms(self, data):
        mask = subgroup_mask(data, "age=18")
        assert np.array_equal(mask, data.column_values("age") == 18)

    def test_bad_expressions(self, data):
        from dmlfair.errors import InputError

        with pytest.raises(InputError):
            subgroup_mask(data, "race")
        with pytest.raises(InputError):
            subgroup_mask(data, "race=vulcan")
        with pytest.raises(InputError):
            subgroup_mask(data, "nope=1")
