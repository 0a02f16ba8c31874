import json
from importlib import resources

import numpy as np
import pytest

from adaptindex.cli import main
from adaptindex.models import ModelSpec
from adaptindex.simulation import PredictorLaw, gen_dataset

BETA3 = np.ones(3) / np.sqrt(3)


def write_csv(path, x, y):
    header = ",".join([f"x{j + 1}" for j in range(x.shape[1])] + ["y"])
    np.savetxt(path, np.column_stack([x, y]), delimiter=",", header=header, comments="")
    return str(path)


@pytest.fixture
def data_csv(tmp_path):
    d = gen_dataset(ModelSpec("sine", "gaussian", 0.3), PredictorLaw(), BETA3, 1500,
                    np.random.default_rng(0))
    return write_csv(tmp_path / "data.csv", d.x, d.y)


def small_config(tmp_path, **over):
    cfg = {
        "model": {"link": "identity", "error": "gaussian", "sigma_or_scale": 1.0},
        "law": {"kind": "gaussian", "p": 3},
        "n_grid": [200, 400],
        "replications": 4,
        "estimators": ["ols", "adaptive", "mle"],
        "seed": 8,
        **over,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestFit:
    def test_happy_path(self, data_csv, tmp_path, capsys):
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", data_csv, "--out", str(out)]) == 0
        js = json.loads(out.read_text())
        assert np.linalg.norm(js["beta_hat"]) == pytest.approx(1.0)
        assert np.arccos(min(1.0, abs(np.dot(js["beta_hat_original"], BETA3)))) < 0.1

    def test_stdout(self, data_csv, capsys):
        assert main(["fit", "--data", data_csv, "--seed", "3", "--no-split", "--discretize"]) == 0
        js = json.loads(capsys.readouterr().out)
        assert js["seed"] == 3
        assert js["split_sizes"] == [1500]

    def test_same_seed_same_output(self, data_csv, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["fit", "--data", data_csv, "--out", str(a)])
        main(["fit", "--data", data_csv, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file(self, tmp_path, capsys):
        assert main(["fit", "--data", str(tmp_path / "nope.csv")]) == 2
        assert capsys.readouterr().err

    def test_single_predictor(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        path = write_csv(tmp_path / "one.csv", rng.standard_normal((50, 1)), rng.standard_normal(50))
        assert main(["fit", "--data", path]) == 2
        assert "p" in capsys.readouterr().err

    def test_bad_bandwidth(self, data_csv):
        assert main(["fit", "--data", data_csv, "--bandwidth", "-1"]) == 2

    def test_estimation_failure(self, tmp_path, capsys):
        # y constant: the score cannot be estimated
        rng = np.random.default_rng(2)
        path = write_csv(tmp_path / "flat.csv", rng.standard_normal((200, 3)), np.ones(200))
        assert main(["fit", "--data", path]) in (2, 3)
        assert capsys.readouterr().err


class TestSimulate:
    def test_bundled_example(self, tmp_path, capsys):
        cfg = resources.files("adaptindex") / "configs" / "example.json"
        raw = json.loads(cfg.read_text())
        raw["replications"] = 3
        path = tmp_path / "example.json"
        path.write_text(json.dumps(raw))
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(path), "--out", str(out), "--quiet", "--threads", "1"]) == 0
        assert (out / "report.json").exists() and (out / "report.csv").exists()
        assert "median err" in capsys.readouterr().out

    def test_byte_identical(self, tmp_path):
        path = small_config(tmp_path)
        for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
            assert main(["simulate", "--config", path, "--out", str(tmp_path / name), "--quiet",
                         "--threads", threads]) == 0
        ref = (tmp_path / "a" / "report.csv").read_bytes()
        assert (tmp_path / "b" / "report.csv").read_bytes() == ref
        assert (tmp_path / "c" / "report.csv").read_bytes() == ref

    def test_seed_override(self, tmp_path):
        path = small_config(tmp_path, estimators=["ols"], n_grid=[200])
        main(["simulate", "--config", path, "--out", str(tmp_path / "a"), "--quiet", "--threads", "1"])
        main(["simulate", "--config", path, "--out", str(tmp_path / "b"), "--quiet", "--threads", "1",
              "--seed", "9"])
        assert (tmp_path / "a" / "report.csv").read_bytes() != (tmp_path / "b" / "report.csv").read_bytes()
        assert json.loads((tmp_path / "b" / "report.json").read_text())["config"]["seed"] == 9

    def test_one_replication(self, tmp_path, capsys):
        assert main(["simulate", "--config", small_config(tmp_path, replications=1),
                     "--out", str(tmp_path / "o")]) == 2
        assert "replications" in capsys.readouterr().err

    def test_lists_every_invalid_field(self, tmp_path, capsys):
        path = small_config(tmp_path, replications=0, seed=-2, estimators=["nope"])
        assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        for key in ("replications", "seed", "estimators"):
            assert key in err

    def test_missing_and_malformed_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_bad_threads(self, tmp_path):
        assert main(["simulate", "--config", small_config(tmp_path), "--out", str(tmp_path / "o"),
                     "--threads", "0"]) == 2


class TestConsistencyCommand:
    def run(self, capsys, *extra):
        assert main(["check-lemma1", "--n-mc", "200000", *extra]) == 0
        return json.loads(capsys.readouterr().out)

    def test_constant(self, capsys):
        js = self.run(capsys, "--kappa", "constant")
        assert js["ratio"] <= 3
        assert set(js) >= {"residual_norm", "mc_se", "ratio"}

    @pytest.mark.parametrize("model", ["identity", "sine", "cubic_smooth"])
    def test_true_score(self, capsys, model):
        js = self.run(capsys, "--kappa", "true_score", "--model", model)
        assert js["ratio"] <= 3

    def test_unknown_kappa(self, capsys):
        assert main(["check-lemma1", "--kappa", "y_squared"]) == 2
        err = capsys.readouterr().err
        assert "constant" in err and "true_score" in err

    def test_bad_model(self, capsys):
        assert main(["check-lemma1", "--kappa", "ty", "--model", "cubic", "--law", "cauchy"]) == 2
        err = capsys.readouterr().err
        assert "model" in err and "law" in err

    def test_deterministic(self, capsys):
        a = self.run(capsys, "--kappa", "ty", "--seed", "5")
        b = self.run(capsys, "--kappa", "ty", "--seed", "5")
        assert a == b


class TestScoreDiag:
    def test_grid(self, capsys):
        assert main(["score-diag", "--n-grid", "300,1200", "--replications", "3", "--n-eval", "2000"]) == 0
        js = json.loads(capsys.readouterr().out)
        assert len(js["mean"]) == 2 and "slope" in js

    def test_single_point(self, capsys):
        assert main(["score-diag", "--n-grid", "400", "--replications", "2", "--n-eval", "500"]) == 0
        js = json.loads(capsys.readouterr().out)
        assert "slope" not in js and len(js["values"]) == 2

    def test_full_trim(self, capsys):
        assert main(["score-diag", "--n-grid", "500", "--replications", "2", "--n-eval", "50000",
                     "--trim", "1e9"]) == 0
        js = json.loads(capsys.readouterr().out)
        assert np.mean(js["values"]) == pytest.approx(3.0, rel=0.05)

    @pytest.mark.parametrize("grid", ["1000,500", "abc", "5", ""])
    def test_invalid_grid(self, grid):
        assert main(["score-diag", "--n-grid", grid]) == 2
