import subprocess
import sys

import numpy as np
import pytest

from ccafusion import io
from ccafusion.cca import cca_fit
from ccafusion.cli import DEFAULTS, aggregate, load_config, main
from ccafusion.datamodel import center, feature_means
from ccafusion.deflation import SCCASolver, generate_embeddings, load_embedding
from ccafusion.exceptions import ConfigError, DataError
from ccafusion.metrics import additional_correlations
from ccafusion.pcca import PenaltyConfig

SMALL = """
[experiment]
solver = {solver}
scheme = {scheme}
k = {k}
folds = 2
[simulate]
n = 80
p = {p}
q = {p}
d = 2
k_eig = 2
sparsity = 0.5
structure = {structure}
survival = true
[penalty]
c_frac = {c_frac}
lambda_graph = 0.5
lambda_l1 = 0.05
[mlp]
hidden = 10
hidden_concat = 20
epochs = 60
"""


def write_config(path, solver="cca", scheme="hd", k=2, p=6, structure="sparse", c_frac="0.5"):
    path.write_text(SMALL.format(solver=solver, scheme=scheme, k=k, p=p, structure=structure,
                                 c_frac=c_frac))
    return path


def run(*args):
    return main([str(a) for a in args])


def split_train(M, fold):
    tr = fold[0]
    return center(M.select_samples(tr), feature_means(M.select_samples(tr)))


@pytest.fixture
def small_run(tmp_path):
    cfg = write_config(tmp_path / "exp.ini")
    out = tmp_path / "run"
    assert run("simulate", "--config", cfg, "--out", out) == 0
    return cfg, out


class TestIO:
    def test_matrix_round_trip(self, tmp_path, rng):
        a = rng.standard_normal((3, 4)) * 10.0 ** rng.integers(-20, 20, (3, 4))
        io.write_matrix_csv(tmp_path / "m.csv", a, feature_ids=["a", "b", "c"])
        M = io.read_matrix_csv(tmp_path / "m.csv")
        np.testing.assert_array_equal(M.values, a)
        assert M.feature_ids == ("a", "b", "c")
        assert M.sample_ids == ("s0", "s1", "s2", "s3")

    def test_matrix_errors(self, tmp_path):
        with pytest.raises(DataError):
            io.read_matrix_csv(tmp_path / "missing.csv")
        (tmp_path / "bad.csv").write_text("feature_id,s0,s1\nf0,1.0\n")
        with pytest.raises(DataError):
            io.read_matrix_csv(tmp_path / "bad.csv")
        (tmp_path / "nan.csv").write_text("feature_id,s0,s1\nf0,1.0,nan\n")
        with pytest.raises(DataError):
            io.read_matrix_csv(tmp_path / "nan.csv")
        (tmp_path / "text.csv").write_text("feature_id,s0,s1\nf0,1.0,x\n")
        with pytest.raises(DataError):
            io.read_matrix_csv(tmp_path / "text.csv")

    def test_labels_round_trip(self, tmp_path):
        io.write_labels_csv(tmp_path / "l.csv", ["a", "b"], [True, False], [1.5, 2.25])
        ids, event, time = io.read_labels_csv(tmp_path / "l.csv")
        assert ids == ["a", "b"]
        np.testing.assert_array_equal(event, [True, False])
        np.testing.assert_array_equal(time, [1.5, 2.25])

    def test_labels_reject_nonpositive_time(self, tmp_path):
        (tmp_path / "l.csv").write_text("sample_id,event,time\na,1,0.0\n")
        with pytest.raises(DataError):
            io.read_labels_csv(tmp_path / "l.csv")

    def test_folds_round_trip_and_range(self, tmp_path):
        folds = [(np.array([0, 1]), np.array([2]), np.array([3]))]
        io.write_folds(tmp_path / "f.json", folds)
        back = io.read_folds(tmp_path / "f.json", 4)
        for a, b in zip(folds[0], back[0]):
            np.testing.assert_array_equal(a, b)
        with pytest.raises(DataError):
            io.read_folds(tmp_path / "f.json", 3)


class TestConfig:
    def test_defaults(self):
        cp = load_config(environ={})
        assert cp["experiment"]["solver"] == "scca"
        assert set(cp.sections()) == set(DEFAULTS)

    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[experiment]\nseed = 1\nk = 3\n")
        cp = load_config(cfg, environ={"CCAFUSION_EXPERIMENT_SEED": "2", "CCAFUSION_MLP_LR": "0.5"},
                         overrides={("experiment", "seed"): 3})
        assert cp["experiment"]["seed"] == "3"
        assert cp["experiment"]["k"] == "3"
        assert cp["mlp"]["lr"] == "0.5"

    def test_unknown_keys(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[experiment]\nsolverr = cca\n")
        with pytest.raises(ConfigError):
            load_config(cfg, environ={})
        with pytest.raises(ConfigError):
            load_config(environ={"CCAFUSION_NOPE_KEY": "1"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini", environ={})


class TestSimulateCommand:
    def test_default_shapes(self, tmp_path):
        out = tmp_path / "run"
        assert run("simulate", "--out", out, "--folds", "3") == 0
        X = io.read_matrix_csv(out / "X.csv")
        Z = io.read_matrix_csv(out / "Z.csv")
        assert X.values.shape == (200, 100)
        assert io.read_matrix_csv(out / "Y.csv").values.shape == (200, 100)
        assert Z.values.shape == (5, 100)
        assert len(io.read_folds(out / "folds.json")) == 3
        assert (out / "config.simulate.ini").is_file()
        assert not (out / "labels.csv").exists()

    def test_round_trip_matches_memory(self, tmp_path):
        from ccafusion.simulate import SimConfig, simulate

        out = tmp_path / "run"
        assert run("simulate", "--out", out, "--seed", "4", "--folds", "1") == 0
        sim = simulate(SimConfig(seed=4, n_folds=1))
        np.testing.assert_array_equal(io.read_matrix_csv(out / "X.csv").values, sim.X)

    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run("simulate", "--out", tmp_path / name, "--seed", "7", "--folds", "2") == 0
        for f in ("X.csv", "Y.csv", "Z.csv", "folds.json", "simulation.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_graph_files(self, tmp_path):
        cfg = write_config(tmp_path / "exp.ini", structure="graph")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "g") == 0
        assert (tmp_path / "g" / "graph_x.csv").is_file()
        assert (tmp_path / "g" / "labels.csv").is_file()


class TestEmbedCommand:
    def test_cca_hd_matches_oracle(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        X, Y = io.read_matrix_csv(out / "X.csv"), io.read_matrix_csv(out / "Y.csv")
        folds = io.read_folds(out / "folds.json")
        for f in range(2):
            m = io.read_json(out / f"fold_{f:02d}" / "metrics.json")
            xtr, ytr = split_train(X, folds[f]), split_train(Y, folds[f])
            pairs = cca_fit(xtr, ytr, 2)
            np.testing.assert_allclose(m["rhos_train"], [p.rho for p in pairs], atol=1e-5)
            # test-set metric recomputed from the oracle weights
            te = folds[f][2]
            means_x, means_y = feature_means(X.select_samples(folds[f][0])), feature_means(
                Y.select_samples(folds[f][0]))
            xte = center(X.select_samples(te), means_x)
            yte = center(Y.select_samples(te), means_y)
            from ccafusion.deflation import EmbeddingBasis

            oracle = EmbeddingBasis(np.column_stack([p.u for p in pairs]),
                                    np.column_stack([p.v for p in pairs]), np.zeros(2), [])
            np.testing.assert_allclose(m["metrics"]["test"]["additional_rhos"],
                                       additional_correlations(xte, yte, oracle), atol=1e-5)

    def test_singleton_grid_equals_direct(self, tmp_path):
        cfg = write_config(tmp_path / "exp.ini", solver="scca", scheme="pd", p=12, c_frac="0.6")
        out = tmp_path / "run"
        assert run("simulate", "--config", cfg, "--out", out) == 0
        assert run("embed", "--config", cfg, "--out", out) == 0
        X, Y = io.read_matrix_csv(out / "X.csv"), io.read_matrix_csv(out / "Y.csv")
        fold = io.read_folds(out / "folds.json")[0]
        c = 0.6 * np.sqrt(12)
        direct = generate_embeddings(split_train(X, fold), split_train(Y, fold),
                                     SCCASolver(PenaltyConfig(c1=c, c2=c)), "pd", 2)
        saved = load_embedding(out / "fold_00")
        np.testing.assert_allclose(saved.u_mat, direct.u_mat, atol=1e-15)
        np.testing.assert_allclose(saved.v_mat, direct.v_mat, atol=1e-15)

    def test_opd_ortho_entries(self, tmp_path):
        cfg = write_config(tmp_path / "exp.ini", solver="scca", scheme="opd", p=12)
        out = tmp_path / "run"
        assert run("simulate", "--config", cfg, "--out", out) == 0
        assert run("embed", "--config", cfg, "--out", out) == 0
        m = io.read_json(out / "fold_00" / "metrics.json")
        vals = [a for row in m["metrics"]["train"]["ortho_matrix"] for a in row if a is not None]
        assert len(vals) == 3 and max(vals) < 1e-8

    def test_gnscca_with_graph_files(self, tmp_path):
        cfg = write_config(tmp_path / "exp.ini", solver="gnscca", scheme="opd", structure="graph")
        out = tmp_path / "run"
        assert run("simulate", "--config", cfg, "--out", out) == 0
        assert run("embed", "--config", cfg, "--out", out) == 0
        m = io.read_json(out / "fold_01" / "metrics.json")
        assert m["status"] == "ok"
        assert m["selected"] == {"lambda_graph": 0.5, "lambda_l1": 0.05}

    def test_stage_isolation_without_labels(self, small_run):
        cfg, out = small_run
        (out / "labels.csv").unlink()
        assert run("embed", "--config", cfg, "--out", out) == 0

    def test_parallel_matches_serial(self, small_run, tmp_path):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        first = (out / "fold_01" / "U.csv").read_bytes()
        assert run("embed", "--config", cfg, "--out", out, "--jobs", "2") == 0
        assert (out / "fold_01" / "U.csv").read_bytes() == first

    def test_all_folds_failing_is_numeric_error(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        io.write_matrix_csv(out / "X.csv", np.zeros((3, 10)))
        io.write_matrix_csv(out / "Y.csv", np.zeros((3, 10)))
        io.write_folds(out / "folds.json", [(np.arange(6), np.arange(6, 8), np.arange(8, 10))])
        assert run("embed", "--out", out) == 3
        m = io.read_json(out / "fold_00" / "metrics.json")
        assert m["status"] == "failed"
        assert io.read_json(out / "embed_summary.json")["n_failed"] == 1


class TestPredictLatentCommand:
    def test_layout_and_values(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        assert run("predict-latent", "--config", cfg, "--out", out) == 0
        lines = (out / "latent_mse.csv").read_text().splitlines()
        assert lines[0] == "fold,input,modality_1,modality_2,concatenated"
        assert [ln.split(",")[:2] for ln in lines[1:]] == [
            ["0", "raw"], ["0", "embedding"], ["1", "raw"], ["1", "embedding"]]
        r = io.read_json(out / "fold_00" / "latent_mse.json")
        assert r["status"] == "ok"
        assert all(v >= 0 for row in r["mse"].values() for v in row.values())

    def test_symmetric_modalities(self, tmp_path):
        cfg = write_config(tmp_path / "exp.ini")
        out = tmp_path / "run"
        assert run("simulate", "--config", cfg, "--out", out) == 0
        # identical inputs for both modalities give identical heads
        (out / "Y.csv").write_bytes((out / "X.csv").read_bytes())
        assert run("embed", "--config", cfg, "--out", out, "--folds", "1") == 0
        u = (out / "fold_00" / "U.csv").read_text()
        (out / "fold_00" / "V.csv").write_text(u)
        assert run("predict-latent", "--config", cfg, "--out", out, "--folds", "1") == 0
        r = io.read_json(out / "fold_00" / "latent_mse.json")
        assert r["mse"]["embedding"]["modality_1"] == r["mse"]["embedding"]["modality_2"]
        assert r["mse"]["raw"]["modality_1"] == r["mse"]["raw"]["modality_2"]

    def test_missing_latent_file(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        (out / "Z.csv").unlink()
        assert run("predict-latent", "--config", cfg, "--out", out) == 2


class TestSurvivalCommand:
    def test_columns_and_planted_risk(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        # overwrite labels with a strong risk carried by the first latent factor
        z = io.read_matrix_csv(out / "Z.csv").values[0]
        r = np.random.default_rng(0)
        time = r.exponential(1.0 / np.exp(6.0 * z))
        ids = [f"s{j}" for j in range(z.size)]
        io.write_labels_csv(out / "labels.csv", ids, np.ones(z.size, bool), time)
        assert run("survival", "--config", cfg, "--out", out) == 0
        lines = (out / "survival.csv").read_text().splitlines()
        assert lines[0] == "fold,Genomics,Imaging,Concatenated"
        cidx = [float(ln.split(",")[1]) for ln in lines[1:]]
        assert np.mean(cidx) > 0.8

    def test_no_training_events(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        ids = [f"s{j}" for j in range(80)]
        io.write_labels_csv(out / "labels.csv", ids, np.zeros(80, bool), np.ones(80))
        assert run("survival", "--config", cfg, "--out", out) == 3
        assert io.read_json(out / "fold_00" / "survival.json")["status"] == "failed"


class TestReport:
    @staticmethod
    def fake_fold(run_dir, f, value):
        d = run_dir / f"fold_{f:02d}"
        d.mkdir(parents=True)
        io.write_json(d / "survival.json", {"fold": f, "status": "ok", "c_index": {
            "Genomics": value, "Imaging": value, "Concatenated": value}})

    def test_single_fold(self, tmp_path):
        self.fake_fold(tmp_path, 0, 0.7)
        summary, _, _ = aggregate(tmp_path)
        assert summary["survival"]["Genomics"] == {"mean": 0.7, "std": 0.0, "n": 1}

    def test_population_std(self, tmp_path):
        self.fake_fold(tmp_path, 0, 1.0)
        self.fake_fold(tmp_path, 1, 3.0)
        summary, _, _ = aggregate(tmp_path)
        assert summary["survival"]["Imaging"]["mean"] == 2.0
        assert summary["survival"]["Imaging"]["std"] == 1.0

    def test_recomputation_oracle(self, small_run):
        cfg, out = small_run
        assert run("embed", "--config", cfg, "--out", out) == 0
        assert run("report", "--config", cfg, "--out", out) == 0
        s = io.read_json(out / "summary.json")
        vals = [io.read_json(out / f"fold_{f:02d}" / "metrics.json")["metrics"]["test"]["mean_additional"]
                for f in range(2)]
        assert s["embed"]["test_mean_additional"]["mean"] == pytest.approx(np.mean(vals), abs=1e-15)
        assert s["embed"]["test_mean_additional"]["std"] == pytest.approx(np.std(vals), abs=1e-15)
        assert (out / "additional_curve.csv").read_text().startswith("step,mean,std,n_folds\n")
        assert (out / "ortho_mean.csv").is_file()

    def test_failed_fold_excluded_and_counted(self, tmp_path, capsys):
        self.fake_fold(tmp_path, 0, 0.6)
        d = tmp_path / "fold_01"
        d.mkdir()
        io.write_json(d / "survival.json", {"fold": 1, "status": "failed"})
        assert run("report", "--out", tmp_path) == 0
        s = io.read_json(tmp_path / "summary.json")
        assert s["survival"]["n_failed"] == 1
        assert s["survival"]["Genomics"]["n"] == 1
        assert "1 failed" in capsys.readouterr().err

    def test_no_folds(self, tmp_path):
        assert run("report", "--out", tmp_path) == 2


class TestExitCodes:
    def test_bad_flag(self, tmp_path):
        assert run("embed", "--out", tmp_path, "--bogus") == 1

    def test_bad_config_value(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[experiment]\nscheme = svd\n")
        assert run("embed", "--config", cfg, "--out", tmp_path) == 1

    def test_missing_data(self, tmp_path):
        assert run("embed", "--out", tmp_path) == 2

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CCAFUSION_SIMULATE_N", "30")
        monkeypatch.setenv("CCAFUSION_SIMULATE_P", "5")
        assert run("simulate", "--out", tmp_path, "--folds", "1") == 0
        assert io.read_matrix_csv(tmp_path / "X.csv").values.shape == (5, 30)
        assert "n = 30" in (tmp_path / "config.simulate.ini").read_text()

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "ccafusion", "report", "--out", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 2
        assert "data error" in proc.stderr
