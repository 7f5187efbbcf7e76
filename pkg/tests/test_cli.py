import csv
import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from foldtrack.cli import main
from foldtrack.csvio import read_dataset_csv, read_run_log, write_dataset_csv
from foldtrack.gpr import Dataset
from foldtrack.oracles import DuffingParams, duffing_gamma


def base_trace_config(**overrides):
    cfg = {
        "oracle": {
            "name": "duffing",
            "params": {"omega_n": 1.0, "zeta": 0.02, "alpha_3": 0.05, "noise_sigma": 0.0},
            "domain_box": {"omega_min": 0.95, "omega_max": 1.45, "A_min": 0.05, "A_max": 5.0},
        },
        "init": {"x0": {"omega": 1.11, "A": 1.45}, "grid_shape": [5, 5],
                 "half_widths": {"omega": 0.05, "A": 0.45}},
        "hyperparameters": {"init": {"sigma_n2": 1e-6, "sigma_f2": 0.05,
                                     "l_omega": 0.05, "l_A": 0.45}},
        "continuation": {"h": 0.1, "h_max": 0.15, "max_steps": 6},
        "acquisition": {"n_test": 30, "beta_tol": 5e-3, "max_points_per_step": 10},
        "seed": 42,
    }
    cfg.update(overrides)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def run_cli(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


class TestTrace:
    def test_zero_steps_writes_init_artifacts(self, tmp_path):
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 0
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        out = tmp_path / "out"
        assert (out / "manifest.json").exists()
        assert read_dataset_csv(out / "dataset.csv").n >= 25
        rows = read_run_log(out / "run_log.csv")
        assert len(rows) == 1 and rows[0]["step"] == 0

    def test_full_run_completes_with_fold_curve(self, tmp_path):
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 45
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        rows = read_run_log(tmp_path / "out" / "run_log.csv")
        assert len(rows) >= 30

    def test_unattainable_beta_tol_caps_but_exits_zero(self, tmp_path):
        # threshold so small no collection can ever satisfy it: every step
        # ends via the collection cap, with a warning, and the run still goes on
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 2
        cfg["acquisition"] = {"n_test": 10, "beta_tol": 1e-30, "max_points_per_step": 2}
        path = write_cfg(tmp_path, cfg)
        with pytest.warns(UserWarning, match="above tol"):
            res = run_cli("trace", "--config", path, "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        rows = read_run_log(tmp_path / "out" / "run_log.csv")
        assert len(rows) == 3  # initial fold + 2 steps
        with open(tmp_path / "out" / "collection_log.csv") as fh:
            n_collected = sum(1 for _ in fh) - 1
        assert n_collected == 2 * len(rows)

    def test_manifest_replay_bit_identical(self, tmp_path):
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 5
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "a"))
        assert res.exit_code == 0
        res2 = run_cli("trace", "--config", str(tmp_path / "a" / "manifest.json"),
                       "--out", str(tmp_path / "b"))
        assert res2.exit_code == 0
        for name in ("run_log.csv", "collection_log.csv", "dataset.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unknown_key_rejected(self, tmp_path):
        cfg = base_trace_config()
        cfg["surprise"] = 1
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 1
        assert "unknown keys" in res.output

    def test_oracle_error_exit_code(self, tmp_path):
        cfg = base_trace_config()
        cfg["init"]["x0"] = {"omega": 1.44, "A": 4.9}  # grid extends past the box
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 2

    def test_continuation_failure_exit_code(self, tmp_path):
        cfg = base_trace_config()
        cfg["oracle"]["params"]["alpha_3"] = 0.0  # linear: no folds anywhere
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 3

    def test_malformed_config_rejected_before_oracle(self, tmp_path):
        cfg = base_trace_config()
        cfg["acquisition"]["n_max"] = 4  # below the n0 = 25 grid
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 1

    def test_refit_each_step_flag(self, tmp_path):
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 3
        cfg["hyperparameters"]["refit_each_step"] = True
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        rows = read_run_log(tmp_path / "out" / "run_log.csv")
        assert len(rows) == 4


class TestSweep:
    def test_replay_identity(self, tmp_path):
        # sweeping the replay oracle over its own grid reproduces the file
        p = DuffingParams()
        omegas = [1.05, 1.10, 1.15]
        As = [0.5, 1.0, 1.5, 2.0]
        X = np.array([[w, a] for w in omegas for a in As])
        ds = Dataset(X, duffing_gamma(p, X[:, 0], X[:, 1]))
        src = tmp_path / "recorded.csv"
        write_dataset_csv(src, ds)
        cfg = {
            "oracle": {"name": "replay", "params": {"path": "recorded.csv", "tol": 1e-9}},
            "sweep": {"omega_start": 1.05, "omega_stop": 1.15, "omega_step": 0.05,
                      "A_start": 0.5, "A_stop": 2.0, "A_step": 0.5},
        }
        res = run_cli("sweep", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        assert (tmp_path / "out" / "dataset.csv").read_bytes() == src.read_bytes()

    def test_duffing_sweep_writes_per_frequency_files(self, tmp_path):
        cfg = {
            "oracle": {"name": "duffing",
                       "params": {"noise_sigma": 0.0},
                       "domain_box": {"omega_min": 0.95, "omega_max": 1.45,
                                      "A_min": 0.05, "A_max": 5.0}},
            "sweep": {"omega_start": 1.05, "omega_stop": 1.15, "omega_step": 0.05,
                      "A_start": 0.2, "A_stop": 3.0, "A_step": 0.2},
        }
        res = run_cli("sweep", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        assert len(list((tmp_path / "out").glob("scurve_*.csv"))) == 3


class TestNlfrCommand:
    def test_matches_hand_filter(self, tmp_path):
        p = DuffingParams()
        rng = np.random.default_rng(3)
        X = np.column_stack([rng.uniform(1.0, 1.3, 400), rng.uniform(0.3, 3.0, 400)])
        F = duffing_gamma(p, X[:, 0], X[:, 1])
        write_dataset_csv(tmp_path / "data.csv", Dataset(X, F))
        level, band = 0.3, 0.05
        cfg = {"inputs": {"datasets": ["data.csv"]}, "gamma_level": level, "band": band}
        res = run_cli("nlfr", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 0
        with open(tmp_path / "out" / "slice_points.csv") as fh:
            got = [(float(r["omega"]), float(r["A"]), float(r["F"]))
                   for r in csv.DictReader(fh)]
        expected = [(w, a, f) for (w, a), f in zip(X, F) if abs(f - level) <= band * level]
        assert len(got) == len(expected) > 0
        for g, e in zip(sorted(got), sorted(expected)):
            assert g == pytest.approx(e, rel=1e-12)


class TestMissingInputs:
    def test_nlfr_missing_dataset_is_config_error(self, tmp_path):
        cfg = {"inputs": {"datasets": ["nope.csv"]}, "gamma_level": 1.0}
        res = run_cli("nlfr", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 1
        assert "not found" in res.output

    def test_offline_missing_dataset_is_config_error(self, tmp_path):
        cfg = {"inputs": {"dataset": "nope.csv"}}
        res = run_cli("offline", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "out"))
        assert res.exit_code == 1


class TestOfflineAndEnsemble:
    @pytest.fixture()
    def traced(self, tmp_path):
        cfg = base_trace_config()
        cfg["continuation"]["max_steps"] = 18
        res = run_cli("trace", "--config", write_cfg(tmp_path, cfg),
                      "--out", str(tmp_path / "run"))
        assert res.exit_code == 0
        return tmp_path

    def test_offline_traces_recorded_dataset(self, traced):
        cfg = {"inputs": {"dataset": str(traced / "run" / "dataset.csv")},
               "x0": [1.15, 1.6], "max_steps": 40}
        res = run_cli("offline", "--config", write_cfg(traced, cfg, "off.yaml"),
                      "--out", str(traced / "off"))
        assert res.exit_code == 0
        rows = read_run_log(traced / "off" / "fold_curve.csv")
        assert len(rows) > 5
        manifest = json.loads((traced / "off" / "manifest.json").read_text())
        assert "hyperparameters_fitted" in manifest

    def test_ensemble_smoke_profile(self, traced):
        import time
        cfg = {"inputs": {"dataset": str(traced / "run" / "dataset.csv")},
               "n_runs": 10, "dropout_fraction": 0.1, "fit_n_starts": 1,
               "max_steps": 60, "seed": 5}
        t0 = time.time()
        res = run_cli("ensemble", "--config", write_cfg(traced, cfg, "ens.yaml"),
                      "--out", str(traced / "ens"))
        elapsed = time.time() - t0
        assert res.exit_code == 0
        assert elapsed < 60.0
        with open(traced / "ens" / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        completed = [r for r in rows if r["completed"] == "1"]
        assert len(completed) >= 9
        for r in completed:
            assert (traced / "ens" / f"curve_{int(r['run_id']):04d}.csv").exists()
            assert r["n_segments"] == "1"
