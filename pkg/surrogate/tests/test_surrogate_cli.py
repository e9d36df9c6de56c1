import json
import subprocess
import sys

import pytest

from surrogate.cli import main

CFG_TOML = """\
split = [0.7, 0.2, 0.1]
folds = 2
epochs = 1
batch_size = 16
seed = 11
input_resolution = 32
min_ok_records = 8
"""


@pytest.fixture(scope="module")
def trained_run(synthetic_dataset, tmp_path_factory):
    run = tmp_path_factory.mktemp("run")
    cfg = run / "cfg.toml"
    cfg.write_text(CFG_TOML)
    rc = main(["train", "--data", str(synthetic_dataset), "--out", str(run),
               "--config", str(cfg)])
    assert rc == 0
    return run


class TestArguments:
    def test_no_subcommand(self, capsys):
        assert main([]) == 1

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--bogus"])
        assert exc.value.code == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_dataset(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path / "none"),
                   "--out", str(tmp_path / "run")])
        assert rc == 2
        assert "labels.csv" in capsys.readouterr().err

    def test_bad_config(self, synthetic_dataset, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("folds = 1\n")
        rc = main(["train", "--data", str(synthetic_dataset),
                   "--out", str(tmp_path / "run"), "--config", str(bad)])
        assert rc == 1
        assert "config error" in capsys.readouterr().err


class TestTrainCommand:
    def test_artifacts_written(self, trained_run, capsys):
        assert (trained_run / "model_E_c.pt").exists()
        assert (trained_run / "model_sigma_y.pt").exists()
        assert (trained_run / "resolved_config.toml").exists()
        metrics = json.loads((trained_run / "metrics.json").read_text())
        assert set(metrics["targets"]) == {"E_c", "sigma_y"}
        assert len(metrics["targets"]["E_c"]["fold_r2"]) == 2
        assert metrics["metrics_hash"]
        assert metrics["n_ok_records"] == 48


class TestEvaluateCommand:
    def test_writes_parity_files(self, synthetic_dataset, trained_run, capsys):
        rc = main(["evaluate", "--data", str(synthetic_dataset),
                   "--run", str(trained_run)])
        assert rc == 0
        for target in ("E_c", "sigma_y"):
            assert (trained_run / f"parity_{target}.csv").exists()
            assert (trained_run / f"parity_{target}.png").exists()
        eval_metrics = json.loads((trained_run / "eval_metrics.json").read_text())
        assert set(eval_metrics["test_r2"]) == {"E_c", "sigma_y"}
        assert "test R²" in capsys.readouterr().out

    def test_requires_trained_run(self, synthetic_dataset, tmp_path, capsys):
        rc = main(["evaluate", "--data", str(synthetic_dataset),
                   "--run", str(tmp_path)])
        assert rc == 2
        assert "train first" in capsys.readouterr().err


class TestExplainCommand:
    @pytest.mark.parametrize("method", ["ig", "shap"])
    def test_writes_map_and_overlay(self, synthetic_dataset, trained_run, method, capsys):
        rc = main(["explain", "--data", str(synthetic_dataset),
                   "--run", str(trained_run), "--method", method, "--id", "3"])
        assert rc == 0
        stem = trained_run / f"attribution_{method}_E_c_00003"
        assert stem.with_suffix(".csv").exists()
        assert stem.with_suffix(".png").exists()

    def test_unknown_id(self, synthetic_dataset, trained_run, capsys):
        rc = main(["explain", "--data", str(synthetic_dataset),
                   "--run", str(trained_run), "--method", "ig", "--id", "99999"])
        assert rc == 2
        assert "99999" in capsys.readouterr().err


class TestPlotsCommand:
    def test_renders_trend_and_parity(self, synthetic_dataset, trained_run, capsys):
        rc = main(["plots", "--data", str(synthetic_dataset),
                   "--run", str(trained_run)])
        assert rc == 0
        assert (trained_run / "trend_scatter_E_c.png").exists()
        assert (trained_run / "trend_scatter_sigma_y.png").exists()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "surrogate", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("train", "evaluate", "explain", "plots"):
        assert sub in out.stdout
