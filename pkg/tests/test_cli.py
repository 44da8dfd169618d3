import subprocess
import sys

import yaml

from lfidgp.cli import main


def write_config(tmp_path, **kw):
    data = {
        "simulator": "te3",
        "surrogates": ["gp", "lv-gp"],
        "n_init": 5,
        "s_total": 7,
        "repetitions": 2,
        "posterior_samples": 50,
        "bootstrap_resamples": 200,
        "output_dir": str(tmp_path / "out"),
        "dgp": {"num_inducing": 5, "train_steps": 10, "refresh_steps": 1, "final_steps": 5},
        "reference": {"budget": 2000, "keep": 0.01, "cache_dir": str(tmp_path / "cache")},
    }
    data.update(kw)
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_validate_config_prints_effective_yaml(tmp_path, capsys):
    assert main(["validate-config", "--config", str(write_config(tmp_path))]) == 0
    out = yaml.safe_load(capsys.readouterr().out)
    assert out["simulator"] == "te3" and out["acquisition"]["eps_q"] == 0.3


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["validate-config", "--config", str(write_config(tmp_path, n_init=50))]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_run_reference_and_compare(tmp_path, capsys):
    cfg = str(write_config(tmp_path))
    assert main(["reference", "--config", cfg]) == 0
    assert "20 samples" in capsys.readouterr().out
    out = tmp_path / "seeded"
    assert main(["run", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    assert "4 runs written" in capsys.readouterr().out
    assert (out / "runs.csv").exists() and (out / "comparison.csv").exists()
    table = tmp_path / "table"
    assert main(["compare", str(out), "--resamples", "200", "--out", str(table)]) == 0
    assert "te3" in capsys.readouterr().out
    assert (table / "comparison.csv").read_text() == (out / "comparison.csv").read_text().split("\n", 2)[2]


def test_module_entry_point_usage_error():
    res = subprocess.run([sys.executable, "-m", "lfidgp"], capture_output=True, text=True)
    assert res.returncode == 2 and "usage" in res.stderr
