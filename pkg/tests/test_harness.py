import csv
import filecmp
import os

import numpy as np
import pytest

from lfidgp.errors import ConfigError
from lfidgp.harness import (
    ResultRecord,
    bootstrap_mean_ci,
    compare_models,
    load_config,
    parse_config,
    read_records,
    run_experiment,
    write_records,
)
from lfidgp.harness.compare import write_comparison
from lfidgp.harness.config import dataclass_defaults
from lfidgp.mathcore import RngStream

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def tiny(tmp_path, **kw):
    data = {
        "simulator": "te1",
        "surrogates": ["gp", "lv-gp"],
        "n_init": 6,
        "s_total": 9,
        "repetitions": 3,
        "posterior_samples": 100,
        "bootstrap_resamples": 200,
        "output_dir": str(tmp_path / "out"),
        "dgp": {"num_inducing": 6, "train_steps": 20, "refresh_steps": 2, "final_steps": 10},
        "reference": {"budget": 2000, "keep": 0.01, "cache_dir": str(tmp_path / "cache")},
    }
    data.update(kw)
    return parse_config(data)


# -- configuration -----------------------------------------------------------------------------


def test_defaults_and_round_trip(tmp_path):
    cfg = parse_config({"simulator": "TE2"})
    assert cfg.simulator == "te2" and cfg.surrogates == ["gp", "lv-2gp"]
    assert cfg.n_init == 100 and cfg.s_total == 200 and cfg.acquisition.eps_q == 0.3
    path = tmp_path / "c.yaml"
    path.write_text(cfg.effective_yaml())
    assert load_config(path).effective() == cfg.effective()


def test_settings_match_library_defaults():
    lib = dataclass_defaults()
    cfg = parse_config({"simulator": "te1"})
    assert cfg.acquisition.build() == type(cfg.acquisition.build())(**lib["acquisition"])
    dgp = cfg.dgp_config("lv-2gp")
    assert {k: getattr(dgp, k) for k in lib["dgp"]} == lib["dgp"]
    assert cfg.dgp_config("lv-gp").num_gp_layers == 1


@pytest.mark.parametrize("bad", [
    {"simulator": "bdm"},
    {"simulator": "te1", "n_init": 50, "s_total": 20},
    {"simulator": "te1", "surrogates": ["gp", "gp"]},
    {"simulator": "te1", "surrogates": ["mlp"]},
    {"simulator": "te1", "acquisition": {"eps_q": 1.5}},
    {"simulator": "te1", "dgp": {"num_inducing": 0}},
    {"simulator": "te1", "typo_field": 1},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    p = tmp_path / "list.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_bundled_configs_validate():
    names = sorted(f for f in os.listdir(CONFIG_DIR) if f.endswith(".yaml"))
    assert "te2_desk.yaml" in names
    for name in names:
        load_config(os.path.join(CONFIG_DIR, name))


def test_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("simulator: te3\nbase_seed: 4\n")
    assert load_config(p, base_seed=9, workers=None).base_seed == 9


# -- records and comparison ----------------------------------------------------------------


def test_records_round_trip(tmp_path):
    recs = [
        ResultRecord(0, "te1", "gp", 0.1234567890123, 512.5, 0.03, 200, True, 1, False, "abc"),
        ResultRecord.failed(1, "te1", "lv-2gp", ValueError("bad,\nthing"), "abc"),
    ]
    path = tmp_path / "runs.csv"
    write_records(path, recs, ["a header"])
    back = read_records(path)
    assert back[0] == recs[0]
    assert back[1].status == "failed" and not back[1].ok and np.isnan(back[1].raw_distance)
    assert path.read_text().startswith("# a header\n")


def make_records(values):
    return [ResultRecord(i, "te2", kind, v, 100.0, 0.0, 200, True, reference="r")
            for kind, vals in values.items() for i, v in enumerate(vals)]


def test_compare_scaling():
    rows = compare_models(make_records({"gp": [2.0, 4.0, 6.0], "lv-2gp": [1.0, 2.0, 3.0]}), 500)
    by = {r.surrogate: r for r in rows}
    assert by["gp"].raw_median == 4.0 and by["lv-2gp"].raw_median == 2.0
    assert by["gp"].scaled_median == 2.0 and by["lv-2gp"].scaled_median == 1.0
    assert by["gp"].ci_low <= 2.0 <= by["gp"].ci_high


def test_compare_rejects_mixed_references():
    recs = make_records({"gp": [1.0], "lv-2gp": [1.0]})
    recs.append(ResultRecord(5, "te2", "gp", 1.0, 1.0, 0.0, 200, True, reference="other"))
    with pytest.raises(ConfigError):
        compare_models(recs)
    with pytest.raises(ConfigError):
        compare_models(make_records({"gp": [1.0, 2.0]}))


def test_bootstrap_interval():
    v = np.random.default_rng(0).normal(5.0, 1.0, 200)
    lo, hi = bootstrap_mean_ci(v, 2000, RngStream(0))
    assert lo < v.mean() < hi and hi - lo < 0.5
    assert bootstrap_mean_ci(v, 2000, RngStream(0)) == (lo, hi)


def test_comparison_csv(tmp_path):
    rows = compare_models(make_records({"gp": [2.0, 4.0], "lv-2gp": [1.0, 2.0]}), 200)
    write_comparison(tmp_path / "c.csv", rows)
    with open(tmp_path / "c.csv") as fh:
        table = list(csv.DictReader(fh))
    assert [t["surrogate"] for t in table] == ["gp", "lv-2gp"]
    assert float(table[0]["scaled_median"]) == 2.0


# -- full experiments ----------------------------------------------------------------------


REPRODUCIBLE = ["runs.csv", "comparison.csv", "effective_config.yaml"]


def output_files(root):
    out = []
    for dirpath, _, files in os.walk(root):
        for f in files:
            rel = os.path.relpath(os.path.join(dirpath, f), root)
            if rel != "timings.csv" and not rel.startswith("logs"):
                out.append(rel)
    return sorted(out)


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("exp")
    cfg = tiny(tmp)
    records = run_experiment(cfg)
    return cfg, records, tmp


def test_experiment_accounting(experiment):
    cfg, records, tmp = experiment
    out = tmp / "out"
    assert len(records) == 6 and all(r.ok for r in records)
    assert all(r.simulator_calls == cfg.s_total for r in records)
    assert [(r.surrogate, r.seed) for r in records] == [(k, s) for k in ("gp", "lv-gp") for s in range(3)]
    assert len(read_records(out / "runs.csv")) == 6
    for name in REPRODUCIBLE + ["timings.csv"]:
        assert (out / name).exists()
    assert len(os.listdir(out / "posteriors")) == 6
    with open(out / "logs" / "gp_0.csv") as fh:
        assert len(list(csv.DictReader(fh))) == cfg.s_total


def test_runs_header_states_scale(experiment):
    _, _, tmp = experiment
    first = (tmp / "out" / "runs.csv").read_text().splitlines()[0]
    assert first.startswith("# desk-scale results: repetitions=3") and "full scale" in first


def test_rerun_is_byte_identical(experiment):
    cfg, _, tmp = experiment
    again = tmp / "again"
    run_experiment(cfg, out_dir=str(again))
    files = output_files(tmp / "out")
    assert files == output_files(again)
    for rel in files:
        assert filecmp.cmp(tmp / "out" / rel, again / rel, shallow=False), rel


def test_parallel_matches_sequential(experiment):
    cfg, _, tmp = experiment
    par = tmp / "parallel"
    run_experiment(cfg, out_dir=str(par), workers=2)
    for rel in output_files(tmp / "out"):
        assert filecmp.cmp(tmp / "out" / rel, par / rel, shallow=False), rel


def test_impossible_threshold_gives_flat_weights(tmp_path):
    cfg = tiny(tmp_path, surrogates=["gp"], repetitions=1, threshold=-1e9)
    records = run_experiment(cfg)
    # an impossible threshold leaves no likelihood mass: flat weights, still a valid record
    assert records[0].ok and records[0].flat_weights


def test_budget_sweep(tmp_path):
    cfg = tiny(tmp_path, surrogates=["gp"], repetitions=1, budget_sweep=[6, 10])
    records = run_experiment(cfg)
    assert [r.simulator_calls for r in records] == [6, 10]
    out = tmp_path / "out"
    for b in (6, 10):
        sub = read_records(out / f"budget_{b}" / "runs.csv")
        assert sub[0].simulator_calls == b
        assert f"n_init={b // 2}, s_total={b}" in (out / f"budget_{b}" / "runs.csv").read_text()
    with pytest.raises(ConfigError):
        tiny(tmp_path, budget_sweep=[2])
