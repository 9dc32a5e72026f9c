import csv
import json

import pytest

from rlev.cli import EXIT_BUDGET, EXIT_CHECK, EXIT_CONFIG, EXIT_DATA, RunConfig, dispatch, resolve_config
from rlev.errors import ConfigError
from rlev.exam_env import load_dataset
from rlev.policy import load_policy

SMALL = ["--exams", "2", "--questions", "10", "--vocab", "4", "--epochs", "2", "--batch", "16", "--eval-samples", "2"]


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_gen_data(tmp_path):
    out = tmp_path / "d.jsonl"
    assert dispatch(["gen-data", "--exams", "10", "--questions", "20", "--seed", "1", "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert len(ds) == 200
    m = manifest(tmp_path)
    assert m["command"] == "gen-data"
    assert m["seed"] == 1
    assert m["artifact_index"] == [str(out)]
    assert m["config_snapshot"]["data_seed"] == 1
    assert set(m) >= {"command", "config_snapshot", "seed", "output_dir", "artifact_index"}


def test_grad_check_example(tmp_path):
    out = tmp_path / "gc"
    assert dispatch(["grad-check", "--vocab", "3", "--max-len", "2", "--trials", "100", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "grad_report.csv").open()))
    assert rows and all(float(r["max_abs_error"]) < 1e-6 for r in rows)
    assert list(rows[0]) == ["context", "token", "analytic", "finite_difference", "eos_formula", "max_abs_error"]


def test_grad_check_failure_exit(tmp_path):
    out = tmp_path / "gc"
    code = dispatch(["grad-check", "--vocab", "3", "--max-len", "2", "--trials", "2", "--tol", "1e-300", "--out", str(out)])
    assert code == EXIT_CHECK
    assert (out / "grad_report.csv").exists()
    assert manifest(out)["artifact_index"] == [str(out / "grad_report.csv")]


def test_train_example_and_rerun(tmp_path):
    out = tmp_path / "run"
    argv = ["train", "--estimator", "rloo", "--reward", "human_aligned", "--alpha", "10", "--eval-every", "1"]
    assert dispatch(argv + SMALL + ["--out", str(out)]) == 0
    m = manifest(out)
    assert sorted(m["artifact_index"]) == sorted(str(out / f) for f in ("run_log.jsonl", "policy.jsonl", "metrics.json"))
    assert len((out / "run_log.jsonl").read_text().splitlines()) == 20
    load_policy(out / "policy.jsonl")
    again = tmp_path / "again"
    assert dispatch(["train", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    for name in ("run_log.jsonl", "policy.jsonl", "metrics.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes()
    # nothing written outside the two output directories
    assert sorted(p.name for p in tmp_path.iterdir()) == ["again", "run"]


def test_eval_and_traj(tmp_path):
    assert dispatch(["train", *SMALL, "--out", str(tmp_path / "t")]) == 0
    pol = str(tmp_path / "t" / "policy.jsonl")
    assert dispatch(["eval", *SMALL, "--policy", pol, "--out", str(tmp_path / "e")]) == 0
    res = list(csv.DictReader((tmp_path / "e" / "results.csv").open()))
    assert len(res) == 2 * 20
    assert dispatch(["traj", *SMALL, "--policy", pol, "--cohort", "3", "--out", str(tmp_path / "j")]) == 0
    rows = list(csv.DictReader((tmp_path / "j" / "trajectories.csv").open()))
    assert {r["cohort"] for r in rows} == {"top_valued", "bottom_valued"}
    assert dispatch(["traj", *SMALL, "--cohort", "3", "--out", str(tmp_path / "k")]) == 0
    assert (tmp_path / "k" / "policy.jsonl").exists()


def test_ablate_and_sweep(tmp_path):
    a = tmp_path / "a"
    assert dispatch(["ablate", *SMALL, "--forms", "human_aligned,correctness_only", "--seeds", "0,1", "--out", str(a)]) == 0
    rows = list(csv.DictReader((a / "ablation.csv").open()))
    assert [r["form"] for r in rows] == ["human_aligned", "correctness_only"]
    assert len(list(csv.DictReader((a / "ablation_per_seed.csv").open()))) == 4
    s = tmp_path / "s"
    assert dispatch(["sweep-alpha", *SMALL, "--alphas", "1,5,10,15,20", "--seeds", "0", "--out", str(s)]) == 0
    rows = list(csv.DictReader((s / "alpha_sweep.csv").open()))
    assert [float(r["alpha"]) for r in rows] == [1, 5, 10, 15, 20]


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RLEV_OUTPUT_DIR", str(tmp_path / "env"))
    assert dispatch(["grad-check", "--vocab", "3", "--max-len", "1", "--trials", "2"]) == 0
    assert (tmp_path / "env" / "grad-check" / "grad_report.csv").exists()


def test_defaults():
    cfg, overrides = resolve_config({})
    assert (cfg.alpha, cfg.estimator, cfg.group_size, cfg.seed) == (10.0, "rloo", 8, 0)
    assert cfg == RunConfig() and overrides == []


def test_flag_beats_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"alpha": 5, "seed": 3}))
    cfg, overrides = resolve_config({"alpha": "7"}, path)
    assert cfg.alpha == 7.0 and cfg.seed == 3
    assert overrides == ["alpha"]
    out = tmp_path / "o"
    assert dispatch(["grad-check", "--config", str(path), "--trials", "1", "--vocab", "3", "--max-len", "1", "--out", str(out)]) == 0
    path.write_text(json.dumps({"trials": 5}))
    assert dispatch(["grad-check", "--config", str(path), "--trials", "1", "--vocab", "3", "--max-len", "1", "--out", str(out)]) == 0
    assert manifest(out)["flag_overrides"] == ["trials"]


@pytest.mark.parametrize(
    "flags,message",
    [
        ({"alpha": -1}, "alpha"),
        ({"learning_rate": -0.5}, "learning_rate"),
        ({"vocab_size": 2}, "vocab_size"),
        ({"bin_fraction": 0.9}, "bin_fraction"),
        ({"seed": "abc"}, "seed"),
        ({"seed": 1.5}, "seed"),
        ({"estimator": "ppo"}, "ppo"),
        ({"forms": "human_aligned,bogus"}, "bogus"),
        ({"nonsense": 1}, "nonsense"),
    ],
)
def test_config_errors_name_the_key(flags, message):
    with pytest.raises(ConfigError, match=message):
        resolve_config(flags)


def test_config_file_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{bad")
    with pytest.raises(ConfigError, match="invalid JSON"):
        resolve_config({}, path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        resolve_config({}, path)
    path.write_text(json.dumps({"command": "train", "config_snapshot": {}}))
    with pytest.raises(ConfigError, match="written by"):
        resolve_config({}, path, "eval")
    with pytest.raises(ConfigError, match="not found"):
        resolve_config({}, tmp_path / "missing.json")


def test_exit_codes(tmp_path):
    assert dispatch(["bogus"]) == EXIT_CONFIG
    assert dispatch(["train", "--no-such-flag"]) == EXIT_CONFIG
    assert dispatch(["train", "--alpha", "-1", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert dispatch(["eval", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert dispatch(["train", "--data", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "x")]) == EXIT_DATA
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": 0}\n')
    assert dispatch(["train", "--data", str(bad), "--out", str(tmp_path / "x")]) == EXIT_DATA
    code = dispatch(["grad-check", "--vocab", "11", "--max-len", "7", "--trials", "1", "--out", str(tmp_path / "x")])
    assert code == EXIT_BUDGET
