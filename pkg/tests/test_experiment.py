import json
import logging
import time

import numpy as np
import pytest

from repbandit.core import read_ledger_csv
from repbandit.experiment import cli
from repbandit.experiment.config import ConfigError, ExperimentConfig, PolicySpec, load_config, parse_seeds
from repbandit.experiment.presets import PRESETS, get_preset
from repbandit.experiment.runner import GroundTruth, build_problem, check_l_spread, run_experiment, summarize
from repbandit.policies import BasisUpdate


@pytest.fixture(autouse=True)
def _quiet():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


def small_synthetic(tmp_path, **kw):
    raw = {
        "scenario": "synthetic",
        "policies": ["cd_repl", "oracle", "independent_etc"],
        "seeds": [0, 1],
        "output_dir": str(tmp_path),
        "preset_name": "tiny",
        "synthetic": {"d": 6, "r": 2, "m": 2, "tasks_per_segment": 8, "N": 100, "ell": 2, "kappa_targets": [0.9],
                      "noise_scale": 0.1},
        "policy_config": {"kappa": 0.9},
    }
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------- config


def test_parse_seeds():
    assert parse_seeds("0..9") == list(range(10))
    assert parse_seeds("3") == [3]
    assert parse_seeds("1,4,7") == [1, 4, 7]
    for bad in ("5..2", "a..b", "x"):
        with pytest.raises(ConfigError):
            parse_seeds(bad)


@pytest.mark.parametrize(
    "change, match",
    [
        ({"scenario": "mdp"}, "scenario"),
        ({"seeds": []}, "seed"),
        ({"policies": []}, "policy"),
        ({"policies": ["ucb"]}, "not available"),
        ({"policies": ["cd_repl", "cd_repl"]}, "distinct"),
        ({"bogus": 1}, "unknown config keys"),
        ({"synthetic": {"m": 3, "kappa_targets": [0.5]}}, "synthetic"),
        ({"policy_config": {"foo": 1}}, "policy_config"),
        ({"check": "nope"}, "check"),
        ({"ledger_detail": "every"}, "ledger_detail"),
    ],
)
def test_config_validation_errors(tmp_path, change, match):
    with pytest.raises(ConfigError, match=match):
        small_synthetic(tmp_path, **change)


def test_config_missing_required():
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict({"scenario": "synthetic", "policies": ["cd_repl"]})


def test_config_missing_dataset_file(tmp_path):
    raw = {"scenario": "recsys", "policies": ["cd_repl"], "seeds": [0],
           "recsys": {"arms": str(tmp_path / "a.csv"), "users": str(tmp_path / "u.csv"), "groups": str(tmp_path / "g.csv")}}
    with pytest.raises(ConfigError, match="does not exist"):
        ExperimentConfig.from_dict(raw)


def test_config_wcst_policy_mismatch():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "wcst", "policies": ["cd_repl"], "seeds": [0]})


def test_config_json_roundtrip(tmp_path):
    cfg = get_preset("fig4-L-sweep")
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json(), encoding="utf-8")
    back = load_config(path)
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()
    assert cfg.replace(output_dir="elsewhere").config_hash() == cfg.config_hash()
    assert cfg.replace(seeds=[0]).config_hash() != cfg.config_hash()


def test_policy_overrides_parsed(tmp_path):
    cfg = small_synthetic(tmp_path, policies=[{"label": "cd_L4", "policy": "cd_repl", "overrides": {"L": 4}}])
    assert cfg.policies == [PolicySpec("cd_L4", "cd_repl", {"L": 4})]


def test_all_presets_valid():
    for name in PRESETS:
        get_preset(name).validate()
    with pytest.raises(KeyError):
        get_preset("nope")


def test_fixed_schedule_seed():
    cfg = get_preset("fig4-L-sweep")
    assert cfg.synthetic_spec(0).seed == cfg.synthetic_spec(7).seed
    cfg = get_preset("fig3a-desk")
    assert cfg.synthetic_spec(0).seed != cfg.synthetic_spec(7).seed


def test_build_problem_recsys():
    p, pcfg = build_problem(get_preset("recsys-standin"), 0)
    assert p.schedule.n_tasks == 23 and pcfg.S == 23 and pcfg.N == 200 and pcfg.r == 2


# ---------------------------------------------------------------- runs


def test_smoke_preset_fast(tmp_path):
    cfg = get_preset("smoke").replace(output_dir=str(tmp_path))
    start = time.perf_counter()
    _, doc = run_experiment(cfg)
    assert time.perf_counter() - start < 1.0
    ledger = read_ledger_csv(tmp_path / "smoke" / "independent_etc" / "seed0.csv")
    assert len(ledger["t"]) == 100
    assert set(doc) >= {"preset", "config_hash", "policies"}
    entry = doc["policies"]["independent_etc"]
    assert set(entry) >= {"final_regret_mean", "final_regret_std", "per_round_file"}
    assert (tmp_path / "smoke" / entry["per_round_file"]).is_file()


def test_output_layout(tmp_path):
    cfg = small_synthetic(tmp_path, ledger_detail="task")
    run_experiment(cfg)
    root = tmp_path / "tiny"
    for label in ("cd_repl", "oracle", "independent_etc"):
        for s in (0, 1):
            rows = (root / label / f"seed{s}.csv").read_text().splitlines()
            assert len(rows) == 1 + 16
        assert (root / label / "per_round.csv").is_file()
    assert (root / "cd_repl" / "seed0.events.csv").is_file()
    assert (root / "cd_repl" / "distance.csv").is_file()
    assert json.loads((root / "config.json").read_text()) == json.loads(cfg.to_json())


def test_summary_json_reproducible(tmp_path):
    cfg = small_synthetic(tmp_path)
    run_experiment(cfg)
    first = json.loads((tmp_path / "tiny" / "summary.json").read_text())
    run_experiment(cfg)
    second = json.loads((tmp_path / "tiny" / "summary.json").read_text())
    first.pop("generated_at"), second.pop("generated_at")
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


def test_parallel_matches_sequential(tmp_path):
    cfg = small_synthetic(tmp_path)
    _, seq = run_experiment(cfg, write=False)
    _, par = run_experiment(cfg, parallel=2, write=False)
    assert seq == par


def test_envelope_ordering_and_monotone(tmp_path):
    summary, _ = run_experiment(small_synthetic(tmp_path), write=False)
    for mean, lo, hi in summary.envelope.values():
        assert np.all(lo <= mean + 1e-12) and np.all(mean <= hi + 1e-12)
        assert np.all(np.diff(mean) >= -1e-12)


def test_oracle_distance_zero(tmp_path):
    summary, doc = run_experiment(small_synthetic(tmp_path), write=False)
    for trace in summary.distances["oracle"]:
        assert [task for task, _, _ in trace] == [0, 8]
        assert all(dist < 1e-12 for _, _, dist in trace)
    assert doc["policies"]["oracle"]["post_boundary_distance_mean"] < 1e-12


def test_oracle_without_ground_truth_is_config_error(tmp_path, monkeypatch):
    from repbandit.core import Problem, TaskSchedule
    from repbandit.experiment import runner

    cfg = small_synthetic(tmp_path, policies=["oracle"])
    problem, pcfg = build_problem(cfg, 0)
    s = problem.schedule
    bare = Problem(TaskSchedule(s.tasks, s.rounds_per_task, s.boundaries), problem.action_set, problem.noise)
    monkeypatch.setattr(runner, "_cached_problem", lambda c, seed: (bare, pcfg))
    with pytest.raises(ConfigError, match="ground-truth"):
        run_experiment(cfg, write=False)


def test_wcst_cells(tmp_path):
    cfg = ExperimentConfig.from_dict({
        "scenario": "wcst", "policies": ["oracle", "random"], "seeds": [0, 1],
        "wcst": {"rule_period": 10, "total_rounds": 50}, "output_dir": str(tmp_path), "preset_name": "w",
    })
    summary, doc = run_experiment(cfg)
    assert doc["policies"]["oracle"]["mean_reward_mean"] == 1.0
    assert doc["policies"]["oracle"]["final_regret_mean"] == 0.0
    lines = (tmp_path / "w" / "random" / "seed0.csv").read_text().splitlines()
    assert lines[0] == "t,rule,card,action,reward,policy" and len(lines) == 51


# ---------------------------------------------------------------- summarize


def test_summarize_single_seed_envelope():
    curve = np.cumsum(np.array([0.5, 0.0, 1.5]))
    s = summarize({"a": [curve]})
    mean, lo, hi = s.envelope["a"]
    np.testing.assert_array_equal(mean, curve)
    np.testing.assert_array_equal(lo, curve)
    np.testing.assert_array_equal(hi, curve)
    assert s.final_regret["a"].tolist() == [2.0]


def test_summarize_length_mismatch():
    with pytest.raises(ValueError, match="different lengths"):
        summarize({"a": [np.zeros(3), np.zeros(4)]})
    with pytest.raises(ValueError, match="runs"):
        summarize({"a": [np.zeros(3)], "b": [np.zeros(3), np.zeros(3)]})
    with pytest.raises(ValueError, match="event logs"):
        summarize({"a": [np.zeros(3)]}, {"a": [[], []]})


def test_summarize_distances_from_ground_truth():
    e = np.eye(4)
    truth = GroundTruth([e[:, :1], e[:, 1:2]], [2, 2])
    trace = [BasisUpdate(0, 1, e[:, :1]), BasisUpdate(2, 1, e[:, :1])]
    s = summarize({"a": [np.zeros(4)]}, ground_truth=truth, basis_traces={"a": [trace]})
    assert [round(d, 12) for _, _, d in s.distances["a"][0]] == [0.0, 1.0]
    assert s.change_points == [2]
    assert s.post_boundary_distance("a") == pytest.approx(1.0)


def test_l_spread_check_arithmetic():
    s = summarize({"x": [np.array([100.0])], "y": [np.array([125.0])]})
    assert check_l_spread(s)[0]
    s = summarize({"x": [np.array([100.0])], "y": [np.array([126.0])]})
    assert not check_l_spread(s)[0]


# ---------------------------------------------------------------- CLI


def test_cli_list_presets(capsys):
    assert cli.main(["list-presets"]) == 0
    out = capsys.readouterr().out
    for name in ("smoke", "fig3a-desk", "fig4-L-sweep", "recsys-standin", "wcst"):
        assert name in out


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(get_preset("smoke").to_json(), encoding="utf-8")
    assert cli.main(["validate", "--config", str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"scenario": "synthetic", "policies": [], "seeds": [0]}', encoding="utf-8")
    assert cli.main(["validate", "--config", str(bad)]) == 1
    assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "broken.json").write_text("{", encoding="utf-8")
    assert cli.main(["validate", "--config", str(tmp_path / "broken.json")]) == 1


def test_cli_run_success(tmp_path, capsys):
    code = cli.main(["run", "--preset", "smoke", "--out", str(tmp_path), "--seeds", "0..1"])
    assert code == 0
    doc = json.loads((tmp_path / "smoke" / "summary.json").read_text())
    assert doc["seeds"] == [0, 1]
    assert "final regret" in capsys.readouterr().out


def test_cli_config_overrides_preset(tmp_path):
    over = tmp_path / "o.json"
    over.write_text(json.dumps({"policies": ["independent_etc", "cd_repl"]}), encoding="utf-8")
    assert cli.main(["run", "--preset", "smoke", "--config", str(over), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "smoke" / "summary.json").read_text())
    assert sorted(doc["policies"]) == ["cd_repl", "independent_etc"]


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["run", "--preset", "nope"]) == 1
    assert cli.main(["run"]) == 1
    assert cli.main(["run", "--preset", "smoke", "--parallel", "0"]) == 1
    assert cli.main(["run", "--preset", "smoke", "--check", "--out", str(tmp_path)]) == 1
    assert "invalid config" in capsys.readouterr().err


def test_cli_runtime_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synthetic": {"d": 6, "r": 2, "m": 1, "tasks_per_segment": 2, "N": 10, "ell": 2,
                                             "kappa_targets": []}}), encoding="utf-8")
    assert cli.main(["run", "--preset", "smoke", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "run failed" in capsys.readouterr().err


def test_cli_failed_check(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"wcst": {"rule_period": 20, "total_rounds": 30}, "seeds": [0, 1]}), encoding="utf-8")
    assert cli.main(["run", "--preset", "wcst", "--config", str(cfg), "--out", str(tmp_path), "--check"]) == 3
    assert "check wcst: FAIL" in capsys.readouterr().out
