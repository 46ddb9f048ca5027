import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from stac import config
from stac.cli import main, read_plot_csv
from stac.config import ConfigError, RunConfig, RunSection
from stac.games import CoordinationGameSpec, LeducSpec
from stac.train import TrainConfig

SMALL = """\
[run]
algorithm = stac
signals = 2
seed = 3

[game]
name = coordination
payoff_left = 100
payoff_right = 100

[train]
episodes = 400
episodes_per_iteration = 16
batch_size = 32
eval_every = 100
reward_scale = 0.01
alpha = 0.05
adversary_alpha = 0.05
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- config ---------------------------------------------------------------------------


def test_empty_config_is_a_default_coordination_run():
    cfg = config.loads("")
    assert cfg.game == "coordination" and cfg.n_signals == 2
    assert cfg.train.batch_size == 128 and cfg.train.lr_policy == 1e-2 and cfg.train.lr_q == 5e-4
    assert cfg.train.buffer_capacity == 100_000 and cfg.train.policy_hidden == (64,)


def test_leduc_defaults_to_deeper_networks():
    cfg = config.loads("[game]\nname = leduc\n")
    assert cfg.train.policy_hidden == cfg.train.critic_hidden == (128, 128, 128)
    cfg = config.loads("[game]\nname = leduc\n[train]\npolicy_hidden = 32\n")
    assert cfg.train.policy_hidden == (32,)


def test_baseline_has_one_signal():
    assert config.loads("[run]\nalgorithm = masac-baseline\n").n_signals == 1
    with pytest.raises(ConfigError):
        config.loads("[run]\nalgorithm = masac-baseline\nsignals = 2\n")


@pytest.mark.parametrize("text,line", [
    ("[run]\nsignals = 0\n", 2),
    ("[run]\nseed = 1\n\n[train]\nalpha = -1\n", 5),
    ("[train]\nbatch_size = 127\n", 2),
    ("[train]\nepisodes = lots\n", 2),
    ("[train]\nnot_a_key = 1\n", 2),
    ("[game]\nname = chess\n", 2),
    ("[nonsense]\nx = 1\n", 1),
    ("[game]\nname = coordination\npayoff_left = 0\n", 1),
])
def test_errors_point_at_the_line(tmp_path, text, line):
    p = write(tmp_path, text)
    with pytest.raises(ConfigError) as e:
        config.load(p)
    assert e.value.line == line
    assert f"{p}:{line}:" in str(e.value)


def _configs():
    sig = st.integers(1, 4)
    return st.builds(
        lambda alg, s, seed, k, game, left, right, ranks, raises, hidden, alpha, target, eps:
        RunConfig(
            run=RunSection(alg, 1 if alg == "masac-baseline" else s, seed, f"runs/x{seed}", 5),
            game=game,
            # only the active game's section is written out
            coordination=CoordinationGameSpec(left, right) if game == "coordination" else CoordinationGameSpec(),
            leduc=LeducSpec(ranks=ranks, max_raises_per_round=raises) if game == "leduc" else LeducSpec(),
            train=TrainConfig(batch_size=(1 if alg == "masac-baseline" else s) * k, alpha=alpha,
                              policy_hidden=hidden, critic_hidden=hidden[::-1],
                              target_payoff=target, episodes=eps)),
        st.sampled_from(["stac", "masac-baseline", "random"]), sig, st.integers(0, 2**31),
        st.integers(1, 64), st.sampled_from(["coordination", "leduc"]),
        st.floats(0.01, 1e4), st.floats(0.01, 1e4), st.integers(2, 3), st.integers(1, 2),
        st.lists(st.integers(1, 256), min_size=1, max_size=3).map(tuple),
        st.floats(1e-4, 10.0), st.none() | st.floats(-100, 100), st.integers(0, 10**6))


@settings(max_examples=60, suppress_health_check=[HealthCheck.too_slow])
@given(cfg=_configs())
def test_config_round_trip(cfg):
    back = config.loads(config.dumps(cfg))
    assert back == cfg


# -- commands -------------------------------------------------------------------------


def test_oracle_then_eval(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = coordination\n")
    code, out, _ = run(capsys, "oracle", "--config", cfg, "--out", tmp_path / "tmecor")
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert lines[0]["value"] == pytest.approx(50.0, abs=1e-6)
    assert sorted(round(x["probability"], 9) for x in lines[1:]) == [0.5, 0.5]
    code, out, _ = run(capsys, "eval", "--checkpoint", tmp_path / "tmecor", "--config", cfg)
    rep = json.loads(out)
    assert code == 0 and rep["worst_case_team_payoff"] == pytest.approx(50.0, abs=1e-9)
    assert abs(rep["exploitability"]) < 1e-6
    assert json.loads((tmp_path / "tmecor" / "eval.json").read_text()) == rep


def test_imbalanced_oracle(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = coordination\npayoff_left = 50\npayoff_right = 100\n")
    code, out, _ = run(capsys, "oracle", "--config", cfg)
    lines = [json.loads(x) for x in out.splitlines()]
    assert lines[0]["value"] == pytest.approx(100 / 3, abs=1e-6)
    probs = {x["team1"]["TEAM1|"]: x["probability"] for x in lines[1:]}
    assert probs[0] == pytest.approx(2 / 3, abs=1e-6)


def test_fresh_checkpoint_is_near_quarter_k(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "fresh"
    code, _, _ = run(capsys, "train", "--config", cfg, "--out", out, "--limit-episodes", 0)
    assert code == 0 and (out / "config.ini").exists()
    code, text, _ = run(capsys, "eval", "--checkpoint", out / "checkpoint")
    assert code == 0
    assert json.loads(text)["worst_case_team_payoff"] == pytest.approx(25.0, abs=0.5)


def test_train_writes_run_directory_and_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    for name in ("a", "b"):
        assert run(capsys, "train", "--config", cfg, "--out", tmp_path / name, "--seed", 7)[0] == 0
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    recs = [json.loads(x) for x in a.decode().splitlines()]
    assert [r["episodes"] for r in recs] == [112, 208, 304, 400]
    assert {"iteration", "episodes", "worst_case", "entropy", "losses"} <= set(recs[0])
    assert len(recs[0]["entropy"]) == 2
    assert (tmp_path / "a" / "checkpoint" / "manifest.json").exists()
    assert config.load(tmp_path / "a" / "config.ini").train.seed == 7


def test_random_algorithm_logs_quarter_k(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\nalgorithm = random\n[train]\nepisodes = 3000\n")
    assert run(capsys, "train", "--config", cfg, "--out", tmp_path / "r")[0] == 0
    recs = [json.loads(x) for x in (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()]
    assert len(recs) == 3 and all(r["worst_case"] == pytest.approx(25.0) for r in recs)
    code, text, _ = run(capsys, "eval", "--checkpoint", tmp_path / "r" / "checkpoint")
    assert json.loads(text)["worst_case_team_payoff"] == pytest.approx(25.0)


def test_leduc_train_uses_deep_networks(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = leduc\n[train]\neval_every = 100000\n")
    out = tmp_path / "leduc"
    assert run(capsys, "train", "--config", cfg, "--out", out, "--limit-episodes", 16)[0] == 0
    meta = json.loads((out / "checkpoint" / "manifest.json").read_text())["meta"]
    assert meta["train"]["policy_hidden"] == [128, 128, 128]
    shapes = {a["name"]: a["shape"] for a in
              json.loads((out / "checkpoint" / "manifest.json").read_text())["arrays"]}
    # one weight generator per target layer: 3 hidden + output
    assert sum(k.startswith("team.policy.wgen") for k in shapes) == 4


def test_bad_config_exits_2_before_training(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\nsignals = 0\n", "bad.ini")
    code, _, err = run(capsys, "train", "--config", cfg, "--out", tmp_path / "never")
    assert code == 2 and "bad.ini:2" in err
    assert not (tmp_path / "never").exists()


def test_mismatched_checkpoint_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = coordination\n")
    run(capsys, "oracle", "--config", cfg, "--out", tmp_path / "ck")
    leduc = write(tmp_path, "[game]\nname = leduc\n", "leduc.ini")
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "ck", "--config", leduc)
    assert code == 2 and "game" in err


def test_missing_checkpoint_is_a_runtime_error(tmp_path, capsys):
    cfg = write(tmp_path, "")
    code, _, _ = run(capsys, "eval", "--checkpoint", tmp_path / "nope", "--config", cfg)
    assert code == 3


def test_oracle_on_leduc_is_too_large(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = leduc\nranks = 2\nsuits = 2\nmax_raises_per_round = 1\n")
    code, _, err = run(capsys, "oracle", "--config", cfg)
    assert code == 3 and "plans" in err


def test_negative_limit_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert run(capsys, "train", "--config", cfg, "--limit-episodes", -1)[0] == 2


def test_dump_game(tmp_path, capsys):
    cfg = write(tmp_path, "[game]\nname = coordination\npayoff_left = 100\npayoff_right = 50\n")
    code, out, _ = run(capsys, "dump-game", "--config", cfg)
    lines = out.splitlines()
    assert code == 0 and len(lines) == 9
    assert lines[1].startswith("A:left T1:l T2:L ; 1.0 ; TEAM=100")
    run(capsys, "dump-game", "--config", cfg, "--out", tmp_path / "dump.txt")
    assert (tmp_path / "dump.txt").read_text() == out


def test_plot_csv_round_trip(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    runs = []
    for name, alg in (("stac", "stac"), ("base", "masac-baseline")):
        text = SMALL.replace("algorithm = stac\nsignals = 2", f"algorithm = {alg}\n"
                             + ("signals = 2" if alg == "stac" else "signals = 1"))
        c = write(tmp_path, text, f"{name}.ini")
        run(capsys, "train", "--config", c, "--out", tmp_path / name)
        runs.append(tmp_path / name)
    code, out, _ = run(capsys, "plot", *runs, "--out", tmp_path / "fig" / "curves")
    assert code == 0
    png, csv_path = (Path(x) for x in out.split())
    assert png.stat().st_size > 0
    series = read_plot_csv(csv_path)
    assert set(series) == {"stac", "base"}
    for r in runs:
        recs = [json.loads(x) for x in (r / "metrics.jsonl").read_text().splitlines()]
        assert series[r.name] == [(m["episodes"], m["worst_case"]) for m in recs]
    with open(csv_path) as f:
        assert {float(row["optimal"]) for row in csv.DictReader(f)} == {50.0}


def test_plot_without_runs_is_usage_error(tmp_path, capsys):
    assert run(capsys, "plot", "--out", tmp_path / "x")[0] == 2
    assert run(capsys, "plot", tmp_path)[0] == 2


def test_log_level_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("STAC_LOG_LEVEL", "debug")
    cfg = write(tmp_path, "")
    assert run(capsys, "oracle", "--config", cfg)[0] == 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "stac", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "dump-game" in r.stdout
