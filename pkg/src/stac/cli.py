"""Command line front end: train, eval, oracle, plot, dump-game.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.
Log verbosity comes from the STAC_LOG_LEVEL environment variable.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from stac import config as config_mod
from stac.conditioning import SignalScheme
from stac.config import ConfigError, RunConfig
from stac.efg import GameError, Role, dump_game
from stac.eval import (GameTooLarge, TeamProfile, adversary_table, cached_tree, evaluate,
                       role_rows, tmecor_oracle, uniform_team_profile)
from stac.lp import LpFailure
from stac.nn.autodiff import ShapeMismatch
from stac.nn.checkpoint import load_checkpoint, save_checkpoint
from stac.train.loop import StacAgents, TrainConfig, extract_profile, adversary_policy_table, train

log = logging.getLogger("stac")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
TABULAR_KIND = "tabular-team-profile"


class CheckpointMismatch(ConfigError):
    pass


class UsageError(ConfigError):
    pass


# -- checkpoints ------------------------------------------------------------------


def save_tabular(directory, prof: TeamProfile, tree, adv: np.ndarray | None = None,
                 extra: dict | None = None) -> Path:
    """Write a team profile (and optionally an adversary table) as a checkpoint."""
    arrays = {"team.tables": prof.tables, "team.signal_dist": prof.signal_dist}
    meta = {"kind": TABULAR_KIND, "game": tree.game.name, "keys": list(prof.keys),
            "num_actions": tree.game.num_actions, **(extra or {})}
    if adv is not None:
        rows = role_rows(tree, Role.ADVERSARY)
        arrays["adversary.table"] = adv[rows]
        meta["adversary_keys"] = [tree.infosets[i].key for i in rows]
    return save_checkpoint(directory, arrays, meta)


def _train_config(d: dict) -> TrainConfig:
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in known}
    return TrainConfig(**kw)


def load_profile(directory, tree) -> tuple[TeamProfile, np.ndarray | None, dict]:
    """Team profile and adversary table from either checkpoint kind."""
    arrays, meta = load_checkpoint(directory)
    game = tree.game
    if meta.get("game") != game.name:
        raise CheckpointMismatch(f"checkpoint is for game {meta.get('game')!r}, config builds {game.name!r}")
    kind = meta.get("kind")
    if kind == TABULAR_KIND:
        keys = meta["keys"]
        missing = [k for k in keys if k not in tree.by_key]
        tables = arrays["team.tables"]
        if missing or tables.shape[2] != game.num_actions:
            raise CheckpointMismatch(f"checkpoint infostates do not match the game ({len(missing)} unknown)")
        prof = TeamProfile(keys, tables, arrays["team.signal_dist"])
        adv = None
        if "adversary.table" in arrays:
            adv = adversary_table(tree, dict(zip(meta["adversary_keys"], arrays["adversary.table"])))
        return prof, adv, meta
    if kind == "stac-agents":
        for k in ("info_vector_size", "team_vector_size", "num_actions"):
            if meta[k] != getattr(game, k):
                raise CheckpointMismatch(f"checkpoint {k} = {meta[k]}, game has {getattr(game, k)}")
        cfg = _train_config(meta["train"])
        agents = StacAgents(game, SignalScheme(meta["n_signals"]), cfg, np.random.default_rng(0))
        try:
            agents.load_arrays(arrays)
        except (KeyError, ValueError) as e:
            raise CheckpointMismatch(f"checkpoint parameters do not fit: {e}") from None
        return extract_profile(agents, tree), adversary_policy_table(agents, tree), meta
    raise CheckpointMismatch(f"unknown checkpoint kind {kind!r}")


# -- commands ---------------------------------------------------------------------


def _load_config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = config_mod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
        cfg.train.seed = args.seed
    else:
        cfg.train.seed = cfg.run.seed
    if getattr(args, "out", None):
        cfg.run.out = args.out
    if getattr(args, "limit_episodes", None) is not None:
        if args.limit_episodes < 0:
            raise UsageError("--limit-episodes must be >= 0")
        cfg.train.episodes = min(cfg.train.episodes, args.limit_episodes)
    return cfg


def _random_run(cfg: RunConfig, game, out: Path) -> None:
    """Uniform team: constant metrics at the training cadence, tabular checkpoint."""
    tree = cached_tree(game)
    prof = uniform_team_profile(tree, 1)
    adv = tree.uniform_policy()
    rep = evaluate(tree, prof, adv)
    n = cfg.train.episodes // cfg.train.eval_every if cfg.train.episodes else 0
    with open(out / "metrics.jsonl", "w") as f:
        for i in range(1, n + 1):
            rec = {"iteration": i, "episodes": i * cfg.train.eval_every,
                   "worst_case": rep.worst_case_team_payoff, "team_value": rep.team_value,
                   "e_A": rep.e_A, "e_T": rep.e_T, "exploitability": rep.exploitability,
                   "entropy": [], "alpha": None, "losses": {}}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    save_tabular(out / "checkpoint", prof, tree, adv)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    config_mod.save(cfg, out / "config.ini")
    game = cfg.build_game()
    if cfg.run.algorithm == "random":
        _random_run(cfg, game, out)
    else:
        res = train(game, cfg.train, SignalScheme(cfg.n_signals), out_dir=out,
                    checkpoint_every=cfg.run.checkpoint_every or None)
        if res.metrics:
            log.info("final worst-case payoff %.4f", res.metrics[-1]["worst_case"])
    print(out)
    return EXIT_OK


def _config_for_checkpoint(args) -> RunConfig:
    if args.config:
        return config_mod.load(args.config)
    guess = Path(args.checkpoint).parent / "config.ini"
    if guess.exists():
        return config_mod.load(guess)
    raise UsageError("--config is required when the checkpoint has no run directory config")


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    cfg = _config_for_checkpoint(args)
    tree = cached_tree(cfg.build_game())
    prof, adv, _ = load_profile(args.checkpoint, tree)
    rep = evaluate(tree, prof, adv if adv is not None else tree.uniform_policy())
    text = rep.to_json()
    print(text)
    dest = Path(args.out) if args.out else Path(args.checkpoint) / "eval.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(text + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    tree = cached_tree(cfg.build_game())
    res = tmecor_oracle(tree)
    print(json.dumps({"value": res.value}))
    for x, (p1, p2) in res.support():
        print(json.dumps({"probability": x, "team1": p1, "team2": p2}, sort_keys=True))
    if args.out:
        prof = res.team_profile(tree)
        save_tabular(args.out, prof, tree, res.adversary_policy, {"oracle_value": res.value})
    return EXIT_OK


def _read_metrics(run: Path) -> list[dict]:
    path = run / "metrics.jsonl"
    if not path.exists():
        raise UsageError(f"{run} has no metrics.jsonl")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def plot_runs(runs: list[Path], out: Path) -> tuple[Path, Path]:
    """Worst-case payoff against episodes, one curve per run, plus the oracle value."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not runs:
        raise UsageError("plot needs at least one run directory")
    series = [(r, _read_metrics(r)) for r in runs]
    optimal = None
    cfg_path = runs[0] / "config.ini"
    if cfg_path.exists():
        try:
            optimal = float(tmecor_oracle(cached_tree(config_mod.load(cfg_path).build_game())).value)
        except GameTooLarge:
            optimal = None
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, png_path = out.with_suffix(".csv"), out.with_suffix(".png")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "iteration", "episodes", "worst_case", "optimal"])
        for r, recs in series:
            for m in recs:
                w.writerow([r.name, m["iteration"], m["episodes"], repr(float(m["worst_case"])),
                            "" if optimal is None else repr(optimal)])
    fig, ax = plt.subplots(figsize=(6, 4))
    for r, recs in series:
        ax.plot([m["episodes"] for m in recs], [m["worst_case"] for m in recs], label=r.name)
    if optimal is not None:
        ax.axhline(optimal, color="red", lw=1.2, label="optimal (oracle)")
    ax.set_xlabel("episodes")
    ax.set_ylabel("worst-case team payoff")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path, csv_path


def read_plot_csv(path) -> dict[str, list[tuple[int, float]]]:
    out: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.setdefault(row["run"], []).append((int(row["episodes"]), float(row["worst_case"])))
    return out


def cmd_plot(args) -> int:
    png, csv_path = plot_runs([Path(r) for r in args.runs], Path(args.out or "worst_case"))
    print(png)
    print(csv_path)
    return EXIT_OK


def cmd_dump_game(args) -> int:
    cfg = _load_config(args)
    text = dump_game(cfg.build_game())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a team and write metrics and checkpoints")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--limit-episodes", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="exact evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", help="solve for the optimal correlated team strategy")
    o.add_argument("--config", required=True)
    o.add_argument("--out", help="write the solution as a tabular checkpoint")
    o.set_defaults(func=cmd_oracle)

    pl = sub.add_parser("plot", help="worst-case payoff curves as PNG and CSV")
    pl.add_argument("runs", nargs="*")
    pl.add_argument("--out", help="output path without extension")
    pl.set_defaults(func=cmd_plot)

    d = sub.add_parser("dump-game", help="one line per terminal history")
    d.add_argument("--config", required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_dump_game)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("STAC_LOG_LEVEL", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (GameError, LpFailure, ShapeMismatch, OSError, ValueError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
