"""Seed sweeps over a run config and the statistics used to judge them.

Shared by the acceptance tests and scripts/sweep.py so both read results the
same way.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stac.conditioning import SignalScheme
from stac.config import RunConfig
from stac.eval import TeamProfile, cached_tree, evaluate, uniform_team_profile
from stac.train.loop import extract_profile, train


@dataclass
class SeedRun:
    seed: int
    metrics: list[dict]
    profile: TeamProfile | None = None
    wall: float = 0.0
    extract_wall: float = 0.0
    eval_walls: list[float] = field(default_factory=list)

    @property
    def worst_case(self) -> list[float]:
        return [m["worst_case"] for m in self.metrics]

    @property
    def episodes(self) -> list[int]:
        return [m["episodes"] for m in self.metrics]


def run_seed(cfg: RunConfig, seed: int, out: str | Path | None = None, time_evals: bool = False,
             **train_overrides) -> SeedRun:
    """Train one seed in-process; `train_overrides` patch the [train] section."""
    game = cfg.build_game()
    tcfg = dataclasses.replace(cfg.train, seed=seed, **train_overrides)
    walls: list[float] = []

    def timed(tree, prof, adv):
        t = time.perf_counter()
        rep = evaluate(tree, prof, adv)
        walls.append(time.perf_counter() - t)
        return rep

    t0 = time.perf_counter()
    if cfg.run.algorithm == "random":
        tree = cached_tree(game)
        rep = evaluate(tree, uniform_team_profile(tree, 1), tree.uniform_policy())
        n = tcfg.episodes // tcfg.eval_every
        recs = [{"episodes": (i + 1) * tcfg.eval_every, "worst_case": rep.worst_case_team_payoff}
                for i in range(n)]
        return SeedRun(seed, recs, uniform_team_profile(tree, 1), time.perf_counter() - t0)
    res = train(game, tcfg, SignalScheme(cfg.n_signals), out_dir=out,
                evaluate_fn=timed if time_evals else None)
    t = time.perf_counter()
    prof = extract_profile(res.agents, cached_tree(game, keep_histories=True))
    extract = time.perf_counter() - t
    return SeedRun(seed, res.metrics, prof, time.perf_counter() - t0, extract, walls)


def run_seeds(cfg: RunConfig, seeds, **kw) -> list[SeedRun]:
    return [run_seed(cfg, s, **kw) for s in seeds]


# -- statistics -----------------------------------------------------------------------


def first_reaching(run: SeedRun, threshold: float) -> int | None:
    """Episode count of the first evaluation at or above `threshold`."""
    for ep, v in zip(run.episodes, run.worst_case):
        if v >= threshold:
            return ep
    return None


def longest_streak_above(values, threshold: float) -> int:
    best = cur = 0
    for v in values:
        cur = cur + 1 if v > threshold else 0
        best = max(best, cur)
    return best


def moving_average(values, k: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if len(v) < k:
        return np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(v)])
    return (c[k:] - c[:-k]) / k


def is_nondecreasing(values, tol: float = 0.0) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) >= -tol))


def coordination_plans(prof: TeamProfile) -> list[tuple[int, int]]:
    """Most likely (T1, T2) action per signal in a coordination-game profile.

    The coordination game has exactly one infoset per member, T1's first.
    """
    t1 = [k for k in prof.keys if k.startswith("TEAM1")]
    t2 = [k for k in prof.keys if k.startswith("TEAM2")]
    if len(t1) != 1 or len(t2) != 1:
        raise ValueError("expected one infoset per team member")
    i1, i2 = prof.keys.index(t1[0]), prof.keys.index(t2[0])
    return [(int(np.argmax(prof.tables[s, i1])), int(np.argmax(prof.tables[s, i2])))
            for s in range(prof.n_signals)]
