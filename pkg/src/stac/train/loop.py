"""The STAC training loop: signal-conditioned rollouts, balanced replay, SAC updates."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import IO, Callable

import numpy as np

from stac.conditioning import SignalScheme
from stac.efg import Game, Role
from stac.eval import GameTooLarge, TeamProfile, cached_tree, evaluate, role_rows
from stac.nn.checkpoint import save_checkpoint
from stac.train.replay import ReplayBuffer
from stac.train.rollout import TreeRollout, team_observation
from stac.train.sac import SacLearner

log = logging.getLogger(__name__)

ADVERSARY_LEARNERS = ("sac", "uniform")


@dataclass
class TrainConfig:
    episodes: int = 200_000
    episodes_per_iteration: int = 1
    gradient_steps_per_iteration: int = 1
    batch_size: int = 128
    lr_policy: float = 1e-2
    lr_q: float = 5e-4
    lr_value: float = 5e-4
    alpha: float = 1.0
    alpha_final: float = 0.05
    alpha_decay_episodes: int = 0
    adversary_alpha: float = 1.0
    tau: float = 0.005
    gamma: float = 1.0
    reward_scale: float = 1.0
    buffer_capacity: int = 100_000
    eval_every: int = 1000
    policy_hidden: tuple[int, ...] = (64,)
    critic_hidden: tuple[int, ...] = (64,)
    adversary: str = "sac"
    learn_signal_encodings: bool = False  # train the team's encodings instead of fixed one-hots
    target_payoff: float | None = None  # stop once an evaluation reaches it
    seed: int = 0

    def validate(self, n_signals: int) -> None:
        for f in ("lr_policy", "lr_q", "lr_value", "alpha", "alpha_final", "adversary_alpha",
                  "tau", "reward_scale"):
            if not getattr(self, f) > 0:
                raise ValueError(f"{f} must be > 0")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        for f in ("episodes_per_iteration", "gradient_steps_per_iteration",
                  "batch_size", "buffer_capacity", "eval_every"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.batch_size % n_signals:
            raise ValueError(f"batch_size {self.batch_size} not divisible by {n_signals} signals")
        if self.adversary not in ADVERSARY_LEARNERS:
            raise ValueError(f"adversary must be one of {ADVERSARY_LEARNERS}")

    def alpha_at(self, episodes: int) -> float:
        if self.alpha_decay_episodes <= 0:
            return self.alpha
        frac = min(1.0, episodes / self.alpha_decay_episodes)
        return self.alpha + frac * (self.alpha_final - self.alpha)


class StacAgents:
    """Team learner with a shared signal-conditioned actor, plus the adversary.

    The team actor reads one member's observation and role indicator; the
    team critics read the joint team state. The adversary is an independent
    single-signal SAC learner on its own observations.
    """

    def __init__(self, game: Game, scheme: SignalScheme, cfg: TrainConfig, rng: np.random.Generator):
        self.game = game
        self.scheme = scheme
        self.cfg = cfg
        self.team = SacLearner(
            game.info_vector_size + 2, game.team_vector_size, game.num_actions, scheme, rng,
            cfg.policy_hidden, cfg.critic_hidden, cfg.lr_policy, cfg.lr_q, cfg.lr_value,
            cfg.alpha, cfg.tau, cfg.gamma, learn_encodings=cfg.learn_signal_encodings)
        self.adversary = None
        if cfg.adversary == "sac":
            self.adversary = SacLearner(
                game.info_vector_size, game.info_vector_size, game.num_actions, SignalScheme(1),
                rng, cfg.policy_hidden, cfg.critic_hidden, cfg.lr_policy, cfg.lr_q,
                cfg.lr_value, cfg.adversary_alpha, cfg.tau, cfg.gamma)

    def team_obs(self, h, role: Role) -> np.ndarray:
        return team_observation(self.game, h, role)

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = self.team.named_arrays("team")
        out["team.signal_encodings"] = np.array(self.scheme.encodings)
        if self.adversary is not None:
            out.update(self.adversary.named_arrays("adversary"))
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        enc = arrays.get("team.signal_encodings")
        if enc is not None and not np.array_equal(enc, self.scheme.encodings):
            raise ValueError("checkpoint signal encodings differ from this scheme's")
        self.team.load_arrays(arrays, "team")
        if self.adversary is not None:
            self.adversary.load_arrays(arrays, "adversary")


# -- profiles and evaluation ----------------------------------------------------------


_OBS_CACHE: dict = {}


def _team_inputs(agents: StacAgents, tree):
    key = id(tree)
    hit = _OBS_CACHE.get(key)
    if hit is None or hit[0] is not tree:
        rows = np.concatenate([role_rows(tree, Role.TEAM1), role_rows(tree, Role.TEAM2)])
        obs = np.stack([agents.team_obs(tree.infosets[i].history, tree.infosets[i].owner)
                        for i in rows])
        mask = np.zeros((len(rows), tree.game.num_actions), dtype=bool)
        for r, i in enumerate(rows):
            mask[r, list(tree.infosets[i].legal)] = True
        hit = _OBS_CACHE[key] = (tree, rows, obs, mask)
    return hit[1:]


def extract_profile(agents: StacAgents, tree, max_infosets: int = 200_000) -> TeamProfile:
    """Exact network outputs at every team infostate, one table per signal."""
    rows, obs, mask = _team_inputs(agents, tree)
    if len(rows) > max_infosets:
        raise GameTooLarge(f"{len(rows)} team infostates exceed {max_infosets}")
    tabs = np.stack([agents.team.policy_table(s, obs, mask) for s in range(agents.scheme.n_signals)])
    keys = [tree.infosets[i].key for i in rows]
    return TeamProfile(keys, tabs, agents.scheme.distribution.copy())


def adversary_policy_table(agents: StacAgents, tree) -> np.ndarray:
    table = tree.uniform_policy()
    if agents.adversary is None:
        return table
    rows = role_rows(tree, Role.ADVERSARY)
    obs = np.stack([tree.game.info_vector(tree.infosets[i].history, Role.ADVERSARY) for i in rows])
    mask = np.zeros((len(rows), tree.game.num_actions), dtype=bool)
    for r, i in enumerate(rows):
        mask[r, list(tree.infosets[i].legal)] = True
    table[rows] = agents.adversary.policy_table(0, obs, mask)
    return table


def policy_entropy(prof: TeamProfile) -> list[float]:
    p = prof.tables
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=2)
    return [float(x) for x in h.mean(axis=1)]


def _team_table(agents: StacAgents, sampler: TreeRollout) -> np.ndarray:
    return np.stack([agents.team.policy_table(s, sampler.team_obs, sampler.team_mask)
                     for s in range(agents.scheme.n_signals)])


def _adversary_table(agents: StacAgents, sampler: TreeRollout) -> np.ndarray | None:
    if agents.adversary is None:
        return None
    return agents.adversary.policy_table(0, sampler.adv_obs, sampler.adv_mask)


# -- training ---------------------------------------------------------------------


@dataclass
class TrainResult:
    agents: StacAgents
    metrics: list[dict] = field(default_factory=list)
    episodes: int = 0


def _round(x):
    return None if x is None else float(x)


def train(game: Game, cfg: TrainConfig, scheme: SignalScheme, out_dir: str | Path | None = None,
          metrics_stream: IO[str] | None = None, evaluate_fn: Callable | None = None,
          checkpoint_every: int | None = None) -> TrainResult:
    """Run the STAC loop and emit one metrics record per evaluation.

    Metrics carry only deterministic quantities, so identical config and seed
    give byte-identical logs.
    """
    cfg.validate(scheme.n_signals)
    rng = np.random.default_rng(cfg.seed)
    agents = StacAgents(game, scheme, cfg, rng)
    tree = cached_tree(game, keep_histories=True)
    sampler = TreeRollout(tree)
    team_buf = ReplayBuffer(scheme.n_signals, cfg.buffer_capacity)
    adv_buf = ReplayBuffer(1, cfg.buffer_capacity)
    result = TrainResult(agents)
    out = Path(out_dir) if out_dir is not None else None
    own_stream = None
    if metrics_stream is None and out is not None:
        out.mkdir(parents=True, exist_ok=True)
        own_stream = metrics_stream = open(out / "metrics.jsonl", "w")
    losses: dict[str, list[float]] = {}
    episodes = iteration = 0
    next_eval = cfg.eval_every
    try:
        while episodes < cfg.episodes:
            iteration += 1
            n = min(cfg.episodes_per_iteration, cfg.episodes - episodes)
            batch = sampler.run(n, rng, scheme, _team_table(agents, sampler),
                                _adversary_table(agents, sampler), cfg.reward_scale)
            team_buf.add_arrays(batch.team, batch.team_bounds)
            adv_buf.add_arrays(batch.adversary, batch.adversary_bounds)
            episodes += n
            alpha = cfg.alpha_at(episodes)
            agents.team.alpha = alpha
            for _ in range(cfg.gradient_steps_per_iteration):
                if team_buf.can_sample(cfg.batch_size):
                    batch = team_buf.sample_balanced_batch(cfg.batch_size, rng)
                    for k, v in agents.team.update(batch).items():
                        losses.setdefault(f"team_{k}", []).append(v)
                if agents.adversary is not None and adv_buf.can_sample(cfg.batch_size):
                    batch = adv_buf.sample_balanced_batch(cfg.batch_size, rng)
                    for k, v in agents.adversary.update(batch).items():
                        losses.setdefault(f"adv_{k}", []).append(v)
            if episodes >= next_eval or episodes >= cfg.episodes:
                next_eval += cfg.eval_every
                prof = extract_profile(agents, tree)
                adv = adversary_policy_table(agents, tree)
                rep = (evaluate_fn or evaluate)(tree, prof, adv)
                rec = {
                    "iteration": iteration,
                    "episodes": episodes,
                    "worst_case": _round(rep.worst_case_team_payoff),
                    "team_value": _round(rep.team_value),
                    "e_A": _round(rep.e_A),
                    "e_T": _round(rep.e_T),
                    "exploitability": _round(rep.exploitability),
                    "entropy": policy_entropy(prof),
                    "alpha": alpha,
                    "losses": {k: float(np.mean(v)) for k, v in sorted(losses.items())},
                }
                losses = {}
                result.metrics.append(rec)
                if metrics_stream is not None:
                    metrics_stream.write(json.dumps(rec, sort_keys=True) + "\n")
                    metrics_stream.flush()
                log.info("ep %d worst-case %.4f entropy %s", episodes, rec["worst_case"],
                         ["%.3f" % e for e in rec["entropy"]])
                if out is not None and checkpoint_every and len(result.metrics) % checkpoint_every == 0:
                    save_agents(agents, out / "checkpoint", episodes)
                if cfg.target_payoff is not None and rec["worst_case"] >= cfg.target_payoff:
                    break
    finally:
        if own_stream is not None:
            own_stream.close()
    result.episodes = episodes
    if out is not None:
        save_agents(agents, out / "checkpoint", episodes)
    return result


def save_agents(agents: StacAgents, directory: str | Path, episodes: int = 0) -> Path:
    cfg = {f.name: getattr(agents.cfg, f.name) for f in fields(agents.cfg)}
    meta = {"kind": "stac-agents", "n_signals": agents.scheme.n_signals, "episodes": episodes,
            "game": agents.game.name, "info_vector_size": agents.game.info_vector_size,
            "team_vector_size": agents.game.team_vector_size,
            "num_actions": agents.game.num_actions, "train": cfg}
    return save_checkpoint(directory, agents.named_arrays(), meta)
