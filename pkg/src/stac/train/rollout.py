"""Episode generation for the team and adversary learners.

`rollout_episode` plays one episode through the `Game` interface and is the
reference. `TreeRollout` samples many episodes at once by walking the
compiled tree with per-infostate policy tables; it draws from the same
distribution and is what the training loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stac.conditioning import SignalScheme
from stac.efg import CompiledTree, Game, IncompletePolicy, Role
from stac.train.replay import SarsasRecord


def role_indicator(role: Role) -> np.ndarray:
    v = np.zeros(2)
    v[int(role)] = 1.0
    return v


def team_observation(game: Game, h, role: Role) -> np.ndarray:
    """Actor input of a team member: its own infostate vector plus a role one-hot."""
    return np.concatenate([game.info_vector(h, role), role_indicator(role)])


@dataclass
class Episode:
    signal: int
    team: list[SarsasRecord]
    adversary: list[SarsasRecord]
    team_value: float


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(p) - 1))


def _chain(decisions, terminal_vec, terminal_key, reward: float, signal: int) -> list[SarsasRecord]:
    out = []
    for i, (key, state, obs, mask, a, role) in enumerate(decisions):
        last = i == len(decisions) - 1
        nxt = decisions[i + 1] if not last else None
        out.append(SarsasRecord(
            state_key=key, state=state, obs=obs, mask=mask, action=a,
            reward=reward if last else 0.0,
            next_state_key=terminal_key if last else nxt[0],
            next_state=terminal_vec if last else nxt[1],
            next_obs=terminal_vec if last else nxt[2],
            done=last, signal=signal, member=role))
    return out


def rollout_episode(game: Game, agents, scheme: SignalScheme, rng: np.random.Generator,
                    reward_scale: float = 1.0) -> Episode:
    """Play one episode; the signal is drawn once and held for the whole trajectory.

    Records are kept per learner decision: the team's carry the team state
    for the critic and the member's own observation for the actor.
    """
    signal = scheme.draw(rng)
    h = game.root()
    team_dec, adv_dec = [], []
    while not h.terminal:
        role = game.current_player(h)
        if role == Role.CHANCE:
            outs = game.chance_outcomes(h)
            a = outs[_sample(np.array([p for _, p in outs]), rng)][0]
        elif role.is_team:
            info = game.info_state(h, role)
            obs = team_observation(game, h, role)
            mask = game.mask(h)
            p = agents.team.action_probs(signal, obs, mask, key=info.key)
            a = _sample(p, rng)
            team_dec.append((game.team_state(h).key, game.team_vector(h), obs, mask, a, role))
        elif role == Role.ADVERSARY:
            info = game.info_state(h, role)
            mask = game.mask(h)
            if agents.adversary is None:
                p = mask / mask.sum()
                obs = None
            else:
                obs = game.info_vector(h, role)
                p = agents.adversary.action_probs(0, obs, mask, key=info.key)
            a = _sample(p, rng)
            if obs is not None:
                adv_dec.append((info.key, obs, obs, mask, a, role))
        else:
            raise IncompletePolicy(f"no policy for {role!r}")
        h = game.apply(h, a)
    value = game.team_value(h)
    end_team = np.zeros(game.team_vector_size)
    end_adv = np.zeros(game.info_vector_size)
    team = _chain(team_dec, end_team, "terminal", value * reward_scale, signal)
    adv = _chain(adv_dec, end_adv, "terminal", -value * reward_scale, 0)
    return Episode(signal, team, adv, value)


@dataclass
class RolloutBatch:
    signals: np.ndarray
    leaves: np.ndarray  # terminal node reached by each episode
    team_values: np.ndarray
    team: dict[str, np.ndarray]
    team_bounds: np.ndarray  # trajectory i spans rows bounds[i]:bounds[i+1]
    adversary: dict[str, np.ndarray]
    adversary_bounds: np.ndarray


class TreeRollout:
    """Vectorized sampler of whole episodes over a compiled tree.

    Needs a tree compiled with `keep_histories=True` so the team state vector
    of every team decision node can be precomputed.
    """

    def __init__(self, tree: CompiledTree):
        if tree.histories is None:
            raise ValueError("tree was compiled without histories")
        game = tree.game
        self.tree = tree
        self.game = game
        par = tree.parent[1:]
        if np.any(np.diff(par) < 0):
            raise ValueError("children are not contiguous; expected breadth-first order")
        n = tree.n_nodes
        self.n_children = np.bincount(par, minlength=n)
        first = np.searchsorted(par, np.arange(n)) + 1
        width = max(int(self.n_children.max()), 1)
        slot = np.arange(width)
        self.valid = slot[None, :] < self.n_children[:, None]
        self.children = np.where(self.valid, first[:, None] + slot[None, :], 0)

        n_sets = len(tree.infosets)
        self.team_rows = np.array([s.index for s in tree.infosets if s.owner.is_team], dtype=int)
        self.adv_rows = np.array([s.index for s in tree.infosets if s.owner == Role.ADVERSARY], dtype=int)
        self.row_of = np.full(n_sets, -1)
        self.row_of[self.team_rows] = np.arange(len(self.team_rows))
        self.row_of[self.adv_rows] = np.arange(len(self.adv_rows))
        self.legal = np.zeros((n_sets, game.num_actions), dtype=bool)
        for s in tree.infosets:
            self.legal[s.index, list(s.legal)] = True
        self.team_obs = np.stack([team_observation(game, tree.infosets[i].history, tree.infosets[i].owner)
                                  for i in self.team_rows]) if len(self.team_rows) else \
            np.zeros((0, game.info_vector_size + 2))
        self.adv_obs = np.stack([game.info_vector(tree.infosets[i].history, Role.ADVERSARY)
                                 for i in self.adv_rows]) if len(self.adv_rows) else \
            np.zeros((0, game.info_vector_size))
        self.team_mask = self.legal[self.team_rows]
        self.adv_mask = self.legal[self.adv_rows]

        team_nodes = np.flatnonzero((tree.player == Role.TEAM1) | (tree.player == Role.TEAM2))
        self.node_row = np.full(n, -1)
        self.node_row[team_nodes] = np.arange(len(team_nodes))
        self.team_state = np.zeros((len(team_nodes), game.team_vector_size))
        for r, i in enumerate(team_nodes):
            self.team_state[r] = game.team_vector(tree.histories[i])

    def run(self, n: int, rng: np.random.Generator, scheme: SignalScheme, team_table: np.ndarray,
            adversary_table: np.ndarray | None, reward_scale: float = 1.0) -> RolloutBatch:
        """Sample `n` episodes.

        `team_table` is (n_signals, len(team_rows), num_actions) and
        `adversary_table` (len(adv_rows), num_actions); None plays the
        adversary uniformly and records no adversary data.
        """
        tree = self.tree
        sig = rng.integers(scheme.n_signals, size=n) if scheme.n_signals > 1 else np.zeros(n, dtype=int)
        adv_tab = adversary_table if adversary_table is not None else \
            self.adv_mask / self.adv_mask.sum(axis=1, keepdims=True)
        node = np.zeros(n, dtype=int)
        alive = np.arange(n)
        team_log, adv_log = [], []
        step = 0
        while alive.size:
            nd = node[alive]
            pl = tree.player[nd]
            ch = self.children[nd]
            w = np.zeros(ch.shape)
            c = pl == Role.CHANCE
            if c.any():
                w[c] = tree.chance_edge[ch[c]]
            t = (pl == Role.TEAM1) | (pl == Role.TEAM2)
            if t.any():
                rows = self.row_of[tree.infoset[nd[t]]]
                w[t] = team_table[sig[alive[t]][:, None], rows[:, None], tree.action[ch[t]]]
            a = pl == Role.ADVERSARY
            if a.any():
                rows = self.row_of[tree.infoset[nd[a]]]
                w[a] = adv_tab[rows[:, None], tree.action[ch[a]]]
            w = np.where(self.valid[nd], w, 0.0)
            cum = np.cumsum(w, axis=1)
            u = rng.random(len(alive)) * cum[:, -1]
            k = np.minimum((cum <= u[:, None]).sum(axis=1), self.n_children[nd] - 1)
            nxt = ch[np.arange(len(alive)), k]
            if t.any():
                team_log.append((alive[t], np.full(t.sum(), step), nd[t], tree.action[nxt[t]]))
            if a.any() and adversary_table is not None:
                adv_log.append((alive[a], np.full(a.sum(), step), nd[a], tree.action[nxt[a]]))
            node[alive] = nxt
            alive = alive[tree.player[nxt] >= 0]
            step += 1
        values = tree.team_value[node]
        team, tb = self._records(team_log, sig, values * reward_scale, team=True)
        adv, ab = self._records(adv_log, np.zeros(n, dtype=int), -values * reward_scale, team=False)
        return RolloutBatch(sig, node, values, team, tb, adv, ab)

    def _records(self, log, sig, reward, team: bool):
        width = self.game.team_vector_size if team else self.game.info_vector_size
        if not log:
            empty = {"state": np.zeros((0, width)), "obs": np.zeros((0, width)),
                     "mask": np.zeros((0, self.game.num_actions), dtype=bool),
                     "action": np.zeros(0, dtype=np.int64), "reward": np.zeros(0),
                     "next_state": np.zeros((0, width)), "done": np.zeros(0),
                     "signal": np.zeros(0, dtype=np.int64)}
            return empty, np.zeros(1, dtype=int)
        ep, st, nd, act = (np.concatenate(x) for x in zip(*log))
        order = np.lexsort((st, ep))
        ep, nd, act = ep[order], nd[order], act[order]
        last = np.ones(len(ep), dtype=bool)
        last[:-1] = ep[1:] != ep[:-1]
        rows = self.row_of[self.tree.infoset[nd]]
        if team:
            state = self.team_state[self.node_row[nd]]
            obs = self.team_obs[rows]
            mask = self.team_mask[rows]
        else:
            state = obs = self.adv_obs[rows]
            mask = self.adv_mask[rows]
        nxt = np.zeros_like(state)
        nxt[:-1] = state[1:]
        nxt[last] = 0.0
        arrays = {
            "state": state, "obs": obs, "mask": mask, "action": act.astype(np.int64),
            "reward": np.where(last, reward[ep], 0.0), "next_state": nxt,
            "done": last.astype(float), "signal": sig[ep].astype(np.int64),
        }
        bounds = np.concatenate([[0], np.flatnonzero(last) + 1])
        return arrays, bounds
