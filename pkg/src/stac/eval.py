"""Exact evaluation of team profiles on compiled game trees.

Team strategies are mixtures over signals of behavioral profiles, so every
quantity here is linear in the signal distribution: reach weights are mixed
first, then the adversary best-responds to the mixture.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from stac.efg import CompiledTree, GameError, Role, compile_tree
from stac.lp import solve_matrix_game


class ImperfectRecall(GameError):
    pass


class GameTooLarge(GameError):
    pass


@dataclass
class TeamProfile:
    """Per-signal behavioral tables over team infosets, plus the signal mixture.

    `tables[s, k]` is the action distribution at infoset `keys[k]` under
    signal `s`; `signal_dist` sums to one.
    """

    keys: list[str]
    tables: np.ndarray
    signal_dist: np.ndarray

    def __post_init__(self):
        self.tables = np.asarray(self.tables, dtype=float)
        self.signal_dist = np.asarray(self.signal_dist, dtype=float)
        if self.tables.shape[:2] != (len(self.signal_dist), len(self.keys)):
            raise ValueError("tables must be (n_signals, n_infosets, n_actions)")

    @property
    def n_signals(self) -> int:
        return len(self.signal_dist)

    def policy(self, signal: int) -> dict[str, np.ndarray]:
        return {k: self.tables[signal, i] for i, k in enumerate(self.keys)}

    def to_json(self) -> dict:
        return {"keys": self.keys, "tables": self.tables.tolist(),
                "signal_dist": self.signal_dist.tolist()}

    @classmethod
    def from_json(cls, d: Mapping) -> "TeamProfile":
        return cls(list(d["keys"]), np.asarray(d["tables"]), np.asarray(d["signal_dist"]))


@dataclass
class EvalReport:
    worst_case_team_payoff: float
    adversary_br_value: float
    e_A: float | None = None
    e_T: float | None = None
    exploitability: float | None = None
    team_value: float | None = None
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# -- tables ----------------------------------------------------------------------


def _legal_table(tree: CompiledTree) -> np.ndarray:
    t = getattr(tree, "_legal_table", None)
    if t is None:
        t = np.zeros((len(tree.infosets), tree.game.num_actions), dtype=bool)
        for s in tree.infosets:
            t[s.index, list(s.legal)] = True
        tree._legal_table = t
    return t


def role_rows(tree: CompiledTree, role: Role) -> np.ndarray:
    return np.array([s.index for s in tree.infosets if s.owner == role], dtype=int)


def uniform_team_profile(tree: CompiledTree, n_signals: int = 1) -> TeamProfile:
    return team_profile_from_policy(tree, tree.uniform_policy(), n_signals)


def team_profile_from_policy(tree: CompiledTree, policy: np.ndarray, n_signals: int = 1) -> TeamProfile:
    rows = np.concatenate([role_rows(tree, Role.TEAM1), role_rows(tree, Role.TEAM2)])
    keys = [tree.infosets[i].key for i in rows]
    tab = np.repeat(policy[rows][None], n_signals, axis=0)
    return TeamProfile(keys, tab, np.full(n_signals, 1.0 / n_signals))


def _fill(tree: CompiledTree, base: np.ndarray, keys: Sequence[str], table: np.ndarray) -> np.ndarray:
    out = base.copy()
    idx = []
    for k in keys:
        i = tree.by_key.get(k)
        if i is None:
            raise KeyError(f"infostate {k!r} does not belong to this game")
        idx.append(i)
    out[np.asarray(idx, dtype=int)] = table
    return out


def _team_reach_mixture(tree: CompiledTree, prof: TeamProfile, adv: np.ndarray | None = None) -> np.ndarray:
    """Signal-mixed reach of chance and team (and optionally adversary) edges."""
    base = np.ones((len(tree.infosets), tree.game.num_actions))
    if adv is not None:
        rows = role_rows(tree, Role.ADVERSARY)
        base[rows] = adv[rows]
    w = np.zeros(tree.n_nodes)
    for s, weight in enumerate(prof.signal_dist):
        if weight == 0.0:
            continue
        pol = _fill(tree, base, prof.keys, prof.tables[s])
        w += weight * tree.reach(tree.edge_prob(pol))
    return w


def adversary_table(tree: CompiledTree, policy: Mapping[str, np.ndarray] | np.ndarray | None = None) -> np.ndarray:
    """Full-size table with adversary rows filled (uniform when `policy` is None)."""
    table = tree.uniform_policy()
    if policy is None:
        return table
    if isinstance(policy, np.ndarray):
        rows = role_rows(tree, Role.ADVERSARY)
        table[rows] = policy[rows]
        return table
    for k, dist in policy.items():
        table[tree.by_key[k]] = dist
    return table


# -- values ------------------------------------------------------------------------


def expected_team_value(tree: CompiledTree, prof: TeamProfile, adv: np.ndarray) -> float:
    w = _team_reach_mixture(tree, prof, adv)
    z = tree.terminals
    return float(w[z] @ tree.team_value[z])


def per_signal_values(tree: CompiledTree, prof: TeamProfile, adv: np.ndarray) -> np.ndarray:
    out = []
    for s in range(prof.n_signals):
        one = TeamProfile(prof.keys, prof.tables[s:s + 1], np.ones(1))
        out.append(expected_team_value(tree, one, adv))
    return np.asarray(out)


def check_perfect_recall(tree: CompiledTree, role: Role) -> None:
    cache = getattr(tree, "_recall_ok", None)
    if cache is None:
        cache = tree._recall_ok = {}
    if role in cache:
        return
    seq_ids: dict[tuple, int] = {(): 0}
    seq = np.zeros(tree.n_nodes, dtype=np.int64)
    owner_seq: dict[int, int] = {}
    for n in range(1, tree.n_nodes):
        p = tree.parent[n]
        if tree.player[p] == role:
            key = (int(seq[p]), int(tree.infoset[p]), int(tree.action[n]))
            seq[n] = seq_ids.setdefault(key, len(seq_ids))
        else:
            seq[n] = seq[p]
    for n in np.flatnonzero(tree.player == role):
        i = int(tree.infoset[n])
        if owner_seq.setdefault(i, int(seq[n])) != seq[n]:
            raise ImperfectRecall(f"{role.name} forgets its own actions at {tree.infosets[i].key!r}")
    depths: dict[int, int] = {}
    for n in np.flatnonzero(tree.player == role):
        i = int(tree.infoset[n])
        if depths.setdefault(i, int(tree.depth[n])) != tree.depth[n]:
            raise ImperfectRecall(f"infostate {tree.infosets[i].key!r} spans several depths")
    cache[role] = True


def best_response_value(tree: CompiledTree, prof: TeamProfile) -> tuple[float, np.ndarray]:
    """Exact adversary best response to the signal-mixed team profile.

    Returns the adversary's expected payoff and a full-size policy table with
    the pure best response on adversary rows. Ties go to the lowest action.
    """
    check_perfect_recall(tree, Role.ADVERSARY)
    legal = _legal_table(tree)
    w = _team_reach_mixture(tree, prof)
    S = np.zeros(tree.n_nodes)
    z = tree.terminals
    S[z] = -w[z] * tree.team_value[z]
    br = tree.uniform_policy()
    adv = Role.ADVERSARY
    for d in range(len(tree.levels) - 2, -1, -1):
        kids = tree.levels[d + 1]
        par = tree.parent[kids]
        at_adv = tree.player[par] == adv
        np.add.at(S, par[~at_adv], S[kids[~at_adv]])
        if not at_adv.any():
            continue
        k, p = kids[at_adv], par[at_adv]
        iset = tree.infoset[p]
        act = tree.action[k]
        q = np.zeros_like(br)
        np.add.at(q, (iset, act), S[k])
        touched = np.unique(iset)
        choice = np.argmax(np.where(legal[touched], q[touched], -np.inf), axis=1)
        br[touched] = 0.0
        br[touched, choice] = 1.0
        best = np.full(len(tree.infosets), -1)
        best[touched] = choice
        sel = act == best[iset]
        S[p[sel]] = S[k[sel]]
    return float(S[0]), br


def worst_case_team_payoff(tree: CompiledTree, prof: TeamProfile) -> float:
    return -best_response_value(tree, prof)[0]


# -- plan enumeration -------------------------------------------------------------


def _plan_count(tree: CompiledTree, role: Role) -> int:
    n = 1
    for s in tree.infosets_of(role):
        n *= len(s.legal)
    return n


def enumerate_plans(tree: CompiledTree, role: Role, max_plans: int = 100_000) -> tuple[list[str], list[tuple[int, ...]]]:
    """Pure plans of `role`, lexicographic over infostate keys then actions."""
    sets = sorted(tree.infosets_of(role), key=lambda s: s.key)
    if _plan_count(tree, role) > max_plans:
        raise GameTooLarge(f"{role.name} has more than {max_plans} plans")
    return [s.key for s in sets], list(itertools.product(*[s.legal for s in sets]))


def _consistency(tree: CompiledTree, role: Role, keys: list[str], plans: list[tuple[int, ...]]) -> np.ndarray:
    """Boolean (n_plans, n_terminals): terminal reachable under the plan."""
    rows = np.array([tree.by_key[k] for k in keys], dtype=int)
    chosen = np.full((len(plans), len(tree.infosets)), -1)
    if len(rows):
        chosen[:, rows] = np.asarray(plans, dtype=int).reshape(len(plans), len(rows))
    nonroot = np.arange(1, tree.n_nodes)
    par = tree.parent[nonroot]
    own = tree.player[par] == role
    ok = np.ones((len(plans), tree.n_nodes), dtype=bool)
    for lvl in tree.levels[1:]:
        p = tree.parent[lvl]
        mine = tree.player[p] == role
        ok[:, lvl] = ok[:, p]
        if mine.any():
            l2 = lvl[mine]
            ok[:, l2] &= chosen[:, tree.infoset[p[mine]]] == tree.action[l2][None, :]
    return ok[:, tree.terminals]


def team_br_value(tree: CompiledTree, adv: np.ndarray, max_plans: int = 100_000) -> tuple[float, tuple]:
    """Best joint pure team plan against a fixed adversary table."""
    k1, p1 = enumerate_plans(tree, Role.TEAM1, max_plans)
    k2, p2 = enumerate_plans(tree, Role.TEAM2, max_plans)
    if len(p1) * len(p2) > max_plans:
        raise GameTooLarge(f"{len(p1) * len(p2)} joint plans exceed {max_plans}")
    pol = tree.uniform_policy()
    rows = role_rows(tree, Role.ADVERSARY)
    pol[rows] = adv[rows]
    team = np.concatenate([role_rows(tree, Role.TEAM1), role_rows(tree, Role.TEAM2)])
    pol[team] = 1.0
    w = tree.reach(tree.edge_prob(pol))
    z = tree.terminals
    cv = w[z] * tree.team_value[z]
    c1 = _consistency(tree, Role.TEAM1, k1, p1).astype(float)
    c2 = _consistency(tree, Role.TEAM2, k2, p2).astype(float)
    vals = (c1 * cv) @ c2.T
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return float(vals[i, j]), (dict(zip(k1, p1[i])), dict(zip(k2, p2[j])))


@dataclass
class OracleResult:
    value: float
    joint_plans: list[tuple[dict, dict]]
    mixture: np.ndarray
    adversary_plans: list[dict]
    adversary_mixture: np.ndarray
    adversary_policy: np.ndarray  # full-size behavioral table
    payoff_matrix: np.ndarray = field(repr=False)

    def support(self, tol: float = 1e-9) -> list[tuple[float, tuple[dict, dict]]]:
        return [(float(x), jp) for x, jp in zip(self.mixture, self.joint_plans) if x > tol]

    def team_profile(self, tree: CompiledTree, tol: float = 1e-12) -> TeamProfile:
        """One signal per joint plan in the support, weighted by the mixture."""
        rows = np.concatenate([role_rows(tree, Role.TEAM1), role_rows(tree, Role.TEAM2)])
        keys = [tree.infosets[i].key for i in rows]
        tabs, weights = [], []
        A = tree.game.num_actions
        for x, (a1, a2) in zip(self.mixture, self.joint_plans):
            if x <= tol:
                continue
            t = np.zeros((len(keys), A))
            plan = {**a1, **a2}
            for r, k in enumerate(keys):
                t[r, plan[k]] = 1.0
            tabs.append(t)
            weights.append(x)
        weights = np.asarray(weights)
        return TeamProfile(keys, np.stack(tabs), weights / weights.sum())


def payoff_matrix(tree: CompiledTree, max_plans: int = 100_000):
    k1, p1 = enumerate_plans(tree, Role.TEAM1, max_plans)
    k2, p2 = enumerate_plans(tree, Role.TEAM2, max_plans)
    ka, pa = enumerate_plans(tree, Role.ADVERSARY, max_plans)
    if len(p1) * len(p2) * len(pa) > 10 * max_plans:
        raise GameTooLarge("payoff matrix too large")
    pol = tree.uniform_policy()
    pol[:] = 1.0
    w = tree.reach(tree.edge_prob(pol))  # chance reach only
    z = tree.terminals
    cv = w[z] * tree.team_value[z]
    c1 = _consistency(tree, Role.TEAM1, k1, p1).astype(float)
    c2 = _consistency(tree, Role.TEAM2, k2, p2).astype(float)
    ca = _consistency(tree, Role.ADVERSARY, ka, pa).astype(float)
    M = np.empty((len(p1) * len(p2), len(pa)))
    for i in range(len(p1)):
        M[i * len(p2):(i + 1) * len(p2)] = (c2 * (c1[i] * cv)) @ ca.T
    joint = [(dict(zip(k1, a)), dict(zip(k2, b))) for a in p1 for b in p2]
    adv_plans = [dict(zip(ka, c)) for c in pa]
    return M, joint, adv_plans


def plans_to_behavioral(tree: CompiledTree, role: Role, plans: list[dict], mixture: np.ndarray) -> np.ndarray:
    """Behavioral table realizing a plan mixture (perfect recall assumed)."""
    table = tree.uniform_policy()
    for s in tree.infosets_of(role):
        # plans consistent with the role's own earlier choices on the way to s
        prior = [(tree.game.info_state(tree.game.replay(s.history.actions[:i]), role).key, a)
                 for i, (r, a) in enumerate(s.history.actions) if r == role]
        wts = np.zeros(tree.game.num_actions)
        for x, plan in zip(mixture, plans):
            if x > 0 and all(plan[k] == a for k, a in prior):
                wts[plan[s.key]] += x
        if wts.sum() > 0:
            table[s.index] = wts / wts.sum()
    return table


def tmecor_oracle(tree: CompiledTree, max_plans: int = 100_000) -> OracleResult:
    M, joint, adv_plans = payoff_matrix(tree, max_plans)
    x, y, v = solve_matrix_game(M)
    adv = plans_to_behavioral(tree, Role.ADVERSARY, adv_plans, y)
    return OracleResult(v, joint, x, adv_plans, y, adv, M)


# -- exploitability ------------------------------------------------------------------


def constant_sum_exploitability(br_values: Sequence[float], k: float = 0.0) -> float:
    """(sum of best-response values - k) / number of players."""
    return (float(sum(br_values)) - k) / len(br_values)


def evaluate(tree: CompiledTree, prof: TeamProfile, adv: np.ndarray | None = None,
             max_plans: int = 100_000) -> EvalReport:
    """Worst-case payoff always; incentives when the adversary policy is given.

    The team counts as one player whose deviations range over joint plans, so
    exploitability averages over two sides of a zero-sum game.
    """
    t0 = time.perf_counter()
    br_val, _ = best_response_value(tree, prof)
    rep = EvalReport(worst_case_team_payoff=-br_val, adversary_br_value=br_val)
    if adv is not None:
        cur = expected_team_value(tree, prof, adv)
        rep.team_value = cur
        rep.e_A = br_val + cur
        try:
            team_br, _ = team_br_value(tree, adv, max_plans)
        except GameTooLarge:
            team_br = None
        if team_br is not None:
            rep.e_T = team_br - cur
            rep.exploitability = constant_sum_exploitability([team_br, br_val], 0.0)
    rep.wall_time = time.perf_counter() - t0
    return rep


_TREES: dict = {}


def cached_tree(game, keep_histories: bool = False) -> CompiledTree:
    key = (type(game).__name__, repr(getattr(game, "spec", None)))
    tree = _TREES.get(key)
    if tree is None or (keep_histories and tree.histories is None):
        tree = _TREES[key] = compile_tree(game, keep_histories=keep_histories)
    return tree
