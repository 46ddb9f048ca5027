"""Explicit extensive-form games with a chance player and a two-member team.

A `Game` subclass describes the rules; histories are immutable action lists.
`compile_tree` flattens a game into arrays so that reach probabilities, values
and best responses can be computed level by level with numpy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np


class GameError(Exception):
    pass


class TerminalHistory(GameError):
    pass


class NonTerminal(GameError):
    pass


class IllegalAction(GameError):
    pass


class IncompletePolicy(GameError):
    pass


class InvalidSpec(GameError):
    pass


class Role(enum.IntEnum):
    TEAM1 = 0
    TEAM2 = 1
    ADVERSARY = 2
    CHANCE = 3

    @property
    def is_team(self) -> bool:
        return self in (Role.TEAM1, Role.TEAM2)


TEAM = (Role.TEAM1, Role.TEAM2)
STRATEGIC = (Role.TEAM1, Role.TEAM2, Role.ADVERSARY)


@dataclass(frozen=True)
class History:
    actions: tuple[tuple[Role, int], ...] = ()
    terminal: bool = False
    chance_prob: float = 1.0
    # game-private incremental state, not part of identity
    state: Any = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.actions)

    def prefix(self, n: int) -> tuple[tuple[Role, int], ...]:
        return self.actions[:n]

    def own_actions(self, role: Role) -> tuple[int, ...]:
        return tuple(a for r, a in self.actions if r == role)


@dataclass(frozen=True)
class InfoState:
    owner: Role
    key: str
    legal_actions: tuple[int, ...]


@dataclass(frozen=True)
class TeamState:
    key: str


class Game:
    """Base class for games in this package.

    Subclasses implement the rule hooks (`_initial_state`, `_player`,
    `_legal`, `_chance`, `_next_state`, `_is_terminal`, `_raw_returns`,
    `_info_key`, `_info_vector`, `_team_vector`). Everything else is derived.

    Terminal team payoff is `team_value(h)`; team members each receive half of
    it from `returns` and the adversary receives its negation.
    """

    name = "game"
    num_actions: int = 2
    action_names: tuple[str, ...] = ()
    is_perfectly_observable: bool = False
    discount: float = 1.0
    info_vector_size: int = 0
    team_vector_size: int = 0

    players: tuple[Role, ...] = (Role.TEAM1, Role.TEAM2, Role.ADVERSARY, Role.CHANCE)

    # -- rule hooks ---------------------------------------------------------
    def _initial_state(self) -> Any:
        raise NotImplementedError

    def _player(self, state: Any) -> Role:
        raise NotImplementedError

    def _legal(self, state: Any) -> tuple[int, ...]:
        raise NotImplementedError

    def _chance(self, state: Any) -> tuple[tuple[int, float], ...]:
        raise NotImplementedError

    def _next_state(self, state: Any, role: Role, action: int) -> Any:
        raise NotImplementedError

    def _is_terminal(self, state: Any) -> bool:
        raise NotImplementedError

    def _team_value(self, state: Any) -> float:
        raise NotImplementedError

    def _info_key(self, state: Any, role: Role) -> str:
        raise NotImplementedError

    def _info_vector(self, state: Any, role: Role) -> np.ndarray:
        raise NotImplementedError

    def _team_vector(self, state: Any) -> np.ndarray:
        raise NotImplementedError

    def _chance_classes(self, state: Any) -> tuple[tuple[int, float], ...]:
        """Chance outcomes merged into strategically identical classes.

        Each class is a representative outcome with the summed probability.
        Only used by `compile_tree`; the default is no merging.
        """
        return self._chance(state)

    def _raw_returns(self, state: Any) -> dict[Role, float] | None:
        """Per-seat payoffs before team pooling, if the game has them."""
        return None

    # -- public API ---------------------------------------------------------
    def root(self) -> History:
        state = self._initial_state()
        return History((), self._is_terminal(state), 1.0, state)

    def current_player(self, h: History) -> Role:
        if h.terminal:
            raise TerminalHistory(f"history {self.path(h)} is terminal")
        return self._player(h.state)

    def legal_actions(self, h: History) -> list[int]:
        if h.terminal:
            raise TerminalHistory(f"history {self.path(h)} is terminal")
        if self._player(h.state) == Role.CHANCE:
            return [a for a, _ in self._chance(h.state)]
        return list(self._legal(h.state))

    def chance_outcomes(self, h: History) -> list[tuple[int, float]]:
        if h.terminal or self._player(h.state) != Role.CHANCE:
            raise GameError("not a chance node")
        return list(self._chance(h.state))

    def apply(self, h: History, a: int) -> History:
        role = self.current_player(h)
        prob = h.chance_prob
        if role == Role.CHANCE:
            outcomes = dict(self._chance(h.state))
            if a not in outcomes:
                raise IllegalAction(f"chance outcome {a} not available")
            prob *= outcomes[a]
        elif a not in self._legal(h.state):
            raise IllegalAction(f"action {a} illegal for {role.name} at {self.path(h)}")
        state = self._next_state(h.state, role, a)
        return History(h.actions + ((role, a),), self._is_terminal(state), prob, state)

    def replay(self, actions: Sequence[tuple[Role, int] | int]) -> History:
        h = self.root()
        for item in actions:
            a = item[1] if isinstance(item, tuple) else item
            h = self.apply(h, a)
        return h

    def team_value(self, h: History) -> float:
        if not h.terminal:
            raise NonTerminal(f"history {self.path(h)} is not terminal")
        return float(self._team_value(h.state))

    def returns(self, h: History) -> dict[Role, float]:
        v = self.team_value(h)
        return {Role.TEAM1: v / 2, Role.TEAM2: v / 2, Role.ADVERSARY: -v}

    def raw_returns(self, h: History) -> dict[Role, float] | None:
        if not h.terminal:
            raise NonTerminal(f"history {self.path(h)} is not terminal")
        return self._raw_returns(h.state)

    def info_state(self, h: History, role: Role | None = None) -> InfoState:
        role = self.current_player(h) if role is None else role
        legal = () if h.terminal or self._player(h.state) != role else self._legal(h.state)
        return InfoState(role, self._info_key(h.state, role), tuple(legal))

    def info_vector(self, h: History, role: Role | None = None) -> np.ndarray:
        role = self.current_player(h) if role is None else role
        return self._info_vector(h.state, role)

    def team_state(self, h: History) -> TeamState:
        # the team's own actions make the joint view perfect-recall
        own = "".join(f"{int(r)}{a}" for r, a in h.actions if r.is_team)
        return TeamState(
            f"{self._info_key(h.state, Role.TEAM1)}|{self._info_key(h.state, Role.TEAM2)}|{own}"
        )

    def team_vector(self, h: History) -> np.ndarray:
        return self._team_vector(h.state)

    def path(self, h: History) -> str:
        names = self.action_names
        out = []
        for r, a in h.actions:
            if r == Role.CHANCE:
                out.append(f"c{a}")
            else:
                label = names[a] if a < len(names) else str(a)
                out.append(f"{r.name[0]}{'12'[int(r)] if r.is_team else ''}:{label}")
        return " ".join(out) or "<root>"

    def mask(self, h: History) -> np.ndarray:
        m = np.zeros(self.num_actions, dtype=bool)
        m[list(self._legal(h.state))] = True
        return m


# -- traversal -----------------------------------------------------------------

Policy = Callable[[History, Role], Mapping[int, float] | np.ndarray]


def iter_histories(game: Game, h: History | None = None) -> Iterator[History]:
    """Depth-first, every history of the tree exactly once."""
    stack = [game.root() if h is None else h]
    while stack:
        node = stack.pop()
        yield node
        if not node.terminal:
            for a in reversed(game.legal_actions(node)):
                stack.append(game.apply(node, a))


def terminal_histories(game: Game) -> list[History]:
    return [h for h in iter_histories(game) if h.terminal]


def _action_prob(dist, a: int) -> float:
    if isinstance(dist, np.ndarray):
        return float(dist[a])
    return float(dist.get(a, 0.0))


def traverse(
    game: Game,
    profile: Mapping[str, Mapping[int, float] | np.ndarray] | Policy,
    visitor: Callable[[Any, History, float], Any] | None = None,
    init: Any = 0.0,
) -> Any:
    """Fold `visitor(acc, terminal, reach)` over every reachable terminal.

    `profile` maps InfoState keys (or is a callable `(h, role)`) to action
    distributions for every non-chance decision. The default visitor
    accumulates the expected team value.
    """
    if visitor is None:
        visitor = lambda acc, h, reach: acc + reach * game.team_value(h)  # noqa: E731
    acc = init
    stack = [(game.root(), 1.0)]
    while stack:
        h, reach = stack.pop()
        if h.terminal:
            acc = visitor(acc, h, reach)
            continue
        role = game.current_player(h)
        if role == Role.CHANCE:
            for a, p in game.chance_outcomes(h):
                stack.append((game.apply(h, a), reach * p))
            continue
        if callable(profile):
            dist = profile(h, role)
        else:
            key = game.info_state(h, role).key
            if key not in profile:
                raise IncompletePolicy(f"no distribution at infostate {key!r}")
            dist = profile[key]
        for a in game.legal_actions(h):
            p = _action_prob(dist, a)
            if p > 0.0:
                stack.append((game.apply(h, a), reach * p))
    return acc


def expected_team_value(game: Game, profile) -> float:
    return traverse(game, profile)


def dump_game(game: Game) -> str:
    """One line per terminal: action path, chance probability, returns."""
    lines = [f"# game={game.name} terminals"]
    for h in iter_histories(game):
        if not h.terminal:
            continue
        ret = game.returns(h)
        raw = game.raw_returns(h)
        cols = [
            game.path(h),
            repr(h.chance_prob),
            f"TEAM={game.team_value(h) + 0.0:g} "
            + " ".join(f"{r.name}={ret[r] + 0.0:g}" for r in STRATEGIC),
        ]
        if raw is not None:
            cols.append("raw " + " ".join(f"{r.name}={raw[r] + 0.0:g}" for r in STRATEGIC))
        lines.append(" ; ".join(cols))
    return "\n".join(lines) + "\n"


# -- compiled tree ---------------------------------------------------------------


@dataclass
class InfoSet:
    index: int
    owner: Role
    key: str
    legal: tuple[int, ...]
    depth: int
    history: History  # representative member


@dataclass
class CompiledTree:
    """Flat array view of a game tree, nodes ordered breadth-first."""

    game: Game
    player: np.ndarray  # Role value per node, -1 for terminals
    parent: np.ndarray
    action: np.ndarray  # action taken at parent to reach node
    depth: np.ndarray
    infoset: np.ndarray  # infoset index per decision node, -1 otherwise
    chance_edge: np.ndarray  # probability of the edge from parent if parent is chance, else 1
    team_value: np.ndarray  # terminal team payoff (0 elsewhere)
    infosets: list[InfoSet]
    by_key: dict[str, int]
    levels: list[np.ndarray]  # node ids per depth
    histories: list[History] | None = None  # per node, only when compiled with keep_histories

    @property
    def n_nodes(self) -> int:
        return len(self.player)

    @property
    def terminals(self) -> np.ndarray:
        return np.flatnonzero(self.player < 0)

    def infosets_of(self, role: Role) -> list[InfoSet]:
        return [s for s in self.infosets if s.owner == role]

    def edge_prob(self, policy: np.ndarray) -> np.ndarray:
        """Per-node probability of the incoming edge.

        `policy` is an (n_infosets, num_actions) table; rows of roles not
        covered by it must already be filled (e.g. ones for a best-response
        computation that handles them separately).
        """
        out = self.chance_edge.copy()
        nonroot = self.parent >= 0
        par = self.parent[nonroot]
        dec = self.infoset[par] >= 0
        idx = np.flatnonzero(nonroot)[dec]
        out[idx] = policy[self.infoset[par[dec]], self.action[idx]]
        return out

    def reach(self, edge: np.ndarray) -> np.ndarray:
        r = np.empty(self.n_nodes)
        r[0] = 1.0
        for lvl in self.levels[1:]:
            r[lvl] = r[self.parent[lvl]] * edge[lvl]
        return r

    def uniform_policy(self) -> np.ndarray:
        pol = np.zeros((len(self.infosets), self.game.num_actions))
        for s in self.infosets:
            pol[s.index, list(s.legal)] = 1.0 / len(s.legal)
        return pol


def compile_tree(game: Game, max_nodes: int = 5_000_000, keep_histories: bool = False) -> CompiledTree:
    """Enumerate the tree breadth-first into a `CompiledTree`.

    Chance outcomes are merged through the game's `_chance_classes` hook, so
    suit-isomorphic deals collapse into one branch with summed probability.
    """
    from collections import deque

    players, parents, actions, depths, isets, cedge, values = [], [], [], [], [], [], []
    kept: list[History] | None = [] if keep_histories else None
    infosets: list[InfoSet] = []
    by_key: dict[str, int] = {}
    queue = deque([(game.root(), -1, -1, 0, 1.0)])
    while queue:
        h, par, act, d, pe = queue.popleft()
        nid = len(players)
        if nid >= max_nodes:
            raise GameError(f"tree exceeds {max_nodes} nodes")
        parents.append(par)
        actions.append(act)
        depths.append(d)
        cedge.append(pe)
        if kept is not None:
            kept.append(h)
        if h.terminal:
            players.append(-1)
            isets.append(-1)
            values.append(game.team_value(h))
            continue
        role = game.current_player(h)
        players.append(int(role))
        values.append(0.0)
        if role == Role.CHANCE:
            isets.append(-1)
            for a, p in game._chance_classes(h.state):
                queue.append((game.apply(h, a), nid, a, d + 1, p))
            continue
        info = game.info_state(h, role)
        k = by_key.get(info.key)
        if k is None:
            k = len(infosets)
            by_key[info.key] = k
            infosets.append(InfoSet(k, role, info.key, info.legal_actions, d, h))
        elif infosets[k].legal != info.legal_actions:
            raise GameError(f"inconsistent legal actions in infostate {info.key!r}")
        isets.append(k)
        for a in info.legal_actions:
            queue.append((game.apply(h, a), nid, a, d + 1, 1.0))

    depth = np.asarray(depths)
    levels = [np.flatnonzero(depth == d) for d in range(int(depth.max()) + 1)]
    return CompiledTree(
        game=game,
        player=np.asarray(players),
        parent=np.asarray(parents),
        action=np.asarray(actions),
        depth=depth,
        infoset=np.asarray(isets),
        chance_edge=np.asarray(cedge, dtype=float),
        team_value=np.asarray(values, dtype=float),
        infosets=infosets,
        by_key=by_key,
        levels=levels,
        histories=kept,
    )
