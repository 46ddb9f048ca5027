"""The three-level team coordination game.

The adversary picks left/right unobserved, then T1 and T2 each guess without
seeing anything. The team scores only when both members mimic the adversary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stac.efg import Game, InvalidSpec, Role

LEFT, RIGHT = 0, 1
_LABELS = {
    Role.ADVERSARY: ("left", "right"),
    Role.TEAM1: ("l", "r"),
    Role.TEAM2: ("L", "R"),
}
_ORDER = (Role.ADVERSARY, Role.TEAM1, Role.TEAM2)


@dataclass(frozen=True)
class CoordinationGameSpec:
    payoff_left: float = 100.0
    payoff_right: float = 100.0

    @classmethod
    def balanced(cls, k: float = 100.0) -> "CoordinationGameSpec":
        return cls(k, k)

    @classmethod
    def imbalanced(cls, k: float = 100.0) -> "CoordinationGameSpec":
        # {l, L} pays K/2 and {r, R} pays K
        return cls(k / 2, k)


class CoordinationGame(Game):
    name = "coordination"
    num_actions = 2
    action_names = ("0", "1")
    is_perfectly_observable = False
    info_vector_size = 1
    team_vector_size = 4

    def __init__(self, spec: CoordinationGameSpec):
        if not (spec.payoff_left > 0 and spec.payoff_right > 0):
            raise InvalidSpec("coordination payoffs must be strictly positive")
        self.spec = spec

    def _initial_state(self):
        return ()

    def _player(self, state):
        return _ORDER[len(state)]

    def _legal(self, state):
        return (LEFT, RIGHT)

    def _next_state(self, state, role, action):
        return state + (action,)

    def _is_terminal(self, state):
        return len(state) == 3

    def _team_value(self, state):
        adv, t1, t2 = state
        if adv == t1 == t2:
            return self.spec.payoff_left if adv == LEFT else self.spec.payoff_right
        return 0.0

    def _info_key(self, state, role):
        # nobody observes anything; the only own-history is empty at decision time
        own = state[_ORDER.index(role)] if len(state) > _ORDER.index(role) else ""
        return f"{role.name}|{own}"

    def _info_vector(self, state, role):
        return np.ones(1)

    def _team_vector(self, state):
        v = np.zeros(4)
        if len(state) == 1:
            v[0] = 1.0
        elif len(state) >= 2:
            v[1] = 1.0
            v[2 + state[1]] = 1.0
        return v

    def path(self, h):
        return " ".join(
            f"{'T1' if r == Role.TEAM1 else 'T2' if r == Role.TEAM2 else 'A'}:{_LABELS[r][a]}"
            for r, a in h.actions
        ) or "<root>"


def build_coordination(spec: CoordinationGameSpec | None = None) -> CoordinationGame:
    return CoordinationGame(spec or CoordinationGameSpec())
