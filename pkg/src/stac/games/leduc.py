"""Three-player limit Leduc hold'em.

Six cards (three ranks, two suits), antes of one chip, two betting rounds
with fixed bet sizes and a raise cap, one public card between rounds.
Seats 0 and 1 form the team by default; the adversary seat is configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from stac.efg import Game, InvalidSpec, Role

FOLD, CALL, RAISE = 0, 1, 2
ACTION_CHARS = "fcr"


@dataclass(frozen=True)
class LeducSpec:
    num_players: int = 3
    ranks: int = 3
    suits: int = 2
    ante: float = 1.0
    bet_sizes: tuple[float, float] = (2.0, 4.0)
    max_raises_per_round: int = 2
    adversary_seat: int = 2

    @property
    def deck_size(self) -> int:
        return self.ranks * self.suits

    def validate(self) -> None:
        if self.num_players != 3:
            raise InvalidSpec("only three-player Leduc is supported")
        if self.ranks < 2 or self.suits < 1 or self.deck_size < self.num_players + 1:
            raise InvalidSpec("deck too small for private and public cards")
        if self.ante <= 0 or any(b <= 0 for b in self.bet_sizes) or len(self.bet_sizes) != 2:
            raise InvalidSpec("ante and two positive bet sizes required")
        if self.max_raises_per_round < 1:
            raise InvalidSpec("max_raises_per_round must be >= 1")
        if self.adversary_seat not in range(self.num_players):
            raise InvalidSpec("adversary_seat out of range")


@dataclass(frozen=True)
class _State:
    cards: tuple[int, ...] = ()  # private cards in seat order, then the public card
    round: int = 0
    contrib: tuple[float, ...] = (1.0, 1.0, 1.0)
    folded: tuple[bool, ...] = (False, False, False)
    to_act: int = 0
    pending: frozenset = frozenset()  # seats that still have to act this round
    raises: int = 0
    bets: tuple[str, ...] = ("", "")  # action chars per round
    terminal: bool = False
    dealing: bool = True


def _active(s: _State) -> list[int]:
    return [i for i, f in enumerate(s.folded) if not f]


class LeducGame(Game):
    name = "leduc"
    num_actions = 3
    action_names = ("fold", "call", "raise")
    is_perfectly_observable = True

    def __init__(self, spec: LeducSpec | None = None):
        spec = spec or LeducSpec()
        spec.validate()
        self.spec = spec
        n = spec.num_players
        team_seats = [i for i in range(n) if i != spec.adversary_seat]
        self.seat_role = {team_seats[0]: Role.TEAM1, team_seats[1]: Role.TEAM2,
                          spec.adversary_seat: Role.ADVERSARY}
        self.role_seat = {r: s for s, r in self.seat_role.items()}
        self.max_round_len = self._longest_round()
        self.info_vector_size = 3 * n + 2 * spec.ranks + 2 + 2 * self.max_round_len * 3
        self.team_vector_size = 2 * self.info_vector_size + 2

    # -- betting automaton ----------------------------------------------------
    def _start_round(self, s: _State, rnd: int) -> _State:
        act = _active(s)
        return replace(s, round=rnd, to_act=act[0], pending=frozenset(act), raises=0,
                       dealing=False)

    def _longest_round(self) -> int:
        best = 0
        stack = [self._start_round(_State(), 0)]
        while stack:
            s = stack.pop()
            if s.terminal or s.round != 0 or s.dealing:
                best = max(best, len(s.bets[0]))
                continue
            for a in self._legal(s):
                stack.append(self._bet(s, a))
        return best

    def _next_seat(self, s: _State, seat: int, folded) -> int:
        n = self.spec.num_players
        for k in range(1, n + 1):
            j = (seat + k) % n
            if not folded[j]:
                return j
        return seat

    def _bet(self, s: _State, a: int) -> _State:
        seat = s.to_act
        contrib = list(s.contrib)
        folded = list(s.folded)
        pending = set(s.pending)
        pending.discard(seat)
        raises = s.raises
        top = max(contrib)
        if a == FOLD:
            folded[seat] = True
        elif a == CALL:
            contrib[seat] = top
        else:
            contrib[seat] = top + self.spec.bet_sizes[s.round]
            raises += 1
            pending = {i for i in _active(s) if i != seat}
        bets = list(s.bets)
        bets[s.round] += ACTION_CHARS[a]
        pending = {i for i in pending if not folded[i]}
        s2 = replace(s, contrib=tuple(contrib), folded=tuple(folded), pending=frozenset(pending),
                     raises=raises, bets=tuple(bets))
        if sum(not f for f in folded) == 1:
            return replace(s2, terminal=True)
        if not pending:
            if s.round == 0:
                return replace(s2, dealing=True)  # public card next
            return replace(s2, terminal=True)
        return replace(s2, to_act=self._next_seat(s2, seat, folded))

    # -- hooks -----------------------------------------------------------------
    def _initial_state(self):
        n = self.spec.num_players
        return _State(contrib=(self.spec.ante,) * n, folded=(False,) * n)

    def _player(self, s):
        if s.dealing:
            return Role.CHANCE
        return self.seat_role[s.to_act]

    def _chance(self, s):
        left = [c for c in range(self.spec.deck_size) if c not in s.cards]
        p = 1.0 / len(left)
        return tuple((c, p) for c in left)

    def _chance_classes(self, s):
        left = [c for c in range(self.spec.deck_size) if c not in s.cards]
        classes: dict[int, list[int]] = {}
        for c in left:
            classes.setdefault(self.rank(c), []).append(c)
        return tuple((cs[0], len(cs) / len(left)) for cs in classes.values())

    def _legal(self, s):
        if s.raises < self.spec.max_raises_per_round:
            return (FOLD, CALL, RAISE)
        return (FOLD, CALL)

    def _next_state(self, s, role, action):
        if role == Role.CHANCE:
            cards = s.cards + (action,)
            n = self.spec.num_players
            if len(cards) < n:
                return replace(s, cards=cards)
            if len(cards) == n:
                return self._start_round(replace(s, cards=cards), 0)
            return self._start_round(replace(s, cards=cards), 1)
        return self._bet(s, action)

    def _is_terminal(self, s):
        return s.terminal

    def rank(self, card: int) -> int:
        return card // self.spec.suits

    def _raw_returns(self, s):
        n = self.spec.num_players
        pot = sum(s.contrib)
        act = _active(s)
        if len(act) == 1:
            winners = act
        else:
            public = self.rank(s.cards[n])

            def strength(i):
                r = self.rank(s.cards[i])
                return (r == public, r)

            best = max(strength(i) for i in act)
            winners = [i for i in act if strength(i) == best]
        share = pot / len(winners)
        raw = {self.seat_role[i]: (share if i in winners else 0.0) - s.contrib[i] for i in range(n)}
        return raw

    def _team_value(self, s):
        raw = self._raw_returns(s)
        return raw[Role.TEAM1] + raw[Role.TEAM2]

    def _info_key(self, s, role):
        seat = self.role_seat[role]
        n = self.spec.num_players
        priv = self.rank(s.cards[seat]) if len(s.cards) > seat else "?"
        pub = self.rank(s.cards[n]) if len(s.cards) > n else "-"
        return f"{seat}|{priv}|{pub}|{s.bets[0]}/{s.bets[1]}"

    def _info_vector(self, s, role):
        spec = self.spec
        n = spec.num_players
        seat = self.role_seat[role]
        v = np.zeros(self.info_vector_size)
        v[seat] = 1.0
        o = n
        if len(s.cards) > seat:
            v[o + self.rank(s.cards[seat])] = 1.0
        o += spec.ranks
        if len(s.cards) > n:
            v[o + self.rank(s.cards[n])] = 1.0
        o += spec.ranks
        v[o + min(s.round, 1)] = 1.0
        o += 2
        scale = spec.ante + spec.max_raises_per_round * sum(spec.bet_sizes)
        v[o:o + n] = np.asarray(s.contrib) / scale
        o += n
        v[o:o + n] = np.asarray(s.folded, dtype=float)
        o += n
        for rnd in range(2):
            for k, ch in enumerate(s.bets[rnd]):
                v[o + 3 * k + ACTION_CHARS.index(ch)] = 1.0
            o += 3 * self.max_round_len
        return v

    def _team_vector(self, s):
        v = np.zeros(self.team_vector_size)
        m = self.info_vector_size
        v[:m] = self._info_vector(s, Role.TEAM1)
        v[m:2 * m] = self._info_vector(s, Role.TEAM2)
        if not s.terminal and not s.dealing:
            r = self.seat_role[s.to_act]
            if r.is_team:
                v[2 * m + int(r)] = 1.0
        return v

    def path(self, h):
        out = []
        for r, a in h.actions:
            out.append(f"c{a}" if r == Role.CHANCE else f"{self.role_seat[r]}{ACTION_CHARS[a]}")
        return " ".join(out) or "<root>"


def build_leduc(spec: LeducSpec | None = None) -> LeducGame:
    return LeducGame(spec)
