import numpy as np
import pytest
from hypothesis import given, strategies as st

from stac.efg import InvalidSpec, Role, compile_tree, terminal_histories
from stac.eval import tmecor_oracle
from stac.games import CoordinationGameSpec, LeducSpec, build_coordination, build_leduc
from stac.games.leduc import CALL, FOLD, RAISE


def test_coordination_leaves(balanced):
    vals = [balanced.team_value(h) for h in terminal_histories(balanced)]
    assert vals == [100.0, 0, 0, 0, 0, 0, 0, 100.0]


def test_coordination_infosets(balanced_tree):
    for role in (Role.TEAM1, Role.TEAM2, Role.ADVERSARY):
        sets = balanced_tree.infosets_of(role)
        assert len(sets) == 1 and sets[0].legal == (0, 1)
    assert not balanced_tree.game.is_perfectly_observable


@pytest.mark.parametrize("left,right", [(0, 1), (1, -2), (-1, -1)])
def test_coordination_rejects_nonpositive_payoffs(left, right):
    with pytest.raises(InvalidSpec):
        build_coordination(CoordinationGameSpec(left, right))


def test_imbalanced_orientation():
    spec = CoordinationGameSpec.imbalanced(100.0)
    assert (spec.payoff_left, spec.payoff_right) == (50.0, 100.0)


@given(a=st.floats(0.5, 200), b=st.floats(0.5, 200))
def test_left_right_swap_is_an_automorphism(a, b):
    v1 = tmecor_oracle(compile_tree(build_coordination(CoordinationGameSpec(a, b)))).value
    v2 = tmecor_oracle(compile_tree(build_coordination(CoordinationGameSpec(b, a)))).value
    assert v1 == pytest.approx(v2, rel=1e-9)
    assert v1 == pytest.approx(a * b / (a + b), rel=1e-9)


# -- Leduc --------------------------------------------------------------------------


def test_first_deal_probability(leduc):
    h = leduc.root()
    assert leduc.current_player(h) == Role.CHANCE
    outs = leduc.chance_outcomes(h)
    assert len(outs) == 6
    assert leduc.apply(h, outs[0][0]).chance_prob == pytest.approx(1 / 6)


def test_private_deal_orderings(leduc):
    frontier = [leduc.root()]
    for _ in range(3):
        frontier = [leduc.apply(h, a) for h in frontier for a, _ in leduc.chance_outcomes(h)]
    assert len(frontier) == 6 * 5 * 4 == 120
    assert sum(h.chance_prob for h in frontier) == pytest.approx(1.0)
    assert all(leduc.current_player(h) == Role.TEAM1 for h in frontier)


def test_first_decision_has_three_actions(leduc):
    h = leduc.replay([0, 2, 4])
    assert leduc.legal_actions(h) == [FOLD, CALL, RAISE]
    assert leduc.mask(h).tolist() == [True, True, True]


def test_check_down_showdown(leduc):
    # seat 0 pairs the public card; the other two lose their antes
    h = leduc.replay([4, 0, 1, CALL, CALL, CALL, 5, CALL, CALL, CALL])
    assert h.terminal
    raw = leduc.raw_returns(h)
    assert (raw[Role.TEAM1], raw[Role.TEAM2], raw[Role.ADVERSARY]) == (2.0, -1.0, -1.0)
    r = leduc.returns(h)
    assert r[Role.TEAM1] == r[Role.TEAM2] == 0.5
    assert r[Role.ADVERSARY] == -1.0


def test_tie_splits_the_pot(leduc):
    # seats 0 and 2 hold the two kings, public card pairs nobody's rank
    h = leduc.replay([4, 0, 5, CALL, CALL, CALL, 2, CALL, CALL, CALL])
    raw = leduc.raw_returns(h)
    assert raw[Role.TEAM1] == raw[Role.ADVERSARY] == 0.5
    assert raw[Role.TEAM2] == -1.0


def test_raise_cap_blocks_further_raises(leduc):
    h = leduc.replay([0, 2, 4, RAISE, RAISE])
    assert RAISE not in leduc.legal_actions(h)
    assert leduc.legal_actions(h) == [FOLD, CALL]


def test_everyone_folds_to_a_bet(leduc):
    h = leduc.replay([0, 2, 4, RAISE, FOLD, FOLD])
    assert h.terminal
    raw = leduc.raw_returns(h)
    assert (raw[Role.TEAM1], raw[Role.TEAM2], raw[Role.ADVERSARY]) == (2.0, -1.0, -1.0)


def test_leduc_golden_counts(leduc_tree):
    # frozen from the first exhaustive enumeration (suit-isomorphic deals merged)
    tree = leduc_tree
    assert tree.n_nodes == 85_645
    assert len(tree.terminals) == 51_264
    assert [len(tree.infosets_of(r)) for r in (Role.TEAM1, Role.TEAM2, Role.ADVERSARY)] == [1602, 1842, 2082]
    assert tree.game.is_perfectly_observable


def test_merged_chance_preserves_deal_distribution(leduc_tree):
    pol = leduc_tree.uniform_policy()
    pol[:] = 1.0
    reach = leduc_tree.reach(leduc_tree.edge_prob(pol))
    first_decisions = leduc_tree.levels[3]
    assert reach[first_decisions].sum() == pytest.approx(1.0)


@given(seed=st.integers(0, 2**32 - 1))
def test_random_playouts_conserve_chips(seed):
    g = build_leduc()
    rng = np.random.default_rng(seed)
    h = g.root()
    while not h.terminal:
        if g.current_player(h) == Role.CHANCE:
            outs = g.chance_outcomes(h)
            h = g.apply(h, outs[rng.integers(len(outs))][0])
            continue
        legal = g.legal_actions(h)
        if h.state.raises >= g.spec.max_raises_per_round:
            assert RAISE not in legal
        h = g.apply(h, legal[rng.integers(len(legal))])
    raw = g.raw_returns(h)
    assert sum(raw.values()) == pytest.approx(0.0, abs=1e-12)
    assert g.team_value(h) == pytest.approx(raw[Role.TEAM1] + raw[Role.TEAM2])


@pytest.mark.parametrize("kw", [dict(num_players=4), dict(ranks=1), dict(ante=0),
                                dict(bet_sizes=(2.0,)), dict(max_raises_per_round=0),
                                dict(adversary_seat=3)])
def test_leduc_invalid_specs(kw):
    with pytest.raises(InvalidSpec):
        build_leduc(LeducSpec(**kw))


def test_adversary_seat_is_configurable():
    g = build_leduc(LeducSpec(adversary_seat=0))
    h = g.replay([0, 2, 4])
    assert g.current_player(h) == Role.ADVERSARY
