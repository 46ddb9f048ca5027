import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stac.efg import compile_tree
from stac.games import CoordinationGameSpec, LeducSpec, build_coordination, build_leduc

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def balanced():
    return build_coordination(CoordinationGameSpec.balanced())


@pytest.fixture(scope="session")
def imbalanced():
    return build_coordination(CoordinationGameSpec.imbalanced())


@pytest.fixture(scope="session")
def balanced_tree(balanced):
    return compile_tree(balanced, keep_histories=True)


@pytest.fixture(scope="session")
def imbalanced_tree(imbalanced):
    return compile_tree(imbalanced, keep_histories=True)


@pytest.fixture(scope="session")
def small_leduc():
    # two ranks, two suits: the smallest deck that still deals a public card
    return build_leduc(LeducSpec(ranks=2, suits=2, max_raises_per_round=1))


@pytest.fixture(scope="session")
def small_leduc_tree(small_leduc):
    return compile_tree(small_leduc, keep_histories=True)


@pytest.fixture(scope="session")
def leduc():
    return build_leduc()


@pytest.fixture(scope="session")
def leduc_tree(leduc):
    return compile_tree(leduc)


def random_policy(tree, rng, sparsity=0.0):
    """Random behavioral table over every infoset; some actions zeroed."""
    pol = np.zeros((len(tree.infosets), tree.game.num_actions))
    for s in tree.infosets:
        w = rng.random(len(s.legal))
        if sparsity and len(s.legal) > 1:
            w[rng.random(len(s.legal)) < sparsity] = 0.0
            if w.sum() == 0:
                w[rng.integers(len(s.legal))] = 1.0
        pol[s.index, list(s.legal)] = w / w.sum()
    return pol


# acceptance tests append "PASS/FAIL criterion N ..." lines here
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
