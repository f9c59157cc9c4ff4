"""Shared constructors for the test suite."""

import random

import pytest

from treelab.ratecalc import Distribution
from treelab.trees import TreeSpec


def make_law(*pairs) -> Distribution:
    return Distribution.from_pairs(pairs)


def random_a_law(rng: random.Random, max_support: int = 6,
                 lo: float = 1e-3, hi: float = 1e3) -> Distribution:
    """A nonnegative finite law with log-uniform support, normalized weights."""
    k = rng.randint(1, max_support)
    support = sorted({10.0 ** rng.uniform(-3, 3) for _ in range(k)})
    support = [min(max(s, lo), hi) for s in support]
    support = sorted(set(support))
    weights = [rng.random() for _ in support]
    total = sum(weights)
    weights = [w / total for w in weights]
    weights[-1] = 1.0 - sum(weights[:-1])
    return Distribution(tuple(support), tuple(weights))


def random_x_law(rng: random.Random, max_support: int = 5,
                 span: float = 5.0) -> Distribution:
    k = rng.randint(2, max_support)
    support = sorted({rng.uniform(-span, span) for _ in range(k)})
    weights = [rng.random() for _ in support]
    total = sum(weights)
    weights = [w / total for w in weights]
    weights[-1] = 1.0 - sum(weights[:-1])
    return Distribution(tuple(support), tuple(weights))


def random_explicit_spec(rng: random.Random, n_vertices: int) -> TreeSpec:
    """A random parent table: vertex i attaches to a uniform earlier vertex."""
    parents = [rng.randrange(i) for i in range(1, n_vertices)]
    return TreeSpec.explicit(parents)


@pytest.fixture
def seeded_rng():
    return random.Random(20240817)
