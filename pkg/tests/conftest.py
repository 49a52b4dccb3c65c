import networkx as nx
import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from spectral_cascade.cascade import PropagationTree, generate_tree

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

KINDS = ("path", "star", "random_recursive", "preferential_attachment", "caterpillar")


@st.composite
def trees(draw, min_n=2, max_n=40):
    """Random recursive-shaped trees drawn as parent arrays (parent[k] < k)."""
    n = draw(st.integers(min_n, max_n))
    parent = [-1] + [draw(st.integers(0, k - 1)) for k in range(1, n)]
    return PropagationTree.from_parent(parent)


def to_nx(tree):
    g = nx.Graph()
    g.add_nodes_from(range(tree.n))
    g.add_edges_from(tree.edges())
    return g


def mixed_corpus(count, lo, hi, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = KINDS[i % len(KINDS)]
        n = int(rng.integers(lo, hi + 1))
        out.append(generate_tree(kind, n, int(rng.integers(0, 2**31))))
    return out


@pytest.fixture
def p3():
    return generate_tree("path", 3)


@pytest.fixture
def k13():
    return generate_tree("star", 4)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per criterion; lines are echoed in the terminal summary."""
    def record(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
        print(ACCEPTANCE_LINES[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
