import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import KINDS, to_nx, trees
from spectral_cascade.cascade import (
    CascadeDataset,
    PropagationTree,
    generate_tree,
    load_dataset,
    save_dataset,
    validate_tree,
)
from spectral_cascade.errors import (
    CycleDetected,
    DisconnectedNodes,
    EmptyTree,
    InvalidSize,
    MultipleParents,
    ParseError,
    RootHasParent,
    UnknownLabel,
    ValidationError,
)


def test_small_tree_normalised():
    t = validate_tree([("r", "a"), ("r", "b"), ("a", "c")], "r")
    assert t.n == 4
    assert t.depth.max() == 2
    assert t.node_ids == ("r", "a", "b", "c")
    assert t.parent.tolist() == [-1, 0, 0, 1]


def test_two_cycle_rejected():
    with pytest.raises(CycleDetected):
        validate_tree([("r", "a"), ("a", "r")], "r")


def test_forest_names_disconnected_nodes():
    with pytest.raises(DisconnectedNodes) as exc:
        validate_tree([("r", "a"), ("b", "c")], "r")
    assert set(exc.value.nodes) == {"b", "c"}


def test_other_structural_errors():
    with pytest.raises(EmptyTree):
        validate_tree([], "r")
    with pytest.raises(MultipleParents):
        validate_tree([("r", "a"), ("b", "a"), ("r", "b")], "r")
    with pytest.raises(MultipleParents):
        validate_tree([("r", "a"), ("r", "a")], "r")
    with pytest.raises(CycleDetected):
        validate_tree([("r", "r")], "r")
    with pytest.raises(CycleDetected):
        validate_tree([("r", "a"), ("b", "c"), ("c", "b")], "r")


def test_integer_and_string_ids_agree():
    a = validate_tree([(0, 1), (0, 2)], 0)
    b = validate_tree([("0", "1"), ("0", "2")], "0")
    assert np.array_equal(a.parent, b.parent)


def test_generate_families():
    star = generate_tree("star", 4)
    assert star.num_children[0] == 3 and star.is_leaf[1:].all()
    path = generate_tree("path", 5)
    assert path.depth.max() == 4 and path.is_leaf.sum() == 1
    a = generate_tree("random_recursive", 100, 11)
    b = generate_tree("random_recursive", 100, 11)
    assert np.array_equal(a.parent, b.parent)
    with pytest.raises(InvalidSize):
        generate_tree("path", 1)
    with pytest.raises(ValueError):
        generate_tree("lattice", 5)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n", [2, 3, 17, 60])
def test_generated_trees_are_trees(kind, n):
    t = generate_tree(kind, n, 5)
    g = to_nx(t)
    assert nx.is_tree(g)
    assert t.num_edges == n - 1
    assert len(t.bfs_order) == n


@given(trees())
def test_edges_and_reachability(t):
    assert len(t.edges()) == t.n - 1
    assert nx.is_tree(to_nx(t))
    assert sorted(t.bfs_order.tolist()) == list(range(t.n))


@given(trees(), st.randoms())
def test_relabelling_preserves_shape(t, rnd):
    labels = [f"x{i}" for i in range(t.n)]
    rnd.shuffle(labels)
    edges = [(labels[p], labels[c]) for p, c in t.edges()]
    rnd.shuffle(edges)
    u = validate_tree(edges, labels[0])
    assert nx.is_isomorphic(to_nx(t), to_nx(u))
    assert sorted(u.degrees.tolist()) == sorted(t.degrees.tolist())


def test_malformed_parent_array():
    with pytest.raises(Exception):
        PropagationTree.from_parent([-1, 2, 1])


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def test_load_filters_small_trees(tmp_path):
    f = tmp_path / "d.jsonl"
    _write(f, [{"id": "a", "label": "fake", "root": "r", "edges": [["r", "x"], ["r", "y"]]}])
    ds = load_dataset(f)
    assert len(ds) == 0
    assert ds.report.filtered == 1


def test_parse_error_line_number(tmp_path):
    f = tmp_path / "d.jsonl"
    good = json.dumps({"id": "a", "label": "fake", "root": 0, "edges": [[0, 1], [0, 2], [0, 3]]})
    f.write_text("\n".join([good] * 6 + ["{not json"]) + "\n")
    with pytest.raises(ParseError) as exc:
        load_dataset(f)
    assert exc.value.line == 7


def test_unknown_label_and_invalid_tree(tmp_path):
    f = tmp_path / "d.jsonl"
    _write(f, [{"id": "a", "label": "satire", "root": 0, "edges": [[0, 1], [0, 2], [0, 3]]}])
    with pytest.raises(UnknownLabel):
        load_dataset(f, class_names=["fake", "real"])
    _write(f, [{"id": "b", "label": "fake", "root": 0, "edges": [[0, 1], [2, 3]]},
               {"id": "c", "label": "fake", "root": 0, "edges": [[0, 1], [0, 2], [1, 3]]}])
    with pytest.raises(ValidationError):
        load_dataset(f)
    ds = load_dataset(f, on_invalid="skip")
    assert len(ds) == 1 and ds.report.rejected == 1
    assert ds.report.reasons[0]["reason"] == "DisconnectedNodes"


def test_root_with_parent_rejected():
    with pytest.raises((RootHasParent, CycleDetected)):
        validate_tree([("a", "r"), ("r", "b")], "r")


def test_round_trip(tmp_path):
    trees_ = [generate_tree(k, 12, s, label=("fake" if s % 2 else "real"))
              for s, k in enumerate(KINDS)]
    ds = CascadeDataset(tuple(trees_), ("fake", "real"))
    f = tmp_path / "rt.jsonl"
    save_dataset(ds, f)
    back = load_dataset(f)
    assert back == ds
    assert back.labels().tolist() == ds.labels().tolist()
