"""Rooted propagation trees: validation, JSON-lines ingestion and generators.

A tree is stored as a parent array over dense indices ``0..n-1`` with the
root at index 0 and ``parent[0] == -1``.  Trees built from edge lists are
relabelled in BFS order from the root so that matrices are deterministic.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DisconnectedNodes,
    EmptyTree,
    InvalidSize,
    MultipleParents,
    ParseError,
    RootHasParent,
    TreeValidationError,
    UnknownLabel,
    ValidationError,
)

DEFAULT_MIN_N = 3       # keep n > 3
DEFAULT_MAX_N = 10000   # keep n < 10000

TREE_KINDS = ("path", "star", "random_recursive", "preferential_attachment", "caterpillar")


@dataclass(frozen=True, eq=False)
class PropagationTree:
    """Immutable rooted tree; root is index 0."""

    parent: np.ndarray
    id: str = ""
    label: str | None = None
    node_ids: tuple[str, ...] = ()

    def __post_init__(self):
        parent = np.array(self.parent, dtype=np.int64)
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(len(parent))))
        if len(parent) < 2:
            raise InvalidSize(f"tree needs at least 2 nodes, got {len(parent)}")
        if parent[0] != -1 or np.any(parent[1:] < 0) or np.any(parent >= len(parent)):
            raise TreeValidationError("malformed parent array")

    @classmethod
    def from_parent(cls, parent: Sequence[int], **kw) -> "PropagationTree":
        tree = cls(np.asarray(parent), **kw)
        tree.bfs_order  # raises on cycles / unreachable nodes
        return tree

    def __eq__(self, other):
        if not isinstance(other, PropagationTree):
            return NotImplemented
        return (self.id == other.id and self.label == other.label
                and self.node_ids == other.node_ids
                and np.array_equal(self.parent, other.parent))

    def __hash__(self):
        return hash((self.id, self.label, self.parent.tobytes()))

    def __repr__(self):
        return f"PropagationTree(id={self.id!r}, label={self.label!r}, n={self.n})"

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return 0

    @property
    def num_edges(self) -> int:
        return self.n - 1

    def edges(self) -> list[tuple[int, int]]:
        """(parent, child) pairs in child-index order."""
        return [(int(self.parent[c]), c) for c in range(1, self.n)]

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for c in range(1, self.n):
            kids[self.parent[c]].append(c)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def bfs_order(self) -> np.ndarray:
        order = [0]
        seen = np.zeros(self.n, dtype=bool)
        seen[0] = True
        i = 0
        while i < len(order):
            for c in self.children[order[i]]:
                if seen[c]:
                    raise CycleDetected("node revisited", [c])
                seen[c] = True
                order.append(c)
            i += 1
        if len(order) != self.n:
            raise DisconnectedNodes("nodes unreachable from root", np.flatnonzero(~seen).tolist())
        return np.array(order)

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for v in self.bfs_order[1:]:
            d[v] = d[self.parent[v]] + 1
        return d

    @cached_property
    def num_children(self) -> np.ndarray:
        return np.bincount(self.parent[1:], minlength=self.n)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = self.num_children.copy()
        deg[1:] += 1
        return deg

    @cached_property
    def is_leaf(self) -> np.ndarray:
        """Non-root nodes without children."""
        mask = self.num_children == 0
        mask[0] = False
        return mask

    @cached_property
    def level_sizes(self) -> np.ndarray:
        return np.bincount(self.depth)

    def to_record(self) -> dict:
        ids = self.node_ids
        return {
            "id": self.id,
            "label": self.label,
            "root": ids[0],
            "edges": [[ids[p], ids[c]] for p, c in self.edges()],
        }


def validate_tree(edges: Iterable[Sequence], root, *, id: str = "", label: str | None = None) -> PropagationTree:
    """Turn a raw (parent, child) edge list into a BFS-indexed tree.

    Raises one of EmptyTree, CycleDetected, MultipleParents, RootHasParent or
    DisconnectedNodes, each carrying the offending node ids.
    """
    edges = [(str(p), str(c)) for p, c in edges]
    root = str(root)
    if not edges:
        raise EmptyTree("no edges", [root])

    parent_of: dict[str, str] = {}
    children: dict[str, list[str]] = {}
    nodes: dict[str, None] = {root: None}
    dupes = [c for (p, c), k in Counter(edges).items() if k > 1]
    if dupes:
        raise MultipleParents("duplicate edges into", sorted(dupes))
    for p, c in edges:
        if p == c:
            raise CycleDetected("self-loop", [p])
        nodes.setdefault(p)
        nodes.setdefault(c)
        if c in parent_of:
            raise MultipleParents("node has more than one parent", [c])
        parent_of[c] = p
        children.setdefault(p, []).append(c)

    if root in parent_of:
        chain, cur = [root], parent_of[root]
        while cur is not None and cur not in chain:
            chain.append(cur)
            cur = parent_of.get(cur)
        if cur is not None:
            raise CycleDetected("cycle through root", chain[chain.index(cur):])
        raise RootHasParent("declared root has ancestors", chain[1:])

    order = [root]
    index = {root: 0}
    q = deque([root])
    while q:
        u = q.popleft()
        for c in children.get(u, ()):
            index[c] = len(order)
            order.append(c)
            q.append(c)

    if len(order) != len(nodes):
        unreached = [v for v in nodes if v not in index]
        for start in unreached:
            chain, cur = [], start
            while cur is not None and cur not in chain:
                chain.append(cur)
                cur = parent_of.get(cur)
            if cur is not None:
                raise CycleDetected("parent cycle", chain[chain.index(cur):])
        raise DisconnectedNodes("nodes unreachable from root", sorted(unreached))

    parent = np.full(len(order), -1, dtype=np.int64)
    for v, i in index.items():
        if v != root:
            parent[i] = index[parent_of[v]]
    return PropagationTree(parent, id=id, label=label, node_ids=tuple(order))


def generate_tree(kind: str, n: int, seed: int | None = 0, *, id: str | None = None,
                  label: str | None = None) -> PropagationTree:
    """Synthetic tree of a named family; a pure function of (kind, n, seed)."""
    if n < 2:
        raise InvalidSize(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    parent = np.full(n, -1, dtype=np.int64)
    if kind == "path":
        parent[1:] = np.arange(n - 1)
    elif kind == "star":
        parent[1:] = 0
    elif kind == "random_recursive":
        for k in range(1, n):
            parent[k] = rng.integers(0, k)
    elif kind == "preferential_attachment":
        deg = np.zeros(n)
        for k in range(1, n):
            if k == 1:
                p = 0
            else:
                w = deg[:k]
                p = rng.choice(k, p=w / w.sum())
            parent[k] = p
            deg[p] += 1
            deg[k] += 1
    elif kind == "caterpillar":
        spine = max(1, -(-n // 3))
        parent[1:spine] = np.arange(spine - 1)
        for k in range(spine, n):
            parent[k] = rng.integers(0, spine)
    else:
        raise ValueError(f"unknown tree kind {kind!r}; expected one of {TREE_KINDS}")
    edges = [(int(parent[c]), c) for c in range(1, n)]
    return validate_tree(edges, 0, id=id if id is not None else f"{kind}-{n}-{seed}", label=label)


# -- datasets ---------------------------------------------------------------

@dataclass
class LoadReport:
    loaded: int = 0
    filtered: int = 0
    rejected: int = 0
    reasons: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"loaded": self.loaded, "filtered": self.filtered,
                "rejected": self.rejected, "reasons": self.reasons}


@dataclass(frozen=True)
class CascadeDataset:
    trees: tuple[PropagationTree, ...]
    class_names: tuple[str, ...]
    source: str = field(default="", compare=False)
    report: LoadReport | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.trees)

    def labels(self) -> np.ndarray:
        """Integer class index per tree."""
        lookup = {c: i for i, c in enumerate(self.class_names)}
        return np.array([lookup[t.label] for t in self.trees], dtype=np.int64)

    def subset(self, idx) -> "CascadeDataset":
        return CascadeDataset(tuple(self.trees[i] for i in idx), self.class_names, self.source)


def load_dataset(path, fmt: str = "jsonl", *, min_n: int = DEFAULT_MIN_N, max_n: int = DEFAULT_MAX_N,
                 class_names: Sequence[str] | None = None, on_invalid: str = "raise") -> CascadeDataset:
    """Read cascades from a JSON-lines file.

    Trees are kept when ``min_n < n < max_n``.  With ``on_invalid="skip"``
    invalid cascades are counted in the report instead of raising.
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported format {fmt!r}")
    if on_invalid not in ("raise", "skip"):
        raise ValueError("on_invalid must be 'raise' or 'skip'")
    report = LoadReport()
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tid, label, root, edges = str(rec["id"]), rec["label"], rec["root"], rec["edges"]
                if not isinstance(edges, list) or any(len(e) != 2 for e in edges):
                    raise ValueError("edges must be a list of [parent, child] pairs")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(lineno, str(exc)) from exc
            label = None if label is None else str(label)
            if class_names is not None and label not in class_names:
                raise UnknownLabel(label, lineno)
            try:
                tree = validate_tree(edges, root, id=tid, label=label)
            except TreeValidationError as exc:
                if on_invalid == "raise":
                    raise ValidationError(exc, lineno, tid) from exc
                report.rejected += 1
                report.reasons.append({"line": lineno, "id": tid, "reason": type(exc).__name__,
                                       "detail": str(exc)})
                continue
            if not (min_n < tree.n < max_n):
                report.filtered += 1
                continue
            trees.append(tree)
    report.loaded = len(trees)
    if class_names is None:
        class_names = sorted({t.label for t in trees if t.label is not None})
    return CascadeDataset(tuple(trees), tuple(class_names), str(path), report)


def save_dataset(dataset: CascadeDataset | Iterable[PropagationTree], path) -> None:
    trees = dataset.trees if isinstance(dataset, CascadeDataset) else dataset
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for t in trees:
            fh.write(json.dumps(t.to_record()) + "\n")
