"""Exact combinatorial quantities of a rooted tree (BFS and counting only)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cascade import PropagationTree


def top_fraction_count(n: int, fraction: float) -> int:
    """``ceil(fraction * n)`` as used by the top-m / partial-sum quantities."""
    return max(1, math.ceil(fraction * n - 1e-12))


def neighbours(tree: PropagationTree) -> list[list[int]]:
    nb = [list(ch) for ch in tree.children]
    for c in range(1, tree.n):
        nb[c].append(int(tree.parent[c]))
    return nb


def bfs_distances(nb: list[list[int]], source: int) -> np.ndarray:
    dist = np.full(len(nb), -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            du = dist[u] + 1
            for w in nb[u]:
                if dist[w] < 0:
                    dist[w] = du
                    nxt.append(w)
        frontier = nxt
    return dist


def subtree_sizes(tree: PropagationTree) -> np.ndarray:
    size = np.ones(tree.n, dtype=np.int64)
    for v in tree.bfs_order[::-1][:-1]:
        size[tree.parent[v]] += size[v]
    return size


def subtree_leaf_counts(tree: PropagationTree) -> np.ndarray:
    leaves = (tree.num_children == 0).astype(np.int64)
    for v in tree.bfs_order[::-1][:-1]:
        leaves[tree.parent[v]] += leaves[v]
    return leaves


def independence_number(tree: PropagationTree) -> int:
    """Maximum independent set size by the standard tree DP."""
    take = np.ones(tree.n, dtype=np.int64)
    skip = np.zeros(tree.n, dtype=np.int64)
    for v in tree.bfs_order[::-1]:
        for c in tree.children[v]:
            take[v] += skip[c]
            skip[v] += max(take[c], skip[c])
    return int(max(take[0], skip[0]))


def entropy(counts) -> float:
    """Shannon entropy (natural log) of a histogram."""
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class ExactProperties:
    num_nodes: int
    num_edges: int
    max_degree: int
    mean_degree: float
    diameter: int
    radius: int
    depth: int
    max_breadth: int
    level_sizes: tuple[int, ...]
    leaf_count: int
    internal_count: int
    mean_branching: float
    degree_entropy: float
    wiener_index: int
    average_distance: float
    max_adjacent_degree_sum: int
    independence_number: int
    vertex_connectivity: int = 1
    top_degree_sums: dict = field(default_factory=dict)

    @property
    def first_level_size(self) -> int:
        return self.level_sizes[1] if len(self.level_sizes) > 1 else 0

    def get(self, name: str) -> float:
        """Look up a property by name, including ``top_degree_sum@0.3`` style keys."""
        if name.startswith("top_degree_sum@"):
            return self.top_degree_sums[float(name.split("@", 1)[1])]
        if name == "first_level_size":
            return self.first_level_size
        return getattr(self, name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level_sizes"] = list(self.level_sizes)
        d["top_degree_sums"] = {str(k): v for k, v in self.top_degree_sums.items()}
        return d


def exact_properties(tree: PropagationTree, fractions=(0.3, 0.6)) -> ExactProperties:
    n = tree.n
    deg = tree.degrees
    nb = neighbours(tree)
    d0 = bfs_distances(nb, 0)
    a = int(np.argmax(d0))
    da = bfs_distances(nb, a)
    b = int(np.argmax(da))
    db = bfs_distances(nb, b)
    ecc = np.maximum(da, db)

    size = subtree_sizes(tree)
    wiener = int(np.sum(size[1:] * (n - size[1:])))

    internal = int(np.count_nonzero(tree.num_children))
    levels = tree.level_sizes
    c = np.arange(1, n)
    adj_sum = int(np.max(deg[c] + deg[tree.parent[c]]))
    sorted_deg = np.sort(deg)[::-1]
    tops = {f: int(sorted_deg[:top_fraction_count(n, f)].sum()) for f in fractions}

    return ExactProperties(
        num_nodes=n,
        num_edges=n - 1,
        max_degree=int(deg.max()),
        mean_degree=2.0 * (n - 1) / n,
        diameter=int(da[b]),
        radius=int(ecc.min()),
        depth=int(tree.depth.max()),
        max_breadth=int(levels.max()),
        level_sizes=tuple(int(x) for x in levels),
        leaf_count=int(np.count_nonzero(tree.is_leaf)),
        internal_count=internal,
        mean_branching=(n - 1) / internal,
        degree_entropy=entropy(np.bincount(deg)),
        wiener_index=wiener,
        average_distance=wiener / (n * (n - 1) / 2),
        max_adjacent_degree_sum=adj_sum,
        independence_number=independence_number(tree),
        top_degree_sums=tops,
    )
