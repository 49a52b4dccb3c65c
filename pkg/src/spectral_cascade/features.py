"""Handcrafted topological features and representation assembly."""

from __future__ import annotations

import numpy as np

from .bounds import BOUND_IDS, BOUNDS, CATEGORIES, bound_vector
from .cascade import PropagationTree
from .properties import (
    entropy,
    exact_properties,
    independence_number,
    subtree_leaf_counts,
    top_fraction_count,
)

STRUCTURAL_IDS = (
    "num_nodes", "num_edges", "depth", "max_breadth", "structural_virality",
    "max_outdegree", "depth_of_max_outdegree", "width_entropy", "leaf_ratio",
    "avg_depth", "var_depth", "avg_leaf_depth", "mean_branching", "var_branching",
    "sackin_index", "colless_index", "num_internal", "degree_entropy", "degree_gini",
    "diameter", "radius", "mean_degree", "max_degree", "chromatic_number",
    "approx_independent_number", "max_adjacent_degree_pair", "top30_degree_sum",
    "top60_degree_sum", "partial_mu_ub_30", "partial_mu_ub_60", "bandwidth",
    "wiener_index", "num_leaves", "num_spanning_trees",
)
CONSTANT_FEATURES = ("chromatic_number", "num_spanning_trees")
MODES = ("bounds", "structural", "both")


def _colless(tree: PropagationTree) -> int:
    leaves = subtree_leaf_counts(tree)
    total = 0
    for kids in tree.children:
        if len(kids) >= 2:
            a, b = sorted((leaves[c] for c in kids), reverse=True)[:2]
            total += a - b
    return int(total)


def _bfs_bandwidth(tree: PropagationTree) -> int:
    """max |i - j| + 1 over non-zero Laplacian entries, nodes in BFS order."""
    pos = np.empty(tree.n, dtype=np.int64)
    pos[tree.bfs_order] = np.arange(tree.n)
    c = np.arange(1, tree.n)
    return int(np.max(np.abs(pos[c] - pos[tree.parent[c]]))) + 1


def _gini(x) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    s = np.sort(x)
    # sum_ij |xi - xj| = 2 * sum_i (2i - n + 1) s_i with 0-based i
    pair_sum = 2.0 * np.sum((2 * np.arange(n) - n + 1) * s)
    return float(pair_sum / (2 * n * x.sum()))


def structural_features(tree: PropagationTree) -> dict:
    """The 34 topological features, keyed in :data:`STRUCTURAL_IDS` order.

    Width entropy is reported as the standard (non-negative) entropy of the
    level-size distribution.  Branching counts children, degree counts
    undirected neighbours.
    """
    props = exact_properties(tree, fractions=(0.3, 0.6))
    n, e = tree.n, tree.n - 1
    depth = tree.depth
    kids = tree.num_children
    deg = tree.degrees
    leaf = tree.is_leaf
    internal = kids > 0
    levels = tree.level_sizes
    max_out = int(kids.max())
    # first node in BFS order achieving the maximum out-degree
    hub = tree.bfs_order[np.argmax(kids[tree.bfs_order] == max_out)]
    t30 = top_fraction_count(n, 0.3)
    t60 = top_fraction_count(n, 0.6)

    values = {
        "num_nodes": n,
        "num_edges": e,
        "depth": int(depth.max()),
        "max_breadth": int(levels.max()),
        "structural_virality": props.average_distance,
        "max_outdegree": max_out,
        "depth_of_max_outdegree": int(depth[hub]),
        "width_entropy": entropy(levels),
        "leaf_ratio": float(leaf.sum()) / n,
        "avg_depth": float(depth.mean()),
        "var_depth": float(depth.var()),
        "avg_leaf_depth": float(depth[leaf].mean()),
        "mean_branching": float(kids[internal].mean()),
        "var_branching": float(kids[internal].var()),
        "sackin_index": int(depth[leaf].sum()),
        "colless_index": _colless(tree),
        "num_internal": int(internal.sum()),
        "degree_entropy": props.degree_entropy,
        "degree_gini": _gini(deg),
        "diameter": props.diameter,
        "radius": props.radius,
        "mean_degree": props.mean_degree,
        "max_degree": props.max_degree,
        "chromatic_number": 2,
        "approx_independent_number": independence_number(tree),
        "max_adjacent_degree_pair": props.max_adjacent_degree_sum,
        "top30_degree_sum": props.top_degree_sums[0.3],
        "top60_degree_sum": props.top_degree_sums[0.6],
        "partial_mu_ub_30": e + t30 * (t30 + 1) / 2,
        "partial_mu_ub_60": e + t60 * (t60 + 1) / 2,
        "bandwidth": _bfs_bandwidth(tree),
        "wiener_index": props.wiener_index,
        "num_leaves": int(leaf.sum()),
        "num_spanning_trees": 1,
    }
    return {k: float(values[k]) for k in STRUCTURAL_IDS}


def feature_ids(mode: str = "bounds", ablate=()) -> list[str]:
    """Column ids of :func:`assemble_representation` for a mode/ablation."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    ablate = set(ablate)
    unknown = ablate - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown categories {sorted(unknown)}")
    ids = []
    if mode in ("structural", "both"):
        ids += list(STRUCTURAL_IDS)
    if mode in ("bounds", "both"):
        ids += [b for b in BOUND_IDS if BOUNDS[b].category not in ablate]
    return ids


def assemble_representation(tree: PropagationTree, mode: str = "bounds", ablate=(),
                            *, with_mask: bool = False):
    """Concatenate structural features and/or bound values.

    Structural features come first when both are requested.  Degenerate
    bound entries are imputed as 0; ``with_mask`` also returns validity flags.
    """
    ids = feature_ids(mode, ablate)
    vals, mask = {}, {}
    if mode in ("structural", "both"):
        vals.update(structural_features(tree))
    if mode in ("bounds", "both"):
        bv = bound_vector(tree)
        for k in BOUND_IDS:
            mask[k] = bv.applicable[k]
            vals[k] = bv.values[k] if bv.applicable[k] else 0.0
    x = np.array([vals[k] for k in ids])
    if with_mask:
        return x, np.array([mask.get(k, True) for k in ids])
    return x
