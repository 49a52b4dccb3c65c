"""First-order eigenvalue estimates under leaf migration.

Moving leaf ``v`` from ``p_old`` to ``p_new`` deletes edge (v, p_old) and adds
edge (v, p_new).  With orthonormal eigenvectors ``u_i`` the first-order
changes are

    Laplacian:  dmu_i  ~ (u_i[v] - u_i[p_new])^2 - (u_i[v] - u_i[p_old])^2
    adjacency:  dlam_i ~ 2 u_i[v] (u_i[p_new] - u_i[p_old])

Both are invariant under a sign flip of ``u_i``.  Degenerate eigenvalues are
not rotated into a perturbation-adapted basis; estimates are taken per
returned eigenvector.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .cascade import PropagationTree, generate_tree
from .errors import InsufficientTrees, InvalidMigration
from .spectra import SpectrumSet, adjacency_matrix, laplacian_matrix, symmetric_eigh

log = logging.getLogger(__name__)

BENCHMARK_SIZES = (10, 20, 30, 50, 75, 100, 150)


@dataclass(frozen=True)
class Migration:
    v: int
    p_old: int
    p_new: int

    def as_list(self) -> list[int]:
        return [self.v, self.p_old, self.p_new]


@dataclass(frozen=True, eq=False)
class PerturbationEstimate:
    delta_mu: np.ndarray | None
    delta_lambda: np.ndarray | None
    basis: SpectrumSet


def check_migration(tree: PropagationTree, m: Migration) -> None:
    n = tree.n
    if not (0 <= m.v < n and 0 <= m.p_old < n and 0 <= m.p_new < n):
        raise InvalidMigration(f"{m} has indices outside 0..{n - 1}")
    if m.v == tree.root:
        raise InvalidMigration("the root cannot migrate")
    if not tree.is_leaf[m.v]:
        raise InvalidMigration(f"node {m.v} is not a leaf")
    if tree.parent[m.v] != m.p_old:
        raise InvalidMigration(f"node {m.v} has parent {tree.parent[m.v]}, not {m.p_old}")
    if m.p_new in (m.v, m.p_old):
        raise InvalidMigration(f"new parent {m.p_new} must differ from v and p_old")


def apply_migration(tree: PropagationTree, m: Migration) -> PropagationTree:
    check_migration(tree, m)
    parent = tree.parent.copy()
    parent[m.v] = m.p_new
    return PropagationTree(parent, id=tree.id, label=tree.label, node_ids=tree.node_ids)


def migration_arrays(tree: PropagationTree):
    """(v, p_old, p_new) index arrays of all leaf migrations.

    Order is ascending leaf, then ascending new parent.
    """
    n = tree.n
    leaves = np.flatnonzero(tree.is_leaf)
    if leaves.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    targets = np.broadcast_to(np.arange(n), (leaves.size, n))
    V = np.broadcast_to(leaves[:, None], targets.shape)
    P = np.broadcast_to(tree.parent[leaves][:, None], targets.shape)
    keep = (targets != V) & (targets != P)
    return V[keep], P[keep], targets[keep]


def enumerate_migrations(tree: PropagationTree) -> list[Migration]:
    V, P, Q = migration_arrays(tree)
    return [Migration(int(v), int(p), int(q)) for v, p, q in zip(V, P, Q)]


def delta_mu_first_order(U: np.ndarray, v, p_old, p_new) -> np.ndarray:
    """Laplacian first-order change for one or many migrations.

    ``U`` holds eigenvectors as columns; index arguments may be arrays of
    length M, giving an (M, n_eigs) result.
    """
    uv = U[v]
    return (uv - U[p_new]) ** 2 - (uv - U[p_old]) ** 2


def delta_lambda_first_order(U: np.ndarray, v, p_old, p_new) -> np.ndarray:
    return 2.0 * U[v] * (U[p_new] - U[p_old])


def add_edge_delta_mu(U, r, c):
    return (U[r] - U[c]) ** 2


def delete_edge_delta_mu(U, r, c):
    return -((U[r] - U[c]) ** 2)


def _check_indices(spectra: SpectrumSet, m: Migration, tree):
    if tree is not None:
        check_migration(tree, m)
    elif m.p_new in (m.v, m.p_old) or max(m.v, m.p_old, m.p_new) >= spectra.n:
        raise InvalidMigration(str(m))


def estimate_delta_mu(spectra: SpectrumSet, m: Migration, tree: PropagationTree | None = None
                      ) -> PerturbationEstimate:
    _check_indices(spectra, m, tree)
    d = delta_mu_first_order(spectra.vecs("mu"), m.v, m.p_old, m.p_new)
    return PerturbationEstimate(delta_mu=d, delta_lambda=None, basis=spectra)


def estimate_delta_lambda(spectra: SpectrumSet, m: Migration, tree: PropagationTree | None = None
                          ) -> PerturbationEstimate:
    _check_indices(spectra, m, tree)
    d = delta_lambda_first_order(spectra.vecs("lambda"), m.v, m.p_old, m.p_new)
    return PerturbationEstimate(delta_mu=None, delta_lambda=d, basis=spectra)


# -- benchmark --------------------------------------------------------------

# target name -> (family, position in the descending spectrum)
TARGETS = {
    "lambda1": ("lambda", 0),
    "mu1": ("mu", 0),
    "mu_n_1": ("mu", -2),
}


def _target_matrix(tree, family):
    return adjacency_matrix(tree) if family == "lambda" else laplacian_matrix(tree)


def _migrated_matrix(M, family, v, p_old, p_new):
    M = M.copy()
    M[v, p_old] = M[p_old, v] = 0.0
    M[v, p_new] = M[p_new, v] = 1.0
    if family == "mu":
        M[p_old, p_old] -= 1.0
        M[p_new, p_new] += 1.0
    return M


def approx_target_deltas(tree: PropagationTree, target: str = "lambda1"):
    """First-order change of the target eigenvalue for every candidate."""
    family, pos = TARGETS[target]
    _, U = symmetric_eigh(_target_matrix(tree, family), family)
    V, P, Q = migration_arrays(tree)
    u = U[:, pos]
    if family == "lambda":
        return delta_lambda_first_order(u, V, P, Q)
    return delta_mu_first_order(u, V, P, Q)


def exact_target_deltas(tree: PropagationTree, target: str = "lambda1"):
    """Target eigenvalue change by re-decomposing every migrated tree.

    Eigenvalues are paired by sorted position.
    """
    family, pos = TARGETS[target]
    M = _target_matrix(tree, family)
    base = np.linalg.eigvalsh(M)[::-1][pos]
    V, P, Q = migration_arrays(tree)
    out = np.empty(len(V))
    for k, (v, p, q) in enumerate(zip(V, P, Q)):
        out[k] = np.linalg.eigvalsh(_migrated_matrix(M, family, v, p, q))[::-1][pos] - base
    return out


@dataclass
class BenchmarkRow:
    size: int
    method: str
    wall_time_mean: float
    wall_time_std: float
    mae_mean: float
    mae_std: float
    spearman_mean: float
    spearman_std: float
    trees: int


BENCHMARK_COLUMNS = ("size", "method", "wall_time_mean", "wall_time_std", "mae_mean",
                     "mae_std", "spearman_mean", "spearman_std")


def _pick_trees(pool, size, samples, rng, window):
    near = [t for t in pool if abs(t.n - size) <= window]
    if not near:
        raise InsufficientTrees(size)
    if len(near) > samples:
        idx = rng.choice(len(near), size=samples, replace=False)
        near = [near[i] for i in sorted(idx)]
    return near


def benchmark_approximation(sizes=BENCHMARK_SIZES, samples: int = 20, target: str = "lambda1", *,
                            trees=None, kind: str = "random_recursive", seed: int = 0,
                            window: int = 3, return_records: bool = False):
    """Compare first-order estimates with exact re-decomposition.

    Trees come from ``trees`` (those within ``window`` nodes of each size,
    up to ``samples`` of them) or are generated as ``kind`` with exactly the
    target size.  Wall time is per migration: the approximate method pays one
    eigendecomposition plus all estimates, the exact one pays one
    eigendecomposition per candidate.
    """
    from .stats import correlation  # local import keeps module deps acyclic
    from .errors import DegenerateInput

    if target not in TARGETS:
        raise ValueError(f"target must be one of {sorted(TARGETS)}")
    rng = np.random.default_rng(seed)
    rows, records = [], []
    for size in sizes:
        if trees is not None:
            chosen = _pick_trees(trees, size, samples, rng, window)
        else:
            seeds = rng.integers(0, 2**31, size=samples)
            chosen = [generate_tree(kind, size, int(s)) for s in seeds]
        per = {"approx": [], "exact": []}
        maes, rhos = [], []
        for tree in chosen:
            m = len(migration_arrays(tree)[0])
            if m == 0:
                continue
            t0 = time.perf_counter()
            est = approx_target_deltas(tree, target)
            t1 = time.perf_counter()
            ex = exact_target_deltas(tree, target)
            t2 = time.perf_counter()
            per["approx"].append((t1 - t0) / m)
            per["exact"].append((t2 - t1) / m)
            mae = float(np.mean(np.abs(est - ex)))
            try:
                rho = correlation(est, ex, "spearman")[0]
            except DegenerateInput:
                rho = float("nan")
            maes.append(mae)
            rhos.append(rho)
            records.append({"size": size, "tree": tree.id, "n": tree.n, "candidates": m,
                            "approx_time": per["approx"][-1], "exact_time": per["exact"][-1],
                            "mae": mae, "spearman": rho})
        if not maes:
            raise InsufficientTrees(size)
        rho_arr = np.array(rhos)
        rho_ok = rho_arr[np.isfinite(rho_arr)]
        for method in ("approx", "exact"):
            times = np.array(per[method])
            mae_m, mae_s = (float(np.mean(maes)), float(np.std(maes))) if method == "approx" else (0.0, 0.0)
            rho_m, rho_s = ((float(rho_ok.mean()), float(rho_ok.std())) if method == "approx"
                            else (1.0, 0.0))
            rows.append(BenchmarkRow(size, method, float(times.mean()), float(times.std()),
                                     mae_m, mae_s, rho_m, rho_s, len(times)))
        log.info("size %d: approx %.2e s, exact %.2e s, mae %.4f, rho %.3f", size,
                 np.mean(per["approx"]), np.mean(per["exact"]), np.mean(maes), rho_ok.mean())
    return (rows, records) if return_records else rows
