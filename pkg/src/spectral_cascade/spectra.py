"""Matrices of a tree and their dense symmetric eigendecompositions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import PropagationTree
from .errors import EigensolverFailure

KINDS = ("adjacency", "laplacian", "normalized")


def adjacency_matrix(tree: PropagationTree) -> np.ndarray:
    n = tree.n
    A = np.zeros((n, n))
    c = np.arange(1, n)
    p = tree.parent[1:]
    A[c, p] = 1.0
    A[p, c] = 1.0
    return A


def laplacian_matrix(tree: PropagationTree) -> np.ndarray:
    A = adjacency_matrix(tree)
    return np.diag(A.sum(axis=1)) - A


def normalized_laplacian_matrix(tree: PropagationTree) -> np.ndarray:
    A = adjacency_matrix(tree)
    d = A.sum(axis=1)
    assert np.all(d > 0), "trees with n >= 2 have no isolated nodes"
    s = 1.0 / np.sqrt(d)
    return np.eye(tree.n) - s[:, None] * A * s[None, :]


_BUILDERS = {
    "adjacency": adjacency_matrix,
    "laplacian": laplacian_matrix,
    "normalized": normalized_laplacian_matrix,
}


def symmetric_eigh(M: np.ndarray, kind: str = "matrix", vectors: bool = True):
    """Eigenpairs sorted descending, eigenvector sign fixed so the
    largest-magnitude entry of each column is positive."""
    try:
        if not vectors:
            return np.linalg.eigvalsh(M)[::-1].copy(), None
        w, U = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(kind, M.shape[0], exc) from exc
    w = w[::-1].copy()
    U = U[:, ::-1].copy()
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U *= signs
    return w, U


@dataclass(frozen=True, eq=False)
class SpectrumSet:
    """Spectra of one tree.  Arrays are descending; vectors are columns."""

    n: int
    degrees: np.ndarray
    adjacency_eigs: np.ndarray | None = None
    adjacency_vecs: np.ndarray | None = None
    laplacian_eigs: np.ndarray | None = None
    laplacian_vecs: np.ndarray | None = None
    normalized_eigs: np.ndarray | None = None
    normalized_vecs: np.ndarray | None = None

    # short aliases following the usual lambda / mu / nu naming
    @property
    def lam(self):
        return self.adjacency_eigs

    @property
    def mu(self):
        return self.laplacian_eigs

    @property
    def nu(self):
        return self.normalized_eigs

    def eigs(self, family: str) -> np.ndarray:
        arr = {"lambda": self.adjacency_eigs, "mu": self.laplacian_eigs,
               "nu": self.normalized_eigs}[family]
        if arr is None:
            raise KeyError(f"{family} spectrum was not computed")
        return arr

    def vecs(self, family: str) -> np.ndarray:
        arr = {"lambda": self.adjacency_vecs, "mu": self.laplacian_vecs,
               "nu": self.normalized_vecs}[family]
        if arr is None:
            raise KeyError(f"{family} eigenvectors were not computed")
        return arr

    def to_dict(self, vectors: bool = False) -> dict:
        out = {}
        for key, arr in (("lambda", self.adjacency_eigs), ("mu", self.laplacian_eigs),
                         ("nu", self.normalized_eigs)):
            if arr is not None:
                out[key] = arr.tolist()
        if vectors:
            for key, arr in (("lambda_vecs", self.adjacency_vecs), ("mu_vecs", self.laplacian_vecs),
                             ("nu_vecs", self.normalized_vecs)):
                if arr is not None:
                    out[key] = arr.tolist()
        return out


def decompose(tree: PropagationTree, which=KINDS, vectors: bool = True) -> SpectrumSet:
    """Full eigendecomposition of the requested matrices of ``tree``."""
    which = (which,) if isinstance(which, str) else tuple(which)
    unknown = set(which) - set(KINDS)
    if unknown:
        raise ValueError(f"unknown matrix kinds {sorted(unknown)}")
    fields = {}
    for kind in which:
        w, U = symmetric_eigh(_BUILDERS[kind](tree), kind, vectors)
        fields[f"{kind}_eigs"] = w
        fields[f"{kind}_vecs"] = U
    return SpectrumSet(n=tree.n, degrees=tree.degrees.copy(), **fields)


def distinct_count(eigs, tol: float | None = None) -> int:
    """Number of eigenvalue clusters; neighbours closer than ``tol`` merge.

    Default tolerance is ``1e-6 * max(1, |largest|)``.
    """
    w = np.sort(np.asarray(eigs, dtype=float))
    if w.size == 0:
        return 0
    if tol is None:
        tol = 1e-6 * max(1.0, float(np.max(np.abs(w))))
    return int(1 + np.count_nonzero(np.diff(w) > tol))


def check_invariants(spec: SpectrumSet, tol: float = 1e-8) -> list[str]:
    """Return descriptions of violated spectrum invariants (empty if none).

    Tolerances are relative to ``max(1, scale)`` of each quantity.
    """
    n = spec.n
    bad = []

    def close(a, b, scale=1.0):
        return abs(a - b) <= tol * max(1.0, abs(scale))

    for name, w, U in (("lambda", spec.adjacency_eigs, spec.adjacency_vecs),
                       ("mu", spec.laplacian_eigs, spec.laplacian_vecs),
                       ("nu", spec.normalized_eigs, spec.normalized_vecs)):
        if w is None:
            continue
        if np.any(np.diff(w) > tol * max(1.0, abs(w[0]))):
            bad.append(f"{name} not sorted descending")
        if U is not None and not np.allclose(U.T @ U, np.eye(n), atol=max(tol, 1e-10) * n):
            bad.append(f"{name} eigenvectors not orthonormal")

    if spec.laplacian_eigs is not None:
        mu = spec.laplacian_eigs
        if not close(mu[-1], 0.0, mu[0]):
            bad.append(f"mu_n = {mu[-1]!r} != 0")
        if not close(mu.sum(), 2.0 * (n - 1), 2.0 * (n - 1)):
            bad.append(f"sum mu = {mu.sum()!r} != 2(n-1)")
        if not close(mu.sum(), float(spec.degrees.sum()), mu.sum()):
            bad.append("sum mu != trace from degrees")
    if spec.normalized_eigs is not None:
        nu = spec.normalized_eigs
        if nu.min() < -tol * 2 or nu.max() > 2 + tol * 2:
            bad.append("nu outside [0, 2]")
        if not close(nu[-1], 0.0, 2.0):
            bad.append(f"nu_n = {nu[-1]!r} != 0")
        if nu.sum() > n + tol * n:
            bad.append("sum nu > n")
        if not close(nu[0], 2.0, 2.0):
            bad.append(f"nu_1 = {nu[0]!r} != 2 (bipartite)")
    if spec.adjacency_eigs is not None:
        lam = spec.adjacency_eigs
        scale = max(1.0, abs(lam[0]))
        if abs(lam.sum()) > tol * scale * n:
            bad.append(f"sum lambda = {lam.sum()!r} != 0")
        if np.max(np.abs(lam + lam[::-1])) > tol * scale:
            bad.append("adjacency spectrum not symmetric about 0")
    return bad
