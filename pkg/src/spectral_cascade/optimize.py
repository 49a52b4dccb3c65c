"""Greedy structural optimisation over leaf migrations.

Each iteration enumerates every leaf migration of the current tree, scores
all candidates, and accepts the best one when it beats the current objective
``phi = d * value`` by more than ``tau``.  Ties go to the first candidate in
enumeration order.

Two objectives are supported:

* score-guided: ``value`` is a classifier's probability of a target class;
  every candidate is re-featurised exactly.
* bound-guided: ``value`` is a catalog bound.  ``mode="exact"`` re-decomposes
  each candidate, ``mode="approx"`` plugs first-order eigenvalue estimates
  into the bound, so one decomposition per iteration suffices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BOUNDS, evaluate_bound
from .cascade import PropagationTree
from .classify import ClassifierModel, parallel_map
from .errors import RepresentationMismatch, SchemaError, UnsupportedBoundFamily
from .features import feature_ids
from .perturbation import (
    Migration,
    delta_lambda_first_order,
    delta_mu_first_order,
    enumerate_migrations,
    migration_arrays,
)
from .spectra import adjacency_matrix, decompose, laplacian_matrix

__all__ = [
    "EvolutionStep", "EvolutionTrace", "TERMINATIONS", "enumerate_migrations", "optimize_score",
    "optimize_bound", "trace_report", "trace_to_json", "trace_from_json", "validate_trace",
    "TraceValidation", "mode_agreement",
]

TERMINATIONS = ("converged", "max_iterations", "no_valid_moves")
SCORE_TAU = 1e-4
BOUND_TAU = 1e-9
TIE_RTOL = 1e-10    # objectives this close count as tied; the earliest candidate wins
_FAMILY_KIND = {"lambda": "adjacency", "mu": "laplacian", "nu": "normalized"}


@dataclass
class EvolutionStep:
    t: int
    tree: PropagationTree
    phi: float                      # objective used by the acceptance test
    phi_ref: float | None = None    # current objective it was compared against
    score: float | None = None
    bound_exact: float | None = None
    move: Migration | None = None

    def __eq__(self, other):
        if not isinstance(other, EvolutionStep):
            return NotImplemented
        return (self.t == other.t and np.array_equal(self.tree.parent, other.tree.parent)
                and _same(self.phi, other.phi) and _same(self.phi_ref, other.phi_ref)
                and _same(self.score, other.score) and _same(self.bound_exact, other.bound_exact)
                and self.move == other.move)


def _same(a, b):
    if a is None or b is None:
        return a is b
    return a == b or (math.isnan(a) and math.isnan(b))


@dataclass
class EvolutionTrace:
    objective: str
    direction: int
    tau: float
    steps: list = field(default_factory=list)
    termination: str = "converged"
    tau_relative: bool = False
    mode: str = "exact"
    max_iters: int = 0
    target_class: str | None = None

    @property
    def trees(self) -> list[PropagationTree]:
        return [s.tree for s in self.steps]

    @property
    def final(self) -> PropagationTree:
        return self.steps[-1].tree

    def values(self, key: str = "phi") -> np.ndarray:
        return np.array([np.nan if getattr(s, key) is None else getattr(s, key) for s in self.steps])


def _check_common(T, d, tau):
    if T < 1:
        raise ValueError("T must be >= 1")
    if d not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if not tau >= 0:
        raise ValueError("tau must be >= 0")


def _migrated_parents(tree: PropagationTree, V, Q):
    P = np.broadcast_to(tree.parent, (len(V), tree.n)).copy()
    P[np.arange(len(V)), V] = Q
    return P


def _child(tree: PropagationTree, parent_row) -> PropagationTree:
    return PropagationTree(parent_row, id=tree.id, label=tree.label, node_ids=tree.node_ids)


def _best(phis: np.ndarray) -> int:
    """First candidate within ``TIE_RTOL`` of the maximum."""
    clean = np.where(np.isfinite(phis), phis, -np.inf)
    top = clean.max()
    if not np.isfinite(top):
        return 0
    return int(np.argmax(clean >= top - TIE_RTOL * max(1.0, abs(top))))


# -- score-guided -----------------------------------------------------------

def _fast_rows(tree, model, V, P, Q):
    """Approximate feature rows: first-order lambda/mu bounds, everything else frozen."""
    base = model.featurize(tree)
    spectra = decompose(tree, ("adjacency", "laplacian"))
    lam = spectra.lam[None, :] + delta_lambda_first_order(spectra.vecs("lambda"), V, P, Q)
    mu = spectra.mu[None, :] + delta_mu_first_order(spectra.vecs("mu"), V, P, Q)
    X = np.broadcast_to(base, (len(V), len(base))).copy()
    for j, fid in enumerate(model.feature_ids):
        b = BOUNDS.get(fid)
        if b is None or b.family not in ("lambda", "mu"):
            continue
        vals = evaluate_bound(fid, tree.n, lam=lam, mu=mu)
        X[:, j] = np.where(np.isfinite(vals), vals, 0.0)
    return X


def optimize_score(tree: PropagationTree, model: ClassifierModel, T: int = 10, d: int = 1,
                   tau: float = SCORE_TAU, *, target_class: str | None = None, fast: bool = False,
                   shortlist: int = 10) -> EvolutionTrace:
    """Greedy search on ``d * P(target_class | tree)``.

    With ``fast`` the candidates are ranked on perturbation-updated spectral
    features and only the top ``shortlist`` are re-featurised exactly; the
    acceptance test always uses exact scores.
    """
    _check_common(T, d, tau)
    if list(feature_ids(model.mode, model.ablate)) != list(model.feature_ids):
        raise RepresentationMismatch("model feature ids do not match the extractor")
    cls = model.positive_index(target_class)
    target = model.class_names[cls]

    def score_rows(X):
        return model.predict_proba(X)[:, cls]

    cur = tree
    s = float(score_rows(model.featurize(cur))[0])
    trace = EvolutionTrace("score", d, tau, [EvolutionStep(0, cur, d * s, None, s)],
                           mode="fast" if fast else "exact", max_iters=T, target_class=target)
    for t in range(1, T + 1):
        V, P, Q = migration_arrays(cur)
        if len(V) == 0:
            trace.termination = "no_valid_moves"
            return trace
        rows = _migrated_parents(cur, V, Q)
        if fast:
            approx = d * score_rows(_fast_rows(cur, model, V, P, Q))
            pick = np.argsort(-approx, kind="stable")[:shortlist]
            pick.sort()
        else:
            pick = np.arange(len(V))
        X = np.vstack(parallel_map(lambda r: model.featurize(_child(cur, r)), rows[pick]))
        scores = score_rows(X)
        k = _best(d * scores)
        best_phi = float(d * scores[k])
        cur_phi = trace.steps[-1].phi
        if not best_phi - cur_phi > tau:
            trace.termination = "converged"
            return trace
        i = int(pick[k])
        cur = _child(cur, rows[i])
        trace.steps.append(EvolutionStep(t, cur, best_phi, cur_phi, float(scores[k]), None,
                                         Migration(int(V[i]), int(P[i]), int(Q[i]))))
    trace.termination = "max_iterations"
    return trace


# -- bound-guided -----------------------------------------------------------

def _structure_after(tree, V, P, Q):
    """(num_internal, max_degree) of every migrated tree, vectorised."""
    kids = tree.num_children
    deg = tree.degrees
    internal = int(np.count_nonzero(kids)) - (kids[P] == 1) + (kids[Q] == 0)
    top = np.argsort(-deg, kind="stable")[:3]
    other = np.zeros(len(V), dtype=np.int64)
    done = np.zeros(len(V), dtype=bool)
    for node in top:
        ok = ~done & (P != node) & (Q != node)
        other[ok] = deg[node]
        done |= ok
    max_deg = np.maximum(other, np.maximum(deg[P] - 1, deg[Q] + 1))
    return internal, max_deg


def _exact_spectra(tree, family, V, P, Q):
    """Descending eigenvalues of every migrated tree, shape (M, n)."""
    M = len(V)
    out = np.empty((M, tree.n))
    if family == "nu":
        rows = _migrated_parents(tree, V, Q)
        for k in range(M):
            out[k] = decompose(_child(tree, rows[k]), "normalized", vectors=False).nu
        return out
    base = adjacency_matrix(tree) if family == "lambda" else laplacian_matrix(tree)
    for k, (v, p, q) in enumerate(zip(V, P, Q)):
        A = base.copy()
        A[v, p] = A[p, v] = 0.0
        A[v, q] = A[q, v] = -1.0 if family == "mu" else 1.0
        if family == "mu":
            A[p, p] -= 1.0
            A[q, q] += 1.0
        out[k] = np.linalg.eigvalsh(A)[::-1]
    return out


def _families(bound_id):
    fam = BOUNDS[bound_id].family
    return ("lambda", "mu") if fam is None else (fam,)


def _exact_bound(tree: PropagationTree, bound_id: str) -> float:
    fams = _families(bound_id)
    s = decompose(tree, tuple(_FAMILY_KIND[f] for f in fams), vectors=False)
    kw = {f: s.eigs(f) for f in fams}
    return float(evaluate_bound(bound_id, tree.n, num_internal=int(np.count_nonzero(tree.num_children)),
                                max_degree=int(tree.degrees.max()), **{_kw(f): v for f, v in kw.items()}))


def _kw(family):
    return {"lambda": "lam", "mu": "mu", "nu": "nu"}[family]


def _candidate_values(tree, bound_id, V, P, Q, mode):
    fams = _families(bound_id)
    internal, max_deg = _structure_after(tree, V, P, Q)
    eig = {}
    if mode == "approx":
        (fam,) = fams
        s = decompose(tree, _FAMILY_KIND[fam])
        U = s.vecs(fam)
        delta = (delta_lambda_first_order if fam == "lambda" else delta_mu_first_order)(U, V, P, Q)
        eig[fam] = s.eigs(fam)[None, :] + delta
    else:
        for fam in fams:
            eig[fam] = _exact_spectra(tree, fam, V, P, Q)
    return evaluate_bound(bound_id, tree.n, num_internal=internal, max_degree=max_deg,
                          **{_kw(f): v for f, v in eig.items()})


def resolve_mode(bound_id: str, mode: str) -> str:
    """Effective mode: nu-family bounds always run exactly."""
    if bound_id not in BOUNDS:
        raise ValueError(f"unknown bound id {bound_id!r}")
    if mode not in ("approx", "exact"):
        raise ValueError("mode must be 'approx' or 'exact'")
    fam = BOUNDS[bound_id].family
    if mode == "approx" and fam == "nu":
        return "exact"
    if mode == "approx" and fam is None:
        raise UnsupportedBoundFamily(
            f"{bound_id} mixes spectra with tree structure; first-order estimates cover "
            "one eigenvalue family only")
    return mode


def _tie_order(clean):
    """Candidates by decreasing objective; near-ties keep enumeration order."""
    top = np.max(clean[np.isfinite(clean)]) if np.isfinite(clean).any() else 0.0
    quantum = TIE_RTOL * max(1.0, abs(top))
    keys = np.where(np.isfinite(clean), np.round(clean / quantum), -np.inf)
    return np.argsort(-keys, kind="stable")


def optimize_bound(tree: PropagationTree, bound_id: str, T: int = 10, d: int = 1,
                   tau: float = BOUND_TAU, mode: str = "approx", *, verify_exact: bool = False,
                   model: ClassifierModel | None = None, target_class: str | None = None
                   ) -> EvolutionTrace:
    """Greedy search on ``d * bound(tree)``.

    ``tau`` is relative: a candidate is accepted when its objective beats the
    current one by more than ``tau * max(1, |phi|)``.  In approx mode the
    acceptance test uses the first-order estimate; ``verify_exact`` additionally
    requires the exact objective to improve, falling back to the next best
    estimate otherwise.  A ``model`` annotates every step with its score.
    """
    _check_common(T, d, tau)
    mode = resolve_mode(bound_id, mode)
    cls = model.positive_index(target_class) if model is not None else None

    def annotate(tr):
        if model is None:
            return None
        return float(model.predict_proba(model.featurize(tr))[0, cls])

    cur = tree
    exact = _exact_bound(cur, bound_id)
    trace = EvolutionTrace(bound_id, d, tau, [EvolutionStep(0, cur, d * exact, None, annotate(cur), exact)],
                           tau_relative=True, mode=mode, max_iters=T,
                           target_class=model.class_names[cls] if model is not None else None)
    for t in range(1, T + 1):
        V, P, Q = migration_arrays(cur)
        if len(V) == 0:
            trace.termination = "no_valid_moves"
            return trace
        phis = d * _candidate_values(cur, bound_id, V, P, Q, mode)
        cur_phi = d * exact
        gate = tau * max(1.0, abs(cur_phi)) if math.isfinite(tau) else math.inf
        clean = np.where(np.isfinite(phis), phis, -np.inf)
        if verify_exact and mode == "approx":
            order = _tie_order(clean)
            chosen = None
            for k in order:
                if not clean[k] - cur_phi > gate:
                    break
                nxt = _child(cur, _migrated_parents(cur, V[k:k + 1], Q[k:k + 1])[0])
                ex = _exact_bound(nxt, bound_id)
                if d * ex - cur_phi > gate:
                    chosen = (int(k), nxt, ex)
                    break
            if chosen is None:
                trace.termination = "converged"
                return trace
            k, nxt, ex = chosen
        else:
            k = _best(clean)
            if not clean[k] - cur_phi > gate:
                trace.termination = "converged"
                return trace
            nxt = _child(cur, _migrated_parents(cur, V[k:k + 1], Q[k:k + 1])[0])
            ex = float(phis[k]) * d if mode == "exact" else _exact_bound(nxt, bound_id)
        cur, exact = nxt, ex
        trace.steps.append(EvolutionStep(t, cur, float(clean[k]), cur_phi, annotate(cur), exact,
                                         Migration(int(V[k]), int(P[k]), int(Q[k]))))
    trace.termination = "max_iterations"
    return trace


def mode_agreement(tree: PropagationTree, bound_id: str, T: int = 10, d: int = 1,
                   tau: float = BOUND_TAU, rtol: float = 1e-9) -> tuple[int, int]:
    """Steps of an exact-mode run where the approx choice is also an exact optimum.

    Returns ``(agreeing steps, steps compared)``.  A step agrees when the
    candidate picked by first-order estimates attains the exact best objective
    (up to ``rtol``), so ties between equivalent migrations count as agreement.
    """
    trace = optimize_bound(tree, bound_id, T, d, tau, "exact")
    agree = total = 0
    for step in trace.steps[1:]:
        prev = trace.steps[step.t - 1].tree
        V, P, Q = migration_arrays(prev)
        ex = d * _candidate_values(prev, bound_id, V, P, Q, "exact")
        ex = np.where(np.isfinite(ex), ex, -np.inf)
        ap = d * _candidate_values(prev, bound_id, V, P, Q, "approx")
        k = _best(ap)
        total += 1
        agree += bool(ex[k] >= ex.max() - rtol * max(1.0, abs(ex.max())))
    return agree, total


# -- serialisation ----------------------------------------------------------

def _num(x):
    return None if x is None else float(x)


def trace_report(trace: EvolutionTrace) -> dict:
    """JSON-ready dict with per-step edge lists and shape summaries."""
    steps = []
    for s in trace.steps:
        steps.append({
            "t": s.t,
            "edges": [[int(p), int(c)] for p, c in s.tree.edges()],
            "phi": _num(s.phi),
            "phi_ref": _num(s.phi_ref),
            "score": _num(s.score),
            "bound_exact": _num(s.bound_exact),
            "move": s.move.as_list() if s.move is not None else None,
            "depth": int(s.tree.depth.max()),
            "max_breadth": int(s.tree.level_sizes.max()),
        })
    first = trace.steps[0].tree if trace.steps else None
    return {
        "objective": trace.objective,
        "direction": trace.direction,
        "tau": trace.tau,
        "tau_relative": trace.tau_relative,
        "mode": trace.mode,
        "max_iters": trace.max_iters,
        "target_class": trace.target_class,
        "tree_id": first.id if first is not None else "",
        "label": first.label if first is not None else None,
        "steps": steps,
        "termination": trace.termination,
    }


def trace_to_json(trace: EvolutionTrace) -> str:
    return json.dumps(trace_report(trace))


def _parent_from_edges(edges, n=None):
    nodes = {int(x) for e in edges for x in e}
    n = n or (max(nodes) + 1 if nodes else 0)
    parent = np.full(n, -1, dtype=np.int64)
    for p, c in edges:
        parent[int(c)] = int(p)
    return parent


def trace_from_json(data) -> EvolutionTrace:
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    _check_schema(data)
    steps = []
    for s in data["steps"]:
        tree = PropagationTree(_parent_from_edges(s["edges"]), id=data.get("tree_id", ""),
                               label=data.get("label"))
        mv = Migration(*map(int, s["move"])) if s.get("move") is not None else None
        steps.append(EvolutionStep(s["t"], tree, s["phi"], s.get("phi_ref"), s.get("score"),
                                   s.get("bound_exact"), mv))
    return EvolutionTrace(data["objective"], data["direction"], data["tau"], steps,
                          data["termination"], data.get("tau_relative", False),
                          data.get("mode", "exact"), data.get("max_iters", 0), data.get("target_class"))


# -- offline validation -----------------------------------------------------

_REQUIRED = {"objective": str, "direction": int, "tau": (int, float), "steps": list,
             "termination": str}
_STEP_REQUIRED = {"t": int, "edges": list, "phi": (int, float)}


def _check_schema(data):
    if not isinstance(data, dict):
        raise SchemaError("trace must be a JSON object")
    for key, typ in _REQUIRED.items():
        if key not in data:
            raise SchemaError(f"missing key {key!r}")
        if not isinstance(data[key], typ) or isinstance(data[key], bool):
            raise SchemaError(f"key {key!r} has wrong type {type(data[key]).__name__}")
    if not data["steps"]:
        raise SchemaError("trace has no steps")
    for i, s in enumerate(data["steps"]):
        if not isinstance(s, dict):
            raise SchemaError(f"step {i} is not an object")
        for key, typ in _STEP_REQUIRED.items():
            if key not in s or not isinstance(s[key], typ) or isinstance(s[key], bool):
                raise SchemaError(f"step {i}: missing or invalid {key!r}")
        if any(not isinstance(e, list) or len(e) != 2 for e in s["edges"]):
            raise SchemaError(f"step {i}: edges must be [parent, child] pairs")
        mv = s.get("move")
        if mv is not None and (not isinstance(mv, list) or len(mv) != 3):
            raise SchemaError(f"step {i}: move must be [v, p_old, p_new]")


@dataclass
class TraceValidation:
    failures: list = field(default_factory=list)   # (check, message)
    checks: tuple = ("schema", "termination", "scale_invariance", "atomicity", "monotonicity")

    @property
    def passed(self) -> bool:
        return not self.failures

    def failed_checks(self) -> set:
        return {c for c, _ in self.failures}

    def to_dict(self) -> dict:
        failed = self.failed_checks()
        return {"passed": self.passed,
                "checks": {c: c not in failed for c in self.checks},
                "failures": [{"check": c, "message": m} for c, m in self.failures]}


def validate_trace(data) -> TraceValidation:
    """Re-check a serialised trace.  Raises :class:`SchemaError` on malformed input."""
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    _check_schema(data)
    rep = TraceValidation()
    fail = rep.failures.append
    steps = data["steps"]
    d = data["direction"]
    tau = float(data["tau"])
    rel = bool(data.get("tau_relative", False))
    mode = data.get("mode", "exact")
    T = data.get("max_iters")

    if d not in (1, -1):
        fail(("schema", f"direction must be +1 or -1, got {d}"))
    if data["termination"] not in TERMINATIONS:
        fail(("termination", f"unknown termination {data['termination']!r}"))
    if T is not None and T > 0:
        if len(steps) > T + 1:
            fail(("termination", f"{len(steps)} steps exceed max_iters + 1 = {T + 1}"))
        if data["termination"] == "max_iterations" and len(steps) != T + 1:
            fail(("termination", "max_iterations reported before the budget was used"))

    parents = []
    for i, s in enumerate(steps):
        if s["t"] != i:
            fail(("schema", f"step {i} has t = {s['t']}"))
        edges = s["edges"]
        children = [int(c) for _, c in edges]
        nodes = {int(x) for e in edges for x in e}
        roots = nodes - set(children)
        if len(set(children)) != len(children) or len(roots) != 1 or \
                nodes != set(range(len(nodes))):
            fail(("scale_invariance", f"step {i}: edges do not form a rooted tree on 0..n-1"))
            parents.append(None)
            continue
        parent = _parent_from_edges(edges, len(nodes))
        root = next(iter(roots))
        if parents and parents[0] is not None:
            n0, r0 = len(parents[0]), int(np.flatnonzero(parents[0] == -1)[0])
            if len(parent) != n0:
                fail(("scale_invariance", f"step {i}: n = {len(parent)}, initial n = {n0}"))
            if root != r0:
                fail(("scale_invariance", f"step {i}: root {root}, initial root {r0}"))
        parents.append(parent)

    for i in range(1, len(steps)):
        a, b = parents[i - 1], parents[i]
        if a is None or b is None or len(a) != len(b):
            continue
        diff = np.flatnonzero(a != b)
        if len(diff) != 1:
            fail(("atomicity", f"step {i}: {len(diff)} parent entries changed"))
            continue
        v = int(diff[0])
        if a[v] == -1 or np.any(a == v):
            fail(("atomicity", f"step {i}: node {v} is not a non-root leaf"))
        mv = steps[i].get("move")
        if mv is not None and [int(x) for x in mv] != [v, int(a[v]), int(b[v])]:
            fail(("atomicity", f"step {i}: move {mv} does not match the parent change"))

    for i in range(1, len(steps)):
        phi = float(steps[i]["phi"])
        prev = float(steps[i - 1]["phi"])
        ref = steps[i].get("phi_ref")
        ref = prev if ref is None else float(ref)
        if mode == "approx":
            be = steps[i - 1].get("bound_exact")
            if be is not None and not math.isclose(d * float(be), ref, rel_tol=1e-9, abs_tol=1e-12):
                fail(("monotonicity", f"step {i}: reference objective differs from previous exact value"))
        elif not math.isclose(ref, prev, rel_tol=1e-12, abs_tol=1e-15):
            fail(("monotonicity", f"step {i}: reference objective differs from previous step"))
        gate = tau * max(1.0, abs(ref)) if rel else tau
        if not phi - ref > gate:
            fail(("monotonicity", f"step {i}: improvement {phi - ref:.3e} not above {gate:.3e}"))
    return rep
