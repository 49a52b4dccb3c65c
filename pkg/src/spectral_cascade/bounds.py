"""Catalog of spectral bounds grouped into five propagation categories.

Each entry maps a tree's spectra to one real value.  Where an entry is an
inequality on a structural quantity that is not itself spectral, the value is
the spectral side (``mu_1`` for ``mu_1 <= n``, ``lambda_1^2`` for the
max-breadth bound, ...).  Rows bounding the edge count ``e`` are rearranged
into a bound *on* ``e`` so they do not all collapse onto ``lambda_1``.

Every bound function is vectorised: eigenvalue arrays may have shape
``(..., n)`` where leading axes index candidate trees.  Eigenvalues are
positional (index 0 is the largest of the unperturbed spectrum); the
optimiser relies on that when it plugs in first-order estimates.

Categories
----------
C1 branching capacity, C2 cascade scale, C3 structural cohesion,
C4 propagation span, C5 diffusion dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cascade import PropagationTree
from .errors import DegenerateBound
from .properties import ExactProperties, top_fraction_count
from .spectra import SpectrumSet, decompose

CATEGORIES = ("C1", "C2", "C3", "C4", "C5")
CATEGORY_NAMES = {
    "C1": "Branching",
    "C2": "Scale",
    "C3": "Cohesion",
    "C4": "Span",
    "C5": "Diffusion",
}
TOP_FRACTION = 0.3
_DEN_EPS = 1e-12


@dataclass
class _Ctx:
    n: int
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    nu: np.ndarray | None = None
    num_internal: int | None = None
    max_degree: int | None = None


def _div(num, den, scale=1.0):
    num, den = np.broadcast_arrays(np.asarray(num, float), np.asarray(den, float))
    out = np.full(num.shape, np.nan)
    ok = np.abs(den) > _DEN_EPS * np.maximum(1.0, np.abs(scale))
    np.divide(num, den, out=out, where=ok)
    return out[()] if out.ndim == 0 else out


def _lam1(c):
    return c.lam[..., 0]


def _algebraic(c):
    return c.mu[..., -2]


def _nu_small(c):
    return c.nu[..., -2]


def _top_sum(arr, m):
    return arr[..., :m].sum(axis=-1)


def _count_zero_tol(c):
    return 1e-8 * np.maximum(1.0, np.abs(c.lam[..., :1]))


def _indep_sign(c):
    tol = _count_zero_tol(c)
    nonneg = np.count_nonzero(c.lam >= -tol, axis=-1)
    nonpos = np.count_nonzero(c.lam <= tol, axis=-1)
    return np.minimum(nonneg, nonpos).astype(float)


def _bandwidth(c):
    x = _div(c.n * _algebraic(c), c.mu[..., 0])
    return np.ceil(x - 1e-9 * np.maximum(1.0, np.abs(x)))


def _struct_virality(c):
    mu = c.mu[..., :-1]
    return 2.0 / (c.n - 1) * _div(1.0, mu).sum(axis=-1)


def _distinct_minus_one(c):
    mu = np.sort(c.mu, axis=-1)
    tol = 1e-6 * np.maximum(1.0, np.abs(mu[..., -1:]))
    return np.count_nonzero(np.diff(mu, axis=-1) > tol, axis=-1).astype(float)


def _eig_mass(c):
    tol = 1e-9 * np.maximum(1.0, np.abs(c.mu[..., :1]))
    return np.count_nonzero((c.mu > -tol) & (c.mu < 1.0 - tol), axis=-1).astype(float)


def _diam_regular(c):
    nu1, a = c.nu[..., 0], _nu_small(c)
    ratio = _div(nu1 + a, nu1 - a, nu1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return _div(math.log(c.n - 1), np.log(ratio))


def _conductance(c):
    a = _nu_small(c)
    return _div(2.0 * a, c.nu[..., 0] + a)


@dataclass(frozen=True)
class Bound:
    id: str
    category: str
    family: str | None      # eigenvalue family; None if it also needs tree structure
    expression: str
    fn: Callable[[_Ctx], np.ndarray] = field(repr=False)


def _m(n):
    return top_fraction_count(n, TOP_FRACTION)


CATALOG: tuple[Bound, ...] = (
    # C1 branching capacity
    Bound("c1_lambda1", "C1", "lambda", "mean_deg <= lambda1 <= max_deg", _lam1),
    Bound("c1_mu1_adjdeg", "C1", "mu", "mu1 <= max_{x~y}(dx+dy)", lambda c: c.mu[..., 0]),
    Bound("c1_topm_degsum", "C1", "mu", "sum top-m deg <= sum_{i<=m} mu_i - 1",
          lambda c: _top_sum(c.mu, _m(c.n)) - 1.0),
    Bound("c1_mean_branching", "C1", None, "mean branching <= n*lambda1/(2|I|)",
          lambda c: c.n * _lam1(c) / (2.0 * c.num_internal)),
    Bound("c1_branch_layer_k", "C1", "lambda", "b_1 <= lambda1^2", lambda c: _lam1(c) ** 2),
    Bound("c1_degree_entropy", "C1", "lambda", "H_d <= log(lambda1^2 + 1)",
          lambda c: np.log(_lam1(c) ** 2 + 1.0)),
    # C2 cascade scale
    Bound("c2_edge_lower", "C2", "lambda", "e <= n*lambda1/2", lambda c: c.n * _lam1(c) / 2.0),
    Bound("c2_edge_upper", "C2", "lambda", "lambda1^2/2 <= e", lambda c: _lam1(c) ** 2 / 2.0),
    Bound("c2_lam_quad", "C2", "lambda", "lambda1(lambda1+1)/2 <= e",
          lambda c: _lam1(c) * (_lam1(c) + 1.0) / 2.0),
    Bound("c2_partial_mu", "C2", "mu", "sum_{i<=t} mu_i - C(t+1,2) <= e",
          lambda c: _top_sum(c.mu, _m(c.n)) - _m(c.n) * (_m(c.n) + 1) / 2.0),
    Bound("c2_lam_en", "C2", "lambda", "(lambda1^2 + n - 1)/2 <= e",
          lambda c: (_lam1(c) ** 2 + c.n - 1.0) / 2.0),
    Bound("c2_mu2_half", "C2", "mu", "mu2 <= floor(n/2)", lambda c: c.mu[..., 1]),
    Bound("c2_mu1_n", "C2", "mu", "mu1 <= n", lambda c: c.mu[..., 0]),
    Bound("c2_nu_sum", "C2", "nu", "sum nu <= n", lambda c: c.nu.sum(axis=-1)),
    Bound("c2_nu_small", "C2", "nu", "nu_{n-1} <= n/(n-1)", _nu_small),
    Bound("c2_nu_large", "C2", "nu", "nu_1 >= n/(n-1)", lambda c: c.nu[..., 0]),
    # C3 structural cohesion
    Bound("c3_sep_ratio", "C3", "mu", "((mu1 - mu_{n-1})/(mu1 + mu_{n-1}))^2",
          lambda c: _div(c.mu[..., 0] - _algebraic(c), c.mu[..., 0] + _algebraic(c)) ** 2),
    Bound("c3_sep_ratio2", "C3", "mu", "(mu1 - mu_{n-1})^2/(4 mu1 mu_{n-1})",
          lambda c: _div((c.mu[..., 0] - _algebraic(c)) ** 2, 4.0 * c.mu[..., 0] * _algebraic(c))),
    Bound("c3_vertex_conn", "C3", "mu", "kappa >= mu_{n-1}", _algebraic),
    Bound("c3_cheeger_lo", "C3", "nu", "nu_{n-1}/2 <= h", lambda c: _nu_small(c) / 2.0),
    Bound("c3_cheeger_hi", "C3", "nu", "h <= sqrt(2 nu_{n-1})",
          lambda c: np.sqrt(np.maximum(2.0 * _nu_small(c), 0.0))),
    Bound("c3_cheeger_mu", "C3", "mu", "h' >= mu_{n-1}/2", lambda c: _algebraic(c) / 2.0),
    Bound("c3_indep_ratio", "C3", "lambda", "alpha <= -n lambda_n/(lambda1 - lambda_n)",
          lambda c: _div(-c.n * c.lam[..., -1], _lam1(c) - c.lam[..., -1])),
    Bound("c3_indep_sign", "C3", "lambda", "alpha <= min(#lambda>=0, #lambda<=0)", _indep_sign),
    Bound("c3_chromatic", "C3", "lambda", "1 - lambda1/lambda_n <= chi",
          lambda c: 1.0 - _div(_lam1(c), c.lam[..., -1])),
    Bound("c3_clique", "C3", "lambda", "n/(n - lambda1) <= omega",
          lambda c: _div(c.n, c.n - _lam1(c), c.n)),
    # C4 propagation span
    Bound("c4_bandwidth", "C4", "mu", "ceil(n mu_{n-1}/mu1) <= bandwidth", _bandwidth),
    Bound("c4_struct_virality", "C4", "mu", "2/(n-1) sum_{i<n} 1/mu_i", _struct_virality),
    Bound("c4_diam_lo", "C4", "mu", "4/(n mu_{n-1}) <= D", lambda c: _div(4.0, c.n * _algebraic(c), c.n)),
    Bound("c4_diam_hi", "C4", None, "D <= 2 sqrt(2 Delta/mu_{n-1}) log2 n",
          lambda c: 2.0 * np.sqrt(_div(2.0 * c.max_degree, _algebraic(c))) * math.log2(c.n)),
    Bound("c4_diam_regular", "C4", "nu", "D <= log(n-1)/log((nu1+nu_{n-1})/(nu1-nu_{n-1}))",
          _diam_regular),
    Bound("c4_diam_distinct", "C4", "mu", "D <= #distinct(mu) - 1", _distinct_minus_one),
    Bound("c4_eig_mass", "C4", "mu", "m_T[0,1) >= (D+1)/3", _eig_mass),
    # C5 diffusion dynamics
    Bound("c5_mixing", "C5", "nu", "mixing time ~ log n / nu_{n-1}",
          lambda c: _div(math.log(c.n), _nu_small(c))),
    Bound("c5_routing", "C5", "nu", "routing time ~ log^2 n / nu_{n-1}",
          lambda c: _div(math.log(c.n) ** 2, _nu_small(c))),
    Bound("c5_conductance", "C5", "nu", "2 nu_{n-1}/(nu1 + nu_{n-1})", _conductance),
    Bound("c5_conductance_coef", "C5", "nu", "q (2 - q), q = conductance bound",
          lambda c: _conductance(c) * (2.0 - _conductance(c))),
    Bound("c5_moment2", "C5", "lambda", "m2 = mean lambda_i^2", lambda c: (c.lam ** 2).mean(axis=-1)),
    Bound("c5_moment4", "C5", "lambda", "m4 = mean lambda_i^4", lambda c: (c.lam ** 4).mean(axis=-1)),
)

BOUNDS: dict[str, Bound] = {b.id: b for b in CATALOG}
BOUND_IDS: tuple[str, ...] = tuple(b.id for b in CATALOG)


def category_ids(category: str) -> list[str]:
    return [b.id for b in CATALOG if b.category == category]


def evaluate_bound(bound_id: str, n: int, *, lam=None, mu=None, nu=None,
                   num_internal=None, max_degree=None) -> np.ndarray:
    """Evaluate one bound on (possibly batched, possibly perturbed) spectra."""
    ctx = _Ctx(n=n, lam=None if lam is None else np.asarray(lam, float),
               mu=None if mu is None else np.asarray(mu, float),
               nu=None if nu is None else np.asarray(nu, float),
               num_internal=num_internal, max_degree=max_degree)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.asarray(BOUNDS[bound_id].fn(ctx), dtype=float)


@dataclass(frozen=True)
class BoundVector:
    values: dict           # id -> float (nan when degenerate)
    applicable: dict       # id -> bool
    n: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def categories(self) -> dict:
        return {k: BOUNDS[k].category for k in self.values}

    def __getitem__(self, bound_id: str) -> float:
        if not self.applicable[bound_id]:
            raise DegenerateBound(bound_id)
        return self.values[bound_id]

    def as_array(self) -> tuple[np.ndarray, np.ndarray]:
        """Values in catalog order with degenerate entries imputed as 0, plus mask."""
        mask = np.array([self.applicable[k] for k in BOUND_IDS])
        vals = np.array([self.values[k] if self.applicable[k] else 0.0 for k in BOUND_IDS])
        return vals, mask


def branching_layer_bounds(lambda1: float, max_k: int) -> np.ndarray:
    """``lambda1^2 (lambda1^2 - 1)^(k-1)`` for k = 1..max_k."""
    l2 = lambda1 ** 2
    return np.array([l2 * (l2 - 1.0) ** (k - 1) for k in range(1, max_k + 1)])


def compute_bounds(spectra: SpectrumSet, tree: PropagationTree) -> BoundVector:
    if spectra.lam is None or spectra.mu is None or spectra.nu is None:
        raise ValueError("compute_bounds needs adjacency, laplacian and normalized spectra")
    if spectra.n != tree.n:
        raise ValueError("spectra and tree sizes differ")
    n = tree.n
    ctx = _Ctx(n=n, lam=spectra.lam, mu=spectra.mu, nu=spectra.nu,
               num_internal=int(np.count_nonzero(tree.num_children)),
               max_degree=int(tree.degrees.max()))
    values, applicable = {}, {}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for b in CATALOG:
            v = float(b.fn(ctx))
            ok = math.isfinite(v)
            values[b.id] = v if ok else math.nan
            applicable[b.id] = ok
    lam1 = float(spectra.lam[0])
    depth = int(tree.depth.max())
    diagnostics = {
        "branch_layer": branching_layer_bounds(lam1, depth).tolist(),
        "chromatic_upper": 1.0 + lam1,
        "clique_upper": 1.0 + lam1,
        "top_m": top_fraction_count(n, TOP_FRACTION),
    }
    return BoundVector(values, applicable, n, diagnostics)


def bound_vector(tree: PropagationTree) -> BoundVector:
    return compute_bounds(decompose(tree, vectors=False), tree)


def bound_feature_vector(tree: PropagationTree, *, with_mask: bool = False):
    """Catalog-ordered bound values; degenerate entries are 0."""
    vals, mask = bound_vector(tree).as_array()
    return (vals, mask) if with_mask else vals


# -- inequality checks ------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    def holds(self, tol: float = 1e-9) -> bool:
        return self.lhs <= self.rhs + tol * max(1.0, abs(self.lhs), abs(self.rhs))


def bound_checks(bv: BoundVector, props: ExactProperties) -> list[BoundCheck]:
    """Every inequality of the catalog as ``lhs <= rhs`` on one tree.

    Rows with no exactly computable counterpart (Cheeger constant, separation
    sets, O(.) dynamics) are omitted, as is the regular-graph diameter entry.
    """
    v = bv.values
    n, e, D = props.num_nodes, props.num_edges, props.diameter
    checks = [
        BoundCheck("c1_lambda1:mean_degree", props.mean_degree, v["c1_lambda1"]),
        BoundCheck("c1_lambda1:max_degree", v["c1_lambda1"], props.max_degree),
        BoundCheck("c1_mu1_adjdeg", v["c1_mu1_adjdeg"], props.max_adjacent_degree_sum),
        BoundCheck("c1_topm_degsum", props.top_degree_sums.get(TOP_FRACTION, math.nan),
                   v["c1_topm_degsum"]),
        BoundCheck("c1_mean_branching", props.mean_branching, v["c1_mean_branching"]),
        BoundCheck("c1_branch_layer_k:max_degree", props.max_degree, v["c1_branch_layer_k"]),
        BoundCheck("c1_degree_entropy", props.degree_entropy, v["c1_degree_entropy"]),
        BoundCheck("c2_edge_lower", e, v["c2_edge_lower"]),
        BoundCheck("c2_edge_upper", v["c2_edge_upper"], e),
        BoundCheck("c2_lam_quad", v["c2_lam_quad"], e),
        BoundCheck("c2_partial_mu", v["c2_partial_mu"], e),
        BoundCheck("c2_lam_en", v["c2_lam_en"], e),
        BoundCheck("c2_mu2_half", v["c2_mu2_half"], n // 2),
        BoundCheck("c2_mu1_n", v["c2_mu1_n"], n),
        BoundCheck("c2_nu_sum", v["c2_nu_sum"], n),
        BoundCheck("c2_nu_small", v["c2_nu_small"], n / (n - 1)),
        BoundCheck("c2_nu_large", n / (n - 1), v["c2_nu_large"]),
        BoundCheck("c3_indep_sign", props.independence_number, v["c3_indep_sign"]),
        BoundCheck("c3_chromatic:lower", v["c3_chromatic"], 2),
        BoundCheck("c3_chromatic:upper", 2, bv.diagnostics["chromatic_upper"]),
        BoundCheck("c3_clique:lower", v["c3_clique"], 2),
        BoundCheck("c3_clique:upper", 2, bv.diagnostics["clique_upper"]),
        BoundCheck("c4_diam_lo", v["c4_diam_lo"], D),
        BoundCheck("c4_diam_hi", D, v["c4_diam_hi"]),
        BoundCheck("c4_diam_distinct", D, v["c4_diam_distinct"]),
        BoundCheck("c4_eig_mass", (D + 1) / 3.0, v["c4_eig_mass"]),
    ]
    # Fiedler's a(G) <= kappa(G) needs a non-complete graph; K2 is complete.
    if n >= 3:
        checks.append(BoundCheck("c3_vertex_conn", v["c3_vertex_conn"], props.vertex_connectivity))
    for k, (bk, bound) in enumerate(zip(props.level_sizes[1:], bv.diagnostics["branch_layer"]), start=1):
        checks.append(BoundCheck(f"c1_branch_layer_k@{k}", bk, bound))
    return checks
