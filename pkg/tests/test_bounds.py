import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given

from conftest import mixed_corpus, to_nx, trees
from spectral_cascade.bounds import (
    BOUND_IDS,
    BOUNDS,
    CATEGORIES,
    bound_checks,
    bound_feature_vector,
    bound_vector,
    branching_layer_bounds,
    category_ids,
    compute_bounds,
    evaluate_bound,
)
from spectral_cascade.cascade import generate_tree
from spectral_cascade.errors import DegenerateBound
from spectral_cascade.properties import exact_properties
from spectral_cascade.spectra import decompose

# mu2 <= floor(n/2) is false for odd n (P5 has mu2 = 2.618); see test below
SKIP = {"c2_mu2_half"}


def test_catalog_shape():
    assert len(BOUND_IDS) == 39 == len(set(BOUND_IDS))
    assert sorted(i for c in CATEGORIES for i in category_ids(c)) == sorted(BOUND_IDS)
    for c in CATEGORIES:
        assert all(i.startswith(c.lower()) for i in category_ids(c))


def test_star_tight_cases(k13):
    bv = bound_vector(k13)
    assert bv["c2_mu1_n"] == pytest.approx(4.0, abs=1e-9)
    assert bv["c1_branch_layer_k"] == pytest.approx(3.0, abs=1e-9)
    hd = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert exact_properties(k13).degree_entropy == pytest.approx(hd)
    assert bv["c1_degree_entropy"] == pytest.approx(math.log(4))
    assert hd <= bv["c1_degree_entropy"]


def test_p3_struct_virality(p3):
    assert bound_vector(p3)["c4_struct_virality"] == pytest.approx(4 / 3)
    assert bound_feature_vector(p3)[BOUND_IDS.index("c2_mu1_n")] == pytest.approx(3.0)


def test_star_vs_path_lambda1():
    i = BOUND_IDS.index("c1_lambda1")
    assert bound_feature_vector(generate_tree("star", 50))[i] == pytest.approx(7.0)
    assert bound_feature_vector(generate_tree("path", 50))[i] == pytest.approx(2 * math.cos(math.pi / 51))


def test_deterministic():
    t = generate_tree("random_recursive", 40, 2)
    assert bound_feature_vector(t).tobytes() == bound_feature_vector(t).tobytes()


def test_degenerate_flagged_not_fabricated():
    bv = bound_vector(generate_tree("path", 2))
    assert not bv.applicable["c4_diam_regular"]
    with pytest.raises(DegenerateBound):
        bv["c4_diam_regular"]
    vals, mask = bv.as_array()
    j = BOUND_IDS.index("c4_diam_regular")
    assert vals[j] == 0.0 and not mask[j]
    assert np.isfinite(vals).all()


def test_mu2_floor_form_counterexample():
    t = generate_tree("path", 5)
    mu2 = decompose(t, "laplacian").mu[1]
    assert mu2 == pytest.approx(2 - 2 * math.cos(3 * math.pi / 5))
    assert mu2 > 5 // 2


@given(trees(min_n=3, max_n=40))
def test_inequalities_hold(t):
    checks = bound_checks(bound_vector(t), exact_properties(t))
    bad = [c for c in checks if c.name not in SKIP and not c.holds()]
    assert not bad


@given(trees(min_n=2, max_n=40))
def test_mu2_ceiling_form(t):
    assert decompose(t, "laplacian").mu[1] <= math.ceil(t.n / 2) + 1e-9


@given(trees(min_n=3, max_n=40))
def test_exact_identities(t):
    bv = bound_vector(t)
    p = exact_properties(t)
    assert bv["c4_struct_virality"] == pytest.approx(p.average_distance, rel=1e-8)
    assert abs(bv["c3_chromatic"] - 2.0) <= 1e-8
    assert bv["c4_eig_mass"] >= (p.diameter + 1) / 3
    assert bv.diagnostics["branch_layer"][0] == pytest.approx(bv["c1_branch_layer_k"])
    assert bv["c2_nu_sum"] == pytest.approx(t.n, rel=1e-9)


@given(trees(min_n=3, max_n=30))
def test_layer_bounds_all_k(t):
    lam1 = decompose(t, "adjacency").lam[0]
    layers = t.level_sizes[1:]
    assert np.all(layers <= branching_layer_bounds(lam1, len(layers)) + 1e-9)


@given(trees(min_n=4, max_n=30))
def test_vectorised_evaluation_matches_rows(t):
    s = decompose(t, vectors=False)
    internal = int(np.count_nonzero(t.num_children))
    maxdeg = int(t.degrees.max())
    stacked = {k: np.vstack([s.eigs(f), s.eigs(f)[::-1]])
               for k, f in (("lam", "lambda"), ("mu", "mu"), ("nu", "nu"))}
    for bid in BOUND_IDS:
        batch = evaluate_bound(bid, t.n, num_internal=internal, max_degree=maxdeg, **stacked)
        for r in range(2):
            row = evaluate_bound(bid, t.n, num_internal=internal, max_degree=maxdeg,
                                 **{k: v[r] for k, v in stacked.items()})
            assert np.array_equal(np.asarray(batch)[r], row, equal_nan=True), bid


def test_compute_bounds_needs_all_spectra(p3):
    with pytest.raises(ValueError):
        compute_bounds(decompose(p3, "laplacian"), p3)


def test_families_declared():
    assert {BOUNDS[b].family for b in BOUND_IDS} <= {"lambda", "mu", "nu", None}


def test_diameter_bounds_against_networkx():
    for t in mixed_corpus(40, 5, 80, seed=9):
        bv = bound_vector(t)
        D = nx.diameter(to_nx(t))
        assert bv["c4_diam_lo"] <= D + 1e-9
        assert D <= bv["c4_diam_distinct"] + 1e-9
        assert D <= bv["c4_diam_hi"] + 1e-9
