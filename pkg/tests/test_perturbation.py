import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import to_nx, trees
from spectral_cascade.cascade import generate_tree
from spectral_cascade.errors import InsufficientTrees, InvalidMigration
from spectral_cascade.perturbation import (
    BENCHMARK_COLUMNS,
    Migration,
    add_edge_delta_mu,
    apply_migration,
    approx_target_deltas,
    benchmark_approximation,
    delete_edge_delta_mu,
    delta_lambda_first_order,
    delta_mu_first_order,
    enumerate_migrations,
    estimate_delta_lambda,
    estimate_delta_mu,
    exact_target_deltas,
)
from spectral_cascade.spectra import decompose
from spectral_cascade.stats import correlation


def test_counts():
    assert enumerate_migrations(generate_tree("path", 2)) == []
    assert len(enumerate_migrations(generate_tree("star", 4))) == 6
    n = 9
    assert len(enumerate_migrations(generate_tree("star", n))) == (n - 1) * (n - 2)
    # a rooted path has a single non-root leaf
    assert len(enumerate_migrations(generate_tree("path", n))) == n - 2


@given(trees(max_n=25))
def test_enumeration_brute_force(t):
    expected = [(v, int(t.parent[v]), q) for v in range(1, t.n) if t.is_leaf[v]
                for q in range(t.n) if q not in (v, t.parent[v])]
    assert [(m.v, m.p_old, m.p_new) for m in enumerate_migrations(t)] == expected


def test_noop_and_constant_mode():
    t = generate_tree("random_recursive", 15, 1)
    U = decompose(t).vecs("mu")
    assert np.all(delta_mu_first_order(U, 5, 2, 2) == 0)
    m = enumerate_migrations(t)[0]
    est = estimate_delta_mu(decompose(t), m, t)
    assert abs(est.delta_mu[-1]) <= 1e-12
    assert est.delta_mu.shape == (t.n,)


def test_zero_entry_mode_gives_zero():
    U = np.eye(4)
    d = delta_lambda_first_order(U, 1, 2, 3)
    assert d[0] == 0 and d[2] == 0


@given(trees(min_n=3, max_n=25), st.data())
def test_sign_invariance_and_additivity(t, data):
    ms = enumerate_migrations(t)
    if not ms:
        return
    m = data.draw(st.sampled_from(ms))
    s = decompose(t)
    for fam, fn in (("mu", delta_mu_first_order), ("lambda", delta_lambda_first_order)):
        U = s.vecs(fam)
        flip = U * data.draw(st.sampled_from([-1.0, 1.0]))
        assert np.allclose(fn(U, m.v, m.p_old, m.p_new), fn(flip, m.v, m.p_old, m.p_new))
    U = s.vecs("mu")
    both = add_edge_delta_mu(U, m.v, m.p_new) + delete_edge_delta_mu(U, m.v, m.p_old)
    assert np.allclose(both, delta_mu_first_order(U, m.v, m.p_old, m.p_new))
    assert np.allclose(estimate_delta_lambda(s, m, t).delta_lambda,
                       delta_lambda_first_order(s.vecs("lambda"), m.v, m.p_old, m.p_new))


def test_lambda1_estimate_is_lower_bound():
    # first-order change of lambda1 equals the Rayleigh quotient change
    for seed in range(5):
        t = generate_tree("random_recursive", 20, seed)
        assert np.all(approx_target_deltas(t) <= exact_target_deltas(t) + 1e-12)


def test_star_to_near_star():
    t = generate_tree("star", 10)
    est = approx_target_deltas(t)
    ex = exact_target_deltas(t)
    assert np.all(est < 0) and np.all(ex < 0)
    assert np.allclose(est, est[0]) and np.allclose(ex, ex[0])


def test_apply_migration():
    p3 = generate_tree("path", 3)
    out = apply_migration(p3, Migration(2, 1, 0))
    assert nx.is_isomorphic(to_nx(out), to_nx(p3))
    assert p3.parent.tolist() == [-1, 0, 1]
    k13 = generate_tree("star", 4)
    out = apply_migration(k13, Migration(3, 0, 1))
    assert out.depth.max() == 2
    for bad in (Migration(0, -1, 1), Migration(1, 0, 1), Migration(1, 2, 3), Migration(1, 0, 9)):
        with pytest.raises(InvalidMigration):
            apply_migration(k13, bad)
    with pytest.raises(InvalidMigration):
        apply_migration(generate_tree("path", 4), Migration(1, 0, 2))


def test_all_migrations_yield_trees():
    for seed in range(100):
        t = generate_tree("random_recursive", 4 + seed % 12, seed)
        for m in enumerate_migrations(t):
            u = apply_migration(t, m)
            assert u.n == t.n and u.root == t.root
            assert nx.is_tree(to_nx(u))
            assert int(np.sum(u.parent != t.parent)) == 1


def test_estimate_on_mid_size_tree():
    t = generate_tree("random_recursive", 50, 3)
    rho, _ = correlation(approx_target_deltas(t), exact_target_deltas(t), "spearman")
    assert rho >= 0.9


def test_benchmark_small():
    rows, recs = benchmark_approximation((10, 20), samples=3, return_records=True)
    assert [(r.size, r.method) for r in rows] == [(10, "approx"), (10, "exact"),
                                                  (20, "approx"), (20, "exact")]
    assert len(recs) == 6
    assert all(hasattr(rows[0], c) for c in BENCHMARK_COLUMNS)
    for target in ("mu1", "mu_n_1"):
        assert benchmark_approximation((12,), samples=2, target=target)[0].trees == 2


def test_benchmark_needs_trees():
    pool = [generate_tree("path", 10)]
    assert benchmark_approximation((11,), samples=5, trees=pool)[0].trees == 1
    with pytest.raises(InsufficientTrees):
        benchmark_approximation((50,), samples=5, trees=pool)
