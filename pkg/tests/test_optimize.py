import json
import math

import numpy as np
import pytest
from hypothesis import given

from conftest import trees
from spectral_cascade.analysis import star_path_population
from spectral_cascade.bounds import bound_vector
from spectral_cascade.cascade import generate_tree
from spectral_cascade.classify import featurize_dataset, fit_full
from spectral_cascade.errors import RepresentationMismatch, SchemaError, UnsupportedBoundFamily
from spectral_cascade.optimize import (
    TIE_RTOL,
    _structure_after,
    mode_agreement,
    optimize_bound,
    optimize_score,
    trace_from_json,
    trace_report,
    trace_to_json,
    validate_trace,
)
from spectral_cascade.perturbation import apply_migration, enumerate_migrations, migration_arrays


@pytest.fixture(scope="module")
def model():
    ds = star_path_population(80, sizes=(6, 14), seed=4)
    return fit_full(featurize_dataset(ds, "bounds"), seed=4)


def test_infinite_tau_stops_at_once(model):
    t = generate_tree("random_recursive", 9, 1)
    for tr in (optimize_score(t, model, 5, 1, math.inf),
               optimize_bound(t, "c1_lambda1", 5, 1, math.inf)):
        assert len(tr.steps) == 1 and tr.termination == "converged"


def test_directions_move_score_oppositely(model):
    t = generate_tree("random_recursive", 9, 2)
    up = optimize_score(t, model, 1, 1)
    down = optimize_score(t, model, 1, -1)
    s0 = up.steps[0].score
    assert up.steps[-1].score > s0 > down.steps[-1].score


def test_score_trace_is_greedy_argmax(model):
    t = generate_tree("random_recursive", 8, 3)
    tr = optimize_score(t, model, 3, 1, tau=0.0)
    scores = tr.values("score")
    assert np.all(np.diff(scores) > 0)
    for prev, step in zip(tr.steps, tr.steps[1:]):
        cands = enumerate_migrations(prev.tree)
        brute = [model.score_tree(apply_migration(prev.tree, m)) for m in cands]
        assert step.move == cands[int(np.argmax(brute))]
        assert step.score == pytest.approx(max(brute), abs=1e-12)
    assert validate_trace(trace_to_json(tr)).passed


def test_score_fast_mode_exact_gate(model):
    t = generate_tree("random_recursive", 10, 5)
    tr = optimize_score(t, model, 3, 1, fast=True)
    assert tr.mode == "fast"
    for step in tr.steps[1:]:
        assert model.score_tree(step.tree) == pytest.approx(step.score)
    assert validate_trace(trace_report(tr)).passed


def test_score_representation_mismatch(model):
    model2 = fit_full(featurize_dataset(star_path_population(20, seed=1), "bounds"))
    model2.feature_ids = model2.feature_ids[:-1]
    with pytest.raises(RepresentationMismatch):
        optimize_score(generate_tree("star", 6), model2)


def test_star_is_lambda_maximum():
    tr = optimize_bound(generate_tree("star", 12), "c1_branch_layer_k", 10, 1)
    assert len(tr.steps) == 1 and tr.termination == "converged"


def test_struct_virality_from_star_non_decreasing():
    tr = optimize_bound(generate_tree("star", 12), "c4_struct_virality", 10, 1, mode="approx")
    assert np.all(np.diff(tr.values("bound_exact")) >= -1e-12)


@pytest.mark.parametrize("bound", ["c1_lambda1", "c2_mu1_n", "c4_struct_virality", "c2_nu_small",
                                   "c4_diam_hi"])
def test_exact_mode_is_greedy_optimal(bound):
    t = generate_tree("random_recursive", 10, 7)
    tr = optimize_bound(t, bound, 3, 1, tau=0.0, mode="exact")
    for prev, step in zip(tr.steps, tr.steps[1:]):
        cands = enumerate_migrations(prev.tree)
        vals = np.array([bound_vector(apply_migration(prev.tree, m)).values[bound] for m in cands])
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        assert step.bound_exact == pytest.approx(vals.max(), rel=1e-9)
        assert step.move == cands[int(np.argmax(vals >= vals.max() - TIE_RTOL * max(1, abs(vals.max()))))]


def test_no_valid_moves_and_budget():
    assert optimize_bound(generate_tree("path", 2), "c1_lambda1", 3).termination == "no_valid_moves"
    tr = optimize_bound(generate_tree("path", 12), "c1_lambda1", 2, 1, mode="exact")
    assert tr.termination == "max_iterations" and len(tr.steps) == 3


def test_family_rules():
    t = generate_tree("random_recursive", 8, 1)
    with pytest.raises(UnsupportedBoundFamily):
        optimize_bound(t, "c4_diam_hi", 2, 1, mode="approx")
    assert optimize_bound(t, "c5_mixing", 2, 1, mode="approx").mode == "exact"
    with pytest.raises(ValueError):
        optimize_bound(t, "c1_lambda1", 0)
    with pytest.raises(ValueError):
        optimize_bound(t, "c1_lambda1", 2, d=2)


def test_verify_exact_is_monotone():
    for seed in range(6):
        t = generate_tree("random_recursive", 14, seed)
        tr = optimize_bound(t, "c1_branch_layer_k", 30, -1, verify_exact=True)
        ex = tr.values("bound_exact")
        assert np.all(np.diff(ex) < 0)


def test_annotated_bound_trace(model):
    tr = optimize_bound(generate_tree("random_recursive", 9, 2), "c1_lambda1", 3, 1, model=model)
    rep = trace_report(tr)
    assert all(s["score"] is not None for s in rep["steps"])
    assert rep["target_class"] == "fake"


def test_json_round_trip(model):
    for tr in (optimize_bound(generate_tree("caterpillar", 11, 3), "c2_mu1_n", 4, 1),
               optimize_score(generate_tree("random_recursive", 7, 3), model, 2, -1)):
        back = trace_from_json(trace_to_json(tr))
        assert back.steps == tr.steps
        assert (back.objective, back.direction, back.tau, back.termination) == \
               (tr.objective, tr.direction, tr.tau, tr.termination)
        assert trace_to_json(back) == trace_to_json(tr)


def _good_trace():
    tr = optimize_bound(generate_tree("random_recursive", 12, 4), "c1_branch_layer_k", 5, 1)
    assert len(tr.steps) >= 3
    return trace_report(tr)


def test_validator_detects_corruption():
    rep = _good_trace()
    assert validate_trace(rep).passed
    added = json.loads(json.dumps(rep))
    n = len(added["steps"][2]["edges"]) + 1
    added["steps"][2]["edges"].append([0, n])
    assert "scale_invariance" in validate_trace(added).failed_checks()
    dec = json.loads(json.dumps(rep))
    dec["steps"][2]["phi"] = dec["steps"][1]["phi"] - 1.0
    assert "monotonicity" in validate_trace(dec).failed_checks()
    two = json.loads(json.dumps(rep))
    e = two["steps"][1]["edges"]
    leaves = {c for _, c in e} - {p for p, _ in e}
    v = max(leaves)
    e[[c for _, c in e].index(v)] = [v - 1 if v - 1 != 0 else 1, v]
    assert not validate_trace(two).passed
    long = json.loads(json.dumps(rep))
    long["max_iters"] = 1
    assert "termination" in validate_trace(long).failed_checks()


def test_validator_schema_errors():
    with pytest.raises(SchemaError):
        validate_trace({"objective": "x"})
    with pytest.raises(SchemaError):
        validate_trace("not json")
    rep = _good_trace()
    rep["steps"][0]["edges"] = [[0]]
    with pytest.raises(SchemaError):
        validate_trace(rep)


@given(trees(min_n=3, max_n=20))
def test_structure_after_matches_brute_force(t):
    V, P, Q = migration_arrays(t)
    if len(V) == 0:
        return
    internal, maxdeg = _structure_after(t, V, P, Q)
    for k, m in enumerate(enumerate_migrations(t)):
        u = apply_migration(t, m)
        assert internal[k] == np.count_nonzero(u.num_children)
        assert maxdeg[k] == u.degrees.max()


def test_mode_agreement_counts():
    agree, total = mode_agreement(generate_tree("random_recursive", 12, 0), "c1_lambda1", 4, -1)
    assert 0 <= agree <= total <= 4
