import numpy as np
import pytest

from spectral_cascade.analysis import shuffled_labels, star_path_population
from spectral_cascade.cascade import CascadeDataset, generate_tree
from spectral_cascade.classify import (
    ClassifierModel,
    FeatureTable,
    accuracy,
    cross_validate,
    default_positive_class,
    featurize_dataset,
    fit_full,
    fit_logistic,
    macro_f1,
    random_baseline,
    stratified_folds,
    train_classifier,
)
from spectral_cascade.errors import InsufficientData, RepresentationMismatch


@pytest.fixture(scope="module")
def population():
    return star_path_population(120, seed=2)


def test_folds_partition_and_stratify():
    y = np.array([0] * 23 + [1] * 17)
    folds = stratified_folds(y, 5, seed=3)
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(40))
    for f in folds:
        assert 4 <= np.sum(y[f] == 0) <= 5 and 3 <= np.sum(y[f] == 1) <= 4
    assert all(np.array_equal(a, b) for a, b in zip(folds, stratified_folds(y, 5, seed=3)))
    with pytest.raises(InsufficientData):
        stratified_folds(np.array([0] * 10 + [1] * 3), 5, 0)


def test_metrics_by_hand():
    y = [0, 0, 1, 1, 2]
    p = [0, 1, 1, 1, 0]
    assert accuracy(y, p) == pytest.approx(3 / 5)
    f0 = 2 * 1 / (2 * 1 + 1 + 1)
    f1 = 2 * 2 / (2 * 2 + 1 + 0)
    assert macro_f1(y, p, 3) == pytest.approx((f0 + f1 + 0) / 3)


def test_standardisation_and_masking():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.normal(3, 2, 60), np.full(60, 7.0), rng.normal(size=60)])
    y = (X[:, 0] > 3).astype(int)
    m = fit_logistic(X, y, ["a", "b"])
    assert np.allclose(m.mean, X.mean(axis=0))
    assert not m.active[1] and np.all(m.weights[:, 1] == 0)
    assert np.all(m.std > 0)
    assert m.weights.shape == (2, 3)
    assert accuracy(y, m.predict(X)) > 0.9
    assert np.allclose(m.predict_proba(X).sum(axis=1), 1)


def test_separable_population(population):
    _, metrics = train_classifier(population, "bounds", folds=5, seed=1)
    assert metrics["acc"] >= 0.95 and metrics["f1"] >= 0.95


def test_shuffled_labels_near_chance():
    ds = shuffled_labels(star_path_population(600, seed=5), seed=5)
    _, metrics = train_classifier(ds, "bounds", seed=5)
    assert abs(metrics["acc"] - 0.5) <= 0.05


def test_deterministic(population):
    a = train_classifier(population, "both", seed=7)[1]
    b = train_classifier(population, "both", seed=7)[1]
    assert a == b


def test_fold_models_apply_training_transform(population):
    table = featurize_dataset(population, "bounds")
    res = cross_validate(table, 5, 0)
    test = stratified_folds(table.y, 5, 0)[0]
    train = np.setdiff1d(np.arange(len(table.y)), test)
    assert np.allclose(res.models[0].mean, table.X[train].mean(axis=0))


def test_model_json_round_trip(tmp_path, population):
    m = fit_full(featurize_dataset(population, "bounds"))
    f = tmp_path / "m.json"
    m.save(f)
    back = ClassifierModel.load(f)
    t = generate_tree("star", 20)
    assert back.score_tree(t) == m.score_tree(t)
    assert back.positive_class == "fake"
    assert m.score_tree(t) > 0.5 > m.score_tree(generate_tree("path", 20))


def test_representation_mismatch(population):
    m = fit_full(featurize_dataset(population, "bounds"))
    m.mode = "structural"
    with pytest.raises(RepresentationMismatch):
        m.featurize(generate_tree("star", 5))


def test_random_baseline_and_positive_class():
    y = np.array([0, 1] * 50)
    res = random_baseline(y, 2, seed=0)
    assert 0.3 < res.acc < 0.7
    assert default_positive_class(["non-rumor", "false"]) == "false"
    assert default_positive_class(["a", "b", "c"]) == "c"


def test_drop_categories(population):
    table = featurize_dataset(population, "bounds")
    smaller = table.drop_categories(["C4"])
    assert smaller.X.shape[1] < table.X.shape[1]
    assert isinstance(smaller, FeatureTable) and "C4" in smaller.ablate


def test_insufficient_data():
    ds = CascadeDataset((generate_tree("star", 5, label="a"),) * 6
                        + (generate_tree("path", 5, label="b"),) * 2, ("a", "b"))
    with pytest.raises(InsufficientData):
        train_classifier(ds)
