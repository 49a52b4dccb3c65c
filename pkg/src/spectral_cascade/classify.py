"""L2-regularised multinomial logistic regression and stratified k-fold CV.

The model is deliberately small: z-standardisation fitted on the training
fold, then full-batch gradient descent with a fixed budget so results are
reproducible bit-for-bit.  Zero-variance training columns get weight 0.
"""

from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cascade import CascadeDataset, PropagationTree
from .errors import InsufficientData, RepresentationMismatch
from .features import assemble_representation, feature_ids

DEFAULT_L2 = 1.0
DEFAULT_LR = 0.5
DEFAULT_ITERS = 500


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named RNG stream derived from one run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("SCT_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    items = list(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def default_positive_class(class_names) -> str:
    """Class treated as "fake": the first name mentioning fake/false, else the last."""
    for name in class_names:
        low = str(name).lower()
        if "fake" in low or "false" in low:
            return name
    return class_names[-1]


@dataclass
class ClassifierModel:
    feature_ids: list
    class_names: list
    mean: np.ndarray
    std: np.ndarray
    active: np.ndarray          # columns with non-zero training variance
    weights: np.ndarray         # (classes, features); inactive columns are 0
    bias: np.ndarray
    mode: str = "bounds"
    ablate: list = field(default_factory=list)
    seed: int = 0
    l2: float = DEFAULT_L2
    positive_class: str | None = None

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.zeros_like(X)
        a = self.active
        Z[:, a] = (X[:, a] - self.mean[a]) / self.std[a]
        return Z

    def predict_proba(self, X) -> np.ndarray:
        logits = self.transform(X) @ self.weights.T + self.bias
        return _softmax(logits)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def positive_index(self, target=None) -> int:
        target = target or self.positive_class or default_positive_class(self.class_names)
        return list(self.class_names).index(target)

    def featurize(self, tree: PropagationTree) -> np.ndarray:
        ids = feature_ids(self.mode, self.ablate)
        if list(ids) != list(self.feature_ids):
            raise RepresentationMismatch(
                f"model expects {len(self.feature_ids)} features, extractor gives {len(ids)}")
        return assemble_representation(tree, self.mode, self.ablate)

    def score_tree(self, tree: PropagationTree, target=None) -> float:
        return float(self.predict_proba(self.featurize(tree))[0, self.positive_index(target)])

    def to_dict(self) -> dict:
        return {
            "feature_ids": list(self.feature_ids), "class_names": list(self.class_names),
            "mean": self.mean.tolist(), "std": self.std.tolist(), "active": self.active.tolist(),
            "weights": self.weights.tolist(), "bias": self.bias.tolist(), "mode": self.mode,
            "ablate": list(self.ablate), "seed": self.seed, "l2": self.l2,
            "positive_class": self.positive_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        return cls(
            feature_ids=list(d["feature_ids"]), class_names=list(d["class_names"]),
            mean=np.array(d["mean"]), std=np.array(d["std"]),
            active=np.array(d["active"], dtype=bool), weights=np.array(d["weights"]),
            bias=np.array(d["bias"]), mode=d.get("mode", "bounds"), ablate=list(d.get("ablate", [])),
            seed=d.get("seed", 0), l2=d.get("l2", DEFAULT_L2), positive_class=d.get("positive_class"),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_logistic(X, y, class_names, *, l2: float = DEFAULT_L2, lr: float = DEFAULT_LR,
                 iters: int = DEFAULT_ITERS, feature_ids_=None, seed: int = 0) -> ClassifierModel:
    """Full-batch gradient descent on mean cross-entropy + l2/(2N) ||W||^2."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    N, F = X.shape
    K = len(class_names)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    active = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(active, std, 1.0)
    model = ClassifierModel(list(feature_ids_ or range(F)), list(class_names), mean, std, active,
                            np.zeros((K, F)), np.zeros(K), seed=seed, l2=l2)
    Z = model.transform(X)[:, active]
    Y = np.eye(K)[y]
    W = np.zeros((K, Z.shape[1]))
    b = np.zeros(K)
    for _ in range(iters):
        P = _softmax(Z @ W.T + b)
        G = (P - Y) / N
        W -= lr * (G.T @ Z + (l2 / N) * W)
        b -= lr * G.sum(axis=0)
    model.weights[:, active] = W
    model.bias = b
    return model


def stratified_folds(y, folds: int, seed: int) -> list[np.ndarray]:
    """Test-index arrays; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    rng = substream(seed, "folds")
    assign = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < folds:
            raise InsufficientData(f"class {c} has {len(idx)} examples, need >= {folds}")
        idx = rng.permutation(idx)
        assign[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return [np.flatnonzero(assign == f) for f in range(folds)]


def accuracy(y_true, y_pred) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def macro_f1(y_true, y_pred, num_classes: int) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    scores = []
    for c in range(num_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class FeatureTable:
    ids: list
    X: np.ndarray
    y: np.ndarray
    class_names: list
    tree_ids: list
    mode: str = "bounds"
    ablate: list = field(default_factory=list)

    def drop_categories(self, ablate) -> "FeatureTable":
        keep_ids = feature_ids(self.mode, sorted(set(self.ablate) | set(ablate)))
        cols = [self.ids.index(k) for k in keep_ids]
        return FeatureTable(keep_ids, self.X[:, cols], self.y, self.class_names, self.tree_ids,
                            self.mode, sorted(set(self.ablate) | set(ablate)))


def featurize_dataset(dataset: CascadeDataset, mode: str = "bounds", ablate=()) -> FeatureTable:
    ids = feature_ids(mode, ablate)
    rows = parallel_map(lambda t: assemble_representation(t, mode, ablate), dataset.trees)
    X = np.vstack(rows) if rows else np.zeros((0, len(ids)))
    return FeatureTable(ids, X, dataset.labels(), list(dataset.class_names),
                        [t.id for t in dataset.trees], mode, sorted(ablate))


@dataclass
class CVResult:
    models: list
    fold_acc: list
    fold_f1: list
    predictions: np.ndarray

    @property
    def acc(self) -> float:
        return float(np.mean(self.fold_acc))

    @property
    def f1(self) -> float:
        return float(np.mean(self.fold_f1))

    @property
    def acc_std(self) -> float:
        return float(np.std(self.fold_acc))

    @property
    def f1_std(self) -> float:
        return float(np.std(self.fold_f1))


def cross_validate(table: FeatureTable, folds: int = 5, seed: int = 0, *, l2: float = DEFAULT_L2,
                   lr: float = DEFAULT_LR, iters: int = DEFAULT_ITERS) -> CVResult:
    K = len(table.class_names)
    test_sets = stratified_folds(table.y, folds, seed)
    preds = np.full(len(table.y), -1, dtype=np.int64)
    models, accs, f1s = [], [], []
    for test in test_sets:
        train = np.setdiff1d(np.arange(len(table.y)), test)
        model = fit_logistic(table.X[train], table.y[train], table.class_names, l2=l2, lr=lr,
                             iters=iters, feature_ids_=table.ids, seed=seed)
        model.mode = table.mode
        model.ablate = list(table.ablate)
        model.positive_class = default_positive_class(table.class_names)
        p = model.predict(table.X[test])
        preds[test] = p
        models.append(model)
        accs.append(accuracy(table.y[test], p))
        f1s.append(macro_f1(table.y[test], p, K))
    return CVResult(models, accs, f1s, preds)


def random_baseline(y, num_classes: int, folds: int = 5, seed: int = 0) -> CVResult:
    """Uniformly random predictions scored on the same stratified folds."""
    rng = substream(seed, "random-baseline")
    accs, f1s = [], []
    preds = rng.integers(0, num_classes, size=len(y))
    for test in stratified_folds(y, folds, seed):
        accs.append(accuracy(np.asarray(y)[test], preds[test]))
        f1s.append(macro_f1(np.asarray(y)[test], preds[test], num_classes))
    return CVResult([], accs, f1s, preds)


def train_classifier(dataset: CascadeDataset, mode: str = "bounds", ablate=(), folds: int = 5,
                     seed: int = 0, **kw):
    """Featurize, then k-fold CV.  Returns ``(per-fold models, metrics dict)``."""
    table = featurize_dataset(dataset, mode, ablate)
    res = cross_validate(table, folds, seed, **kw)
    metrics = {"acc": res.acc, "acc_std": res.acc_std, "f1": res.f1, "f1_std": res.f1_std,
               "fold_acc": res.fold_acc, "fold_f1": res.fold_f1}
    return res.models, metrics


def fit_full(table: FeatureTable, seed: int = 0, **kw) -> ClassifierModel:
    """One model on all rows (used to drive score-guided optimisation)."""
    model = fit_logistic(table.X, table.y, table.class_names, feature_ids_=table.ids, seed=seed, **kw)
    model.mode = table.mode
    model.ablate = list(table.ablate)
    model.positive_class = default_positive_class(table.class_names)
    return model
