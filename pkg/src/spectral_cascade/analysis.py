"""Dataset-level analyses: bound tightness, eigenvalue z-score gaps, ablations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BOUND_IDS, CATEGORIES, CATEGORY_NAMES, bound_vector
from .cascade import CascadeDataset, PropagationTree, generate_tree
from .classify import (
    cross_validate,
    default_positive_class,
    featurize_dataset,
    parallel_map,
    random_baseline,
    substream,
)
from .errors import DegenerateInput, EmptyDataset, MissingClass
from .properties import exact_properties
from .spectra import decompose
from .stats import correlation

DEFAULT_PAIRS = (
    ("c1_lambda1", "max_degree"),
    ("c4_diam_distinct", "diameter"),
    ("c2_mu1_n", "num_nodes"),
    ("c1_branch_layer_k@1", "max_breadth"),
    ("c4_struct_virality", "diameter"),
    ("c1_branch_layer_k@1", "leaf_count"),
)
ZSCORE_STATS = ("lambda1", "mu_n_1", "nu_n_1")


def _bound_value(bv, key: str) -> float:
    """Catalog value; ``c1_branch_layer_k@k`` selects the k-th layer bound."""
    if "@" in key:
        base, k = key.split("@", 1)
        if base != "c1_branch_layer_k":
            raise ValueError(f"layer index only applies to c1_branch_layer_k, got {key}")
        layers = bv.diagnostics["branch_layer"]
        k = int(k)
        return float(layers[k - 1]) if k <= len(layers) else math.nan
    if key not in BOUND_IDS:
        raise ValueError(f"unknown bound id {key!r}")
    return bv.values[key]


@dataclass
class PairTightness:
    bound: str
    prop: str
    count: int
    excluded_zero: int
    excluded_degenerate: int
    rel_err_mean: float
    rel_err_std: float
    correlations: dict      # kind -> (coef, p); nan when undefined
    significant: dict       # kind -> bool

    def row(self) -> dict:
        out = {"bound": self.bound, "property": self.prop, "count": self.count,
               "excluded_zero": self.excluded_zero, "excluded_degenerate": self.excluded_degenerate,
               "rel_err_mean": self.rel_err_mean, "rel_err_std": self.rel_err_std}
        for kind, (c, p) in self.correlations.items():
            out[f"{kind}"] = c
            out[f"{kind}_p"] = p
            out[f"{kind}_significant"] = self.significant[kind]
        return out


@dataclass
class TightnessReport:
    pairs: list

    def rows(self) -> list[dict]:
        return [p.row() for p in self.pairs]

    def to_csv(self) -> str:
        return _csv(self.rows())


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _tree_values(tree: PropagationTree, pairs):
    bv = bound_vector(tree)
    props = exact_properties(tree)
    return [(_bound_value(bv, b), float(props.get(q))) for b, q in pairs]


def tightness_analysis(dataset: CascadeDataset, pairs=DEFAULT_PAIRS, alpha: float = 0.05
                       ) -> TightnessReport:
    """Relative error ``|q - b| / q`` and correlations between bound and property."""
    if len(dataset) == 0:
        raise EmptyDataset("tightness analysis needs at least one tree")
    pairs = list(pairs)
    per_tree = parallel_map(lambda t: _tree_values(t, pairs), dataset.trees)
    out = []
    for j, (b, q) in enumerate(pairs):
        bs = np.array([row[j][0] for row in per_tree])
        qs = np.array([row[j][1] for row in per_tree])
        finite = np.isfinite(bs)
        nonzero = qs != 0
        keep = finite & nonzero
        eps = np.abs(qs[keep] - bs[keep]) / np.abs(qs[keep])
        corr, sig = {}, {}
        for kind in ("pearson", "spearman", "kendall"):
            try:
                corr[kind] = correlation(bs[keep], qs[keep], kind)
            except DegenerateInput:
                corr[kind] = (math.nan, math.nan)
            sig[kind] = bool(corr[kind][1] < alpha)
        out.append(PairTightness(
            b, q, int(keep.sum()), int((finite & ~nonzero).sum()), int((~finite).sum()),
            float(eps.mean()) if eps.size else math.nan,
            float(eps.std()) if eps.size else math.nan, corr, sig))
    return TightnessReport(out)


# -- z-score analysis -------------------------------------------------------

def _statistic_values(tree: PropagationTree) -> dict:
    s = decompose(tree, vectors=False)
    return {"lambda1": float(s.lam[0]), "mu_n_1": float(s.mu[-2]), "nu_n_1": float(s.nu[-2])}


def log_bins(sizes, bins: int = 8) -> np.ndarray:
    """Log-spaced edges covering ``[min, max]``; the last bin is closed."""
    lo, hi = float(np.min(sizes)), float(np.max(sizes))
    if lo == hi:
        return np.array([lo, hi])
    return np.geomspace(lo, hi, bins + 1)


def assign_bins(sizes, edges) -> np.ndarray:
    idx = np.searchsorted(edges, sizes, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


@dataclass
class ZBin:
    lo: float
    hi: float
    count_fake: int
    count_real: int
    delta: dict          # statistic -> fake mean z minus real mean z (nan if flagged)
    missing_class: bool


@dataclass
class ZScoreReport:
    statistics: list
    edges: list
    bins: list
    positive_class: str
    negative_class: str
    standardization: str = "per_bin"

    def rows(self) -> list[dict]:
        out = []
        for i, b in enumerate(self.bins):
            row = {"bin": i, "lo": b.lo, "hi": b.hi, "count_fake": b.count_fake,
                   "count_real": b.count_real, "missing_class": b.missing_class}
            for s in self.statistics:
                row[f"dz_{s}"] = b.delta[s]
            out.append(row)
        return out

    def to_csv(self) -> str:
        return _csv(self.rows())


def _zscore(x):
    sd = x.std()
    return np.zeros_like(x) if sd == 0 else (x - x.mean()) / sd


def zscore_analysis(dataset: CascadeDataset, statistics=ZSCORE_STATS, bins: int | list = 8, *,
                    positive_class: str | None = None, global_standardization: bool = False
                    ) -> ZScoreReport:
    """Per node-count bin: mean z of the fake class minus mean z of the real class.

    ``bins`` is either a bin count (log-spaced over the observed n range) or
    explicit edges.  z-scores are computed within each bin over both classes
    unless ``global_standardization`` is set.
    """
    if len(dataset) == 0:
        raise EmptyDataset("z-score analysis needs at least one tree")
    names = list(dataset.class_names)
    if len(names) != 2:
        raise ValueError(f"z-score analysis needs exactly two classes, got {names}")
    pos = positive_class or default_positive_class(names)
    neg = names[1 - names.index(pos)]
    labels = np.array([t.label for t in dataset.trees])
    is_fake = labels == pos
    for cls, present in ((pos, is_fake.any()), (neg, (~is_fake).any())):
        if not present:
            raise MissingClass(f"no trees labelled {cls!r}")
    unknown = set(statistics) - set(ZSCORE_STATS)
    if unknown:
        raise ValueError(f"unknown statistics {sorted(unknown)}")

    sizes = np.array([t.n for t in dataset.trees])
    edges = np.asarray(bins, float) if not isinstance(bins, int) else log_bins(sizes, bins)
    which = assign_bins(sizes, edges)
    vals = parallel_map(_statistic_values, dataset.trees)
    table = {s: np.array([v[s] for v in vals]) for s in statistics}
    if global_standardization:
        table = {s: _zscore(x) for s, x in table.items()}

    out = []
    for i in range(len(edges) - 1):
        sel = which == i
        nf = int((sel & is_fake).sum())
        nr = int((sel & ~is_fake).sum())
        missing = nf == 0 or nr == 0
        delta = {}
        for s in statistics:
            if missing:
                delta[s] = math.nan
                continue
            x = table[s][sel]
            z = x if global_standardization else _zscore(x)
            f = is_fake[sel]
            delta[s] = float(z[f].mean() - z[~f].mean())
        out.append(ZBin(float(edges[i]), float(edges[i + 1]), nf, nr, delta, missing))
    return ZScoreReport(list(statistics), edges.tolist(), out, pos, neg,
                        "global" if global_standardization else "per_bin")


# -- ablation ---------------------------------------------------------------

def ablation_study(dataset: CascadeDataset, categories=CATEGORIES, *, folds: int = 5, seed: int = 0,
                   mode: str = "bounds", dataset_name: str = "dataset", include_random: bool = True,
                   **fit_kw) -> list[dict]:
    """Full model, then one run per removed category (plus a random baseline row)."""
    full = featurize_dataset(dataset, mode)
    K = len(dataset.class_names)
    rows = []
    if include_random:
        rb = random_baseline(full.y, K, folds, seed)
        rows.append(_metric_row("Random", dataset_name, rb))
    res = cross_validate(full, folds, seed, **fit_kw)
    rows.append(_metric_row("Full", dataset_name, res))
    for cat in categories:
        res = cross_validate(full.drop_categories([cat]), folds, seed, **fit_kw)
        rows.append(_metric_row(f"-{cat} {CATEGORY_NAMES[cat]}", dataset_name, res))
    return rows


def _metric_row(method, dataset_name, res) -> dict:
    return {"method": method, "dataset": dataset_name, "acc": 100 * res.acc,
            "acc_std": 100 * res.acc_std, "f1": 100 * res.f1, "f1_std": 100 * res.f1_std}


def metrics_csv(rows: list[dict]) -> str:
    return _csv(rows)


# -- synthetic populations --------------------------------------------------

def star_path_population(count: int = 400, sizes=(8, 40), seed: int = 0,
                         fake: str = "fake", real: str = "real") -> CascadeDataset:
    """Half stars labelled ``fake``, half paths labelled ``real``, n drawn per tree."""
    rng = substream(seed, "star-path")
    trees = []
    for i in range(count):
        kind, label = ("star", fake) if i % 2 == 0 else ("path", real)
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        trees.append(generate_tree(kind, n, 0, id=f"{kind}-{i}", label=label))
    return CascadeDataset(tuple(trees), tuple(sorted((fake, real))), "synthetic:star-path")


def shuffled_labels(dataset: CascadeDataset, seed: int = 0) -> CascadeDataset:
    rng = substream(seed, "label-shuffle")
    labels = [t.label for t in dataset.trees]
    perm = rng.permutation(len(labels))
    trees = tuple(PropagationTree(t.parent, id=t.id, label=labels[j], node_ids=t.node_ids)
                  for t, j in zip(dataset.trees, perm))
    return CascadeDataset(trees, dataset.class_names, dataset.source)
