"""``sct`` command-line entry point.

Every run writes ``config.json`` (the exact :class:`RunConfig`) and a result
file into ``--output-dir``.  ``sct rerun --config DIR/config.json`` replays a
run.  Exit codes: 0 success, 1 usage error, 2 data error (including a trace
that fails validation).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, classify
from .bounds import BOUND_IDS, CATEGORIES, bound_vector
from .cascade import TREE_KINDS, CascadeDataset, generate_tree, load_dataset, save_dataset
from .classify import ClassifierModel, featurize_dataset, fit_full, substream
from .errors import DataError, SpectralCascadeError, UnsupportedBoundFamily
from .features import MODES
from .optimize import BOUND_TAU, SCORE_TAU, optimize_bound, optimize_score, trace_report, validate_trace
from .perturbation import BENCHMARK_COLUMNS, BENCHMARK_SIZES, TARGETS, benchmark_approximation
from .spectra import check_invariants, decompose

log = logging.getLogger("spectral_cascade")

COMMANDS = ("validate", "generate", "spectrum", "bounds", "features", "tightness", "zscore",
            "classify", "ablate", "optimize-score", "optimize-bound", "bench-approx",
            "validate-trace")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    output_dir: str = "sct-out"
    seed: int = 0
    dataset: str | None = None
    filter_min_n: int = 3
    filter_max_n: int = 10000
    on_invalid: str = "raise"
    representation: str = "bounds"
    ablate: list = field(default_factory=list)
    folds: int = 5
    search_mode: str = "approx"
    verify_exact: bool = False
    bound: str | None = None
    tau: float | None = None
    max_iters: int = 10
    direction: int = 1
    model: str | None = None
    target_class: str | None = None
    tree_index: int = 0
    tree_id: str | None = None
    kind: str = "random_recursive"
    n: int = 20
    count: int = 100
    population: str | None = None
    label: str | None = None
    sizes: list = field(default_factory=lambda: list(BENCHMARK_SIZES))
    samples: int = 20
    target: str = "lambda1"
    bins: int = 8
    global_z: bool = False
    pairs: list | None = None
    trace: str | None = None
    fast: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if d.get("command") not in COMMANDS:
            raise UsageError(f"unknown command {d.get('command')!r}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- argument parsing -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _direction(text):
    v = int(text)
    if v not in (1, -1):
        raise argparse.ArgumentTypeError("direction must be +1 or -1")
    return v


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _categories(text):
    cats = [c.strip().upper() for c in text.split(",") if c.strip()]
    bad = set(cats) - set(CATEGORIES)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown categories {sorted(bad)}")
    return cats


def _pairs(text):
    out = []
    for item in text.split(","):
        b, _, q = item.partition(":")
        if not q:
            raise argparse.ArgumentTypeError("pairs look like bound:property,...")
        out.append([b.strip(), q.strip()])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sct", description="Spectral analysis of propagation trees.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, dataset=True, required=True):
        sp.add_argument("--output-dir", default="sct-out")
        sp.add_argument("--seed", type=int, default=0)
        if dataset:
            sp.add_argument("--dataset", required=required)
            sp.add_argument("--filter-min-n", type=int, default=3)
            sp.add_argument("--filter-max-n", type=int, default=10000)
            sp.add_argument("--on-invalid", choices=("raise", "skip"), default="raise")

    def repr_opts(sp):
        sp.add_argument("--mode", dest="representation", choices=MODES, default="bounds")
        sp.add_argument("--ablate", type=_categories, default=[])

    def tree_opts(sp):
        sp.add_argument("--tree-index", type=int, default=0)
        sp.add_argument("--tree-id")
        sp.add_argument("--kind", choices=TREE_KINDS, default="random_recursive")
        sp.add_argument("--n", type=int, default=20)

    def search_opts(sp):
        sp.add_argument("--tau", type=float)
        sp.add_argument("--max-iters", type=int, default=10)
        sp.add_argument("--direction", type=_direction, default=1)
        sp.add_argument("--model")
        sp.add_argument("--target-class")

    sp = sub.add_parser("validate", help="check a dataset and report rejected cascades")
    common(sp)
    sp = sub.add_parser("generate", help="write a synthetic dataset")
    common(sp, dataset=False)
    sp.add_argument("--kind", choices=TREE_KINDS, default="random_recursive")
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--label")
    sp.add_argument("--population", choices=("star-path",))
    for name in ("spectrum", "bounds"):
        common(sub.add_parser(name, help=f"export per-tree {name}"))
    sp = sub.add_parser("features", help="export the feature matrix")
    common(sp)
    repr_opts(sp)
    sp = sub.add_parser("tightness", help="bound/property tightness and correlations")
    common(sp)
    sp.add_argument("--pairs", type=_pairs)
    sp = sub.add_parser("zscore", help="per-size-bin eigenvalue z-score gaps")
    common(sp)
    sp.add_argument("--bins", type=int, default=8)
    sp.add_argument("--global-z", action="store_true")
    for name in ("classify", "ablate"):
        sp = sub.add_parser(name, help="cross-validated classification" if name == "classify"
                            else "category ablation table")
        common(sp)
        repr_opts(sp)
        sp.add_argument("--folds", type=int, default=5)
    sp = sub.add_parser("optimize-score", help="greedy search on a classifier score")
    common(sp, required=False)
    tree_opts(sp)
    search_opts(sp)
    repr_opts(sp)
    sp.add_argument("--fast", action="store_true")
    sp = sub.add_parser("optimize-bound", help="greedy search on a spectral bound")
    common(sp, required=False)
    tree_opts(sp)
    search_opts(sp)
    sp.add_argument("--bound", required=True, choices=BOUND_IDS)
    sp.add_argument("--mode", dest="search_mode", choices=("approx", "exact"), default="approx")
    sp.add_argument("--verify-exact", action="store_true")
    sp = sub.add_parser("bench-approx", help="first-order estimate vs exact benchmark")
    common(sp, required=False)
    sp.add_argument("--sizes", type=_int_list, default=list(BENCHMARK_SIZES))
    sp.add_argument("--target", choices=sorted(TARGETS), default="lambda1")
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--kind", choices=TREE_KINDS, default="random_recursive")
    sp = sub.add_parser("validate-trace", help="re-check a trace JSON file")
    common(sp, dataset=False)
    sp.add_argument("--trace", required=True)
    sp = sub.add_parser("rerun", help="replay a run from its config.json")
    sp.add_argument("--config", required=True)
    sp.add_argument("--output-dir")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    d = {k: v for k, v in vars(ns).items() if k in known and v is not None}
    return RunConfig.from_dict(d)


# -- helpers ----------------------------------------------------------------

def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v) for v in r])
    return buf.getvalue()


def _load(cfg: RunConfig) -> CascadeDataset:
    if cfg.dataset is None:
        raise UsageError("--dataset is required")
    return load_dataset(cfg.dataset, min_n=cfg.filter_min_n, max_n=cfg.filter_max_n,
                        on_invalid=cfg.on_invalid)


def _pick_tree(cfg: RunConfig):
    if cfg.dataset is None:
        seed = int(substream(cfg.seed, "tree").integers(0, 2**31))
        return generate_tree(cfg.kind, cfg.n, seed), None
    ds = _load(cfg)
    if cfg.tree_id is not None:
        match = [t for t in ds.trees if t.id == cfg.tree_id]
        if not match:
            raise DataError(f"no tree with id {cfg.tree_id!r}")
        return match[0], ds
    if not 0 <= cfg.tree_index < len(ds):
        raise DataError(f"tree index {cfg.tree_index} outside 0..{len(ds) - 1}")
    return ds.trees[cfg.tree_index], ds


def _model(cfg: RunConfig, ds):
    if cfg.model is not None:
        return ClassifierModel.load(cfg.model)
    if ds is None:
        return None
    return fit_full(featurize_dataset(ds, cfg.representation, cfg.ablate), seed=cfg.seed)


# -- commands ---------------------------------------------------------------

def cmd_validate(cfg, out):
    cfg.on_invalid = "skip"
    ds = _load(cfg)
    rep = ds.report.to_dict()
    rep["class_names"] = list(ds.class_names)
    _write(out / "report.json", _json(rep))


def cmd_generate(cfg, out):
    rng = substream(cfg.seed, "generate")
    if cfg.population == "star-path":
        ds = analysis.star_path_population(cfg.count, seed=cfg.seed)
        trees = ds.trees
    else:
        seeds = rng.integers(0, 2**31, size=cfg.count)
        trees = [generate_tree(cfg.kind, cfg.n, int(s), label=cfg.label) for s in seeds]
    save_dataset(trees, out / "dataset.jsonl")


def cmd_spectrum(cfg, out):
    ds = _load(cfg)
    lines = []
    for t in ds.trees:
        s = decompose(t, vectors=True)
        rec = {"id": t.id, "n": t.n, **s.to_dict(vectors=False),
               "invariant_failures": check_invariants(s)}
        lines.append(json.dumps(rec))
    _write(out / "spectra.jsonl", "\n".join(lines) + ("\n" if lines else ""))


def cmd_bounds(cfg, out):
    ds = _load(cfg)
    rows = []
    for t in ds.trees:
        bv = bound_vector(t)
        rows.append([t.id, t.label, t.n] + [bv.values[k] if bv.applicable[k] else None
                                            for k in BOUND_IDS])
    _write(out / "bounds.csv", _csv_text(["id", "label", "n", *BOUND_IDS], rows))


def cmd_features(cfg, out):
    ds = _load(cfg)
    table = featurize_dataset(ds, cfg.representation, cfg.ablate)
    rows = [[tid, t.label] + [float(x) for x in row]
            for tid, t, row in zip(table.tree_ids, ds.trees, table.X)]
    _write(out / "features.csv", _csv_text(["id", "label", *table.ids], rows))


def cmd_tightness(cfg, out):
    ds = _load(cfg)
    pairs = [tuple(p) for p in cfg.pairs] if cfg.pairs else analysis.DEFAULT_PAIRS
    _write(out / "tightness.csv", analysis.tightness_analysis(ds, pairs).to_csv())


def cmd_zscore(cfg, out):
    ds = _load(cfg)
    rep = analysis.zscore_analysis(ds, bins=cfg.bins, global_standardization=cfg.global_z)
    _write(out / "zscore.csv", rep.to_csv())


def cmd_classify(cfg, out):
    ds = _load(cfg)
    table = featurize_dataset(ds, cfg.representation, cfg.ablate)
    res = classify.cross_validate(table, cfg.folds, cfg.seed)
    name = Path(cfg.dataset).stem
    row = analysis._metric_row(cfg.representation, name, res)
    _write(out / "metrics.csv", analysis.metrics_csv([row]))
    model = fit_full(table, seed=cfg.seed)
    _write(out / "model.json", json.dumps(model.to_dict()) + "\n")


def cmd_ablate(cfg, out):
    ds = _load(cfg)
    rows = analysis.ablation_study(ds, folds=cfg.folds, seed=cfg.seed, mode=cfg.representation,
                                   dataset_name=Path(cfg.dataset).stem)
    _write(out / "ablation.csv", analysis.metrics_csv(rows))


def cmd_optimize_score(cfg, out):
    tree, ds = _pick_tree(cfg)
    model = _model(cfg, ds)
    if model is None:
        raise UsageError("optimize-score needs --model or a labelled --dataset")
    tau = SCORE_TAU if cfg.tau is None else cfg.tau
    trace = optimize_score(tree, model, cfg.max_iters, cfg.direction, tau,
                           target_class=cfg.target_class, fast=cfg.fast)
    _write(out / "trace.json", json.dumps(trace_report(trace)) + "\n")


def cmd_optimize_bound(cfg, out):
    tree, ds = _pick_tree(cfg)
    model = ClassifierModel.load(cfg.model) if cfg.model else None
    tau = BOUND_TAU if cfg.tau is None else cfg.tau
    trace = optimize_bound(tree, cfg.bound, cfg.max_iters, cfg.direction, tau, cfg.search_mode,
                           verify_exact=cfg.verify_exact, model=model, target_class=cfg.target_class)
    _write(out / "trace.json", json.dumps(trace_report(trace)) + "\n")


def cmd_bench_approx(cfg, out):
    trees = _load(cfg).trees if cfg.dataset else None
    rows, records = benchmark_approximation(cfg.sizes, cfg.samples, cfg.target, trees=trees,
                                            kind=cfg.kind, seed=cfg.seed, return_records=True)
    _write(out / "bench.csv", _csv_text(BENCHMARK_COLUMNS,
                                        [[getattr(r, c) for c in BENCHMARK_COLUMNS] for r in rows]))
    cols = list(records[0]) if records else []
    _write(out / "bench_records.csv", _csv_text(cols, [[r[c] for c in cols] for r in records]))


def cmd_validate_trace(cfg, out):
    text = Path(cfg.trace).read_text(encoding="utf-8")
    rep = validate_trace(text)
    _write(out / "validation.json", _json(rep.to_dict()))
    for check, msg in rep.failures:
        print(f"fail: {check}: {msg}", file=sys.stderr)
    return 0 if rep.passed else 2


HANDLERS = {
    "validate": cmd_validate, "generate": cmd_generate, "spectrum": cmd_spectrum,
    "bounds": cmd_bounds, "features": cmd_features, "tightness": cmd_tightness,
    "zscore": cmd_zscore, "classify": cmd_classify, "ablate": cmd_ablate,
    "optimize-score": cmd_optimize_score, "optimize-bound": cmd_optimize_bound,
    "bench-approx": cmd_bench_approx, "validate-trace": cmd_validate_trace,
}


def execute(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.json", _json(cfg.to_dict()))
    code = HANDLERS[cfg.command](dataclasses.replace(cfg), out)
    return code or 0


def run(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if ns.command == "rerun":
            try:
                d = json.loads(Path(ns.config).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config: {exc}") from exc
            if ns.output_dir:
                d["output_dir"] = ns.output_dir
            cfg = RunConfig.from_dict(d)
        else:
            cfg = config_from_args(ns)
        return execute(cfg)
    except (UsageError, UnsupportedBoundFamily) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, SpectralCascadeError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
