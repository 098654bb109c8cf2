"""Experiment harness: dataset sources, mtry/ntree sweeps, VI studies,
cross-validated selection and train/test evaluation."""

import json
import math
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import CLASSIFICATION, REGRESSION, DataError, Dataset, derive_seed, \
    load_csv, stratified_folds
from .forest import ForestConfig, fit_forest, importance_report, oob_error_mean, \
    test_error
from .select import SelectionConfig, select_variables
from .synth import FriedmanConfig, ReplicateSpec, ToysConfig, add_replicates, \
    gen_friedman, gen_toys


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# mtry expression grammar: NUM | [COEF][*]sqrt[/DIV] | [COEF][*]p[/DIV]

_EXPR_RE = re.compile(
    r"^\s*(?P<coef>\d+(?:\.\d+)?)?\s*\*?\s*(?P<base>sqrt|p)?\s*(?:/\s*(?P<div>\d+(?:\.\d+)?))?\s*$")


def parse_mtry_expr(expr, p):
    """Evaluate a symbolic mtry expression over p, e.g. "sqrt/2", "3p/4"."""
    m = _EXPR_RE.match(expr)
    if not m or (m.group("coef") is None and m.group("base") is None):
        raise ConfigError(f"cannot parse mtry expression {expr!r}")
    coef = float(m.group("coef")) if m.group("coef") else 1.0
    if m.group("base") == "sqrt":
        value = coef * math.sqrt(p)
    elif m.group("base") == "p":
        value = coef * p
    else:
        value = coef
    if m.group("div"):
        value /= float(m.group("div"))
    value = int(value)
    if not (1 <= value <= p):
        raise ConfigError(f"mtry expression {expr!r} evaluates to {value}, outside 1..{p}")
    return value


# ---------------------------------------------------------------------------
# dataset sources: "toys:n=100,p=200" | "friedman1:n=100,p=200,noise_sd=1"
#                  | "csv:PATH,task=classification,response=COLUMN"
# optional on generators: replicates=SRC:COUNT:RHO[+SRC:COUNT:RHO...]

def _parse_kv(parts):
    out = {}
    for part in parts:
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_replicate_specs(text):
    specs = []
    for item in text.split("+"):
        bits = item.split(":")
        if len(bits) != 3:
            raise ConfigError(f"replicate spec {item!r} must be SRC:COUNT:RHO (1-based SRC)")
        specs.append(ReplicateSpec(source_variable=int(bits[0]) - 1,
                                   count=int(bits[1]),
                                   correlation=float(bits[2])))
    return specs


def resolve_source(source, seed):
    """Build the Dataset a source string describes, deterministically."""
    if ":" not in source:
        raise ConfigError(f"malformed source {source!r}")
    kind, rest = source.split(":", 1)
    kind = kind.strip().lower()
    if kind == "csv":
        parts = rest.split(",")
        path = parts[0]
        kv = _parse_kv(parts[1:])
        task = kv.get("task", REGRESSION)
        if task not in (REGRESSION, CLASSIFICATION):
            raise ConfigError(f"unknown task {task!r}")
        if "response" not in kv:
            raise ConfigError("csv source needs response=COLUMN")
        return load_csv(path, task, kv["response"])

    kv = _parse_kv(rest.split(","))
    try:
        n = int(kv["n"])
        p = int(kv["p"])
    except KeyError as exc:
        raise ConfigError(f"source {source!r} needs n= and p=") from exc
    src_seed = int(kv.get("seed", seed))
    if kind == "toys":
        d = gen_toys(ToysConfig(n=n, p=p, seed=src_seed))
    elif kind in ("friedman1", "friedman2", "friedman3"):
        noise = kv.get("noise_sd")
        d = gen_friedman(FriedmanConfig(variant=int(kind[-1]), n=n, p=p,
                                        noise_sd=None if noise is None else float(noise),
                                        seed=src_seed))
    else:
        raise ConfigError(f"unknown source kind {kind!r}")
    if "replicates" in kv:
        d = add_replicates(d, parse_replicate_specs(kv["replicates"]),
                           seed=derive_seed(src_seed, 0x5EB1))
    return d


def is_generator_source(source):
    return not source.strip().lower().startswith("csv:")


def resolve_fresh_source(source, seed, draw):
    """Same generator, fresh data draw (for test sets / repeated draws)."""
    if not is_generator_source(source):
        raise ConfigError("need a generator source to draw fresh data")
    kind, rest = source.split(":", 1)
    kv = _parse_kv(rest.split(","))
    kv["seed"] = str(derive_seed(int(kv.get("seed", seed)), 0xD4A3, draw))
    rebuilt = kind + ":" + ",".join(f"{k}={v}" for k, v in kv.items())
    return resolve_source(rebuilt, seed)


# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    source: str
    mtry_grid: list
    ntree_grid: list
    repeats: int = 10
    seed: int = 0
    nodesize: int = None


@dataclass
class CvSpec:
    source: str
    folds: int = 5
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    eval_forest: ForestConfig = field(default_factory=ForestConfig)
    seed: int = 0


def run_sweep(spec, threads=1):
    """OOB error for every (mtry, ntree) grid cell; one row per cell.

    Grid entries that floor to the same mtry are computed once (first label
    wins). Rows are reproducible bit-identically from (spec, seed).
    """
    d = resolve_source(spec.source, spec.seed)
    cells = {}
    for expr in spec.mtry_grid:
        value = parse_mtry_expr(str(expr), d.p)
        cells.setdefault(value, str(expr))
    rows = []
    work = [(mtry, label, int(ntree))
            for mtry, label in sorted(cells.items())
            for ntree in spec.ntree_grid]

    def cell(args):
        mtry, label, ntree = args
        cfg = ForestConfig(ntree=ntree, mtry=mtry, nodesize=spec.nodesize,
                           seed=derive_seed(spec.seed, mtry, ntree))
        mean, sd = oob_error_mean(d, cfg, repeats=spec.repeats)
        return {"mtry_expr": label, "mtry_value": mtry, "ntree": ntree,
                "mean": mean, "sd": sd}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(cell, work))
    else:
        rows = [cell(w) for w in work]
    return rows


def run_vi_study(source, grid, runs=50, seed=0, top=16, threads=1):
    """Importance distributions across repeated forests for each grid cell.

    `grid` is a list of dicts with optional n, p, mtry, ntree overrides on
    the source. Emits per-variable VI quantiles (min, q1, median, q3, max)
    for the `top` highest-median variables, plus mean/sd.
    """
    rows = []
    for cell in grid:
        src = source
        kind, rest = source.split(":", 1)
        kv = _parse_kv(rest.split(","))
        for key in ("n", "p"):
            if key in cell:
                kv[key] = str(cell[key])
        src = kind + ":" + ",".join(f"{k}={v}" for k, v in kv.items())
        d = resolve_source(src, seed)
        mtry = cell.get("mtry")
        if isinstance(mtry, str):
            mtry = parse_mtry_expr(mtry, d.p)
        cfg = ForestConfig(ntree=int(cell.get("ntree", 500)), mtry=mtry,
                           seed=derive_seed(seed, hash_cell(cell)))
        vis = np.empty((runs, d.p))
        for r in range(runs):
            fcfg = replace(cfg, seed=derive_seed(cfg.seed, r))
            f = fit_forest(d, fcfg, threads=threads)
            from .forest import permutation_importance
            vis[r] = permutation_importance(f, d, seed=derive_seed(cfg.seed, r, 1),
                                            threads=threads)
        med = np.median(vis, axis=0)
        order = np.lexsort((np.arange(d.p), -med))[:top]
        q = np.percentile(vis, [0, 25, 50, 75, 100], axis=0)
        for v in order:
            rows.append({"cell": repr(cell), "variable": d.feature_names[v],
                         "var_index": int(v),
                         "vi_min": float(q[0, v]), "vi_q1": float(q[1, v]),
                         "vi_median": float(q[2, v]), "vi_q3": float(q[3, v]),
                         "vi_max": float(q[4, v]),
                         "vi_mean": float(vis[:, v].mean()),
                         "vi_sd": float(vis[:, v].std(ddof=1))})
    return rows


def hash_cell(cell):
    blob = json.dumps({k: str(v) for k, v in cell.items()}, sort_keys=True)
    return zlib.crc32(blob.encode())


def _fit_eval(d_train, d_test, cols, cfg, threads=1):
    sub_train = d_train.subset_columns(cols)
    f = fit_forest(sub_train, cfg, threads=threads)
    return test_error(f, d_test.subset_columns(cols))


def run_cv_selection(spec, threads=1):
    """Per-fold selection plus test errors of the interpretation-set,
    prediction-set and all-variables forests."""
    d = resolve_source(spec.source, spec.seed)
    folds = stratified_folds(d, spec.folds, derive_seed(spec.seed, 0xCF))
    fold_rows = []
    for fi, split in enumerate(folds):
        d_train = d.take_rows(split.train_indices)
        d_test = d.take_rows(split.test_indices)
        sel_cfg = replace(spec.selection, seed=derive_seed(spec.seed, 0xCF, fi))
        res = select_variables(d_train, sel_cfg, threads=threads)
        ecfg = replace(spec.eval_forest, seed=derive_seed(spec.seed, 0xCF, fi, 1))
        errs = {
            "interpretation": _fit_eval(d_train, d_test, res.interpretation_set, ecfg, threads),
            "prediction": _fit_eval(d_train, d_test, res.prediction_set, ecfg, threads),
            "all": _fit_eval(d_train, d_test, list(range(d.p)), ecfg, threads),
        }
        fold_rows.append({
            "fold": fi, "test_size": int(split.test_indices.size),
            "interpretation_set": [d.feature_names[v] for v in res.interpretation_set],
            "prediction_set": [d.feature_names[v] for v in res.prediction_set],
            "interpretation_size": len(res.interpretation_set),
            "prediction_size": len(res.prediction_set),
            "interpretation_error": errs["interpretation"],
            "prediction_error": errs["prediction"],
            "all_error": errs["all"],
        })
    weights = np.array([r["test_size"] for r in fold_rows], dtype=float)
    weights /= weights.sum()
    agg = {f"{k}_error": float(sum(w * r[f"{k}_error"] for w, r in zip(weights, fold_rows)))
           for k in ("interpretation", "prediction", "all")}
    agg["mean_interpretation_size"] = float(np.mean([r["interpretation_size"] for r in fold_rows]))
    agg["mean_prediction_size"] = float(np.mean([r["prediction_size"] for r in fold_rows]))
    return {"folds": fold_rows, "aggregate": agg}


def run_train_test_eval(source, selection, seed=0, eval_forest=None, threads=1):
    """Selection on one generated learning set, errors on a fresh test set
    of equal size, for the all/interpretation/prediction variable sets."""
    if not is_generator_source(source):
        raise ConfigError("train/test evaluation needs a generator source")
    d_train = resolve_source(source, seed)
    d_test = resolve_fresh_source(source, seed, 1)
    sel_cfg = replace(selection, seed=derive_seed(seed, 0xE7))
    res = select_variables(d_train, sel_cfg, threads=threads)
    ecfg = eval_forest if eval_forest is not None else ForestConfig()
    ecfg = replace(ecfg, seed=derive_seed(seed, 0xE7, 1))
    return {
        "interpretation_set": [d_train.feature_names[v] for v in res.interpretation_set],
        "prediction_set": [d_train.feature_names[v] for v in res.prediction_set],
        "all_error": _fit_eval(d_train, d_test, list(range(d_train.p)), ecfg, threads),
        "interpretation_error": _fit_eval(d_train, d_test, res.interpretation_set, ecfg, threads),
        "prediction_error": _fit_eval(d_train, d_test, res.prediction_set, ecfg, threads),
    }, res
