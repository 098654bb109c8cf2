"""Bootstrap ensembles: OOB error, aggregated OOB predictions and
permutation variable importance.

Trees are grown in fixed-size chunks by a batched kernel; chunk boundaries
do not depend on the thread count and chunk results are reduced in index
order, so every aggregate is bit-identical across thread schedules.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .cart import Tree, default_nodesize
from .data import CLASSIFICATION, derive_seed

_PERM_TAG = 0x7065
_CHUNK = 64


@dataclass
class ImportanceReport:
    mean_vi: np.ndarray
    sd_vi: np.ndarray
    runs: int
    ranking: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ranking is None:
            p = self.mean_vi.shape[0]
            # decreasing mean, ties toward the lower variable index
            self.ranking = np.lexsort((np.arange(p), -self.mean_vi)).astype(np.int64)


@dataclass
class ForestConfig:
    ntree: int = 500
    mtry: int = None  # None -> floor(sqrt(p)) classification, floor(p/3) regression
    nodesize: int = None  # None -> 1 classification, 5 regression
    seed: int = 0

    def resolve(self, d):
        """Concrete (mtry, nodesize) for a given dataset."""
        if self.mtry is None:
            base = math.sqrt(d.p) if d.task == CLASSIFICATION else d.p / 3
            mtry = max(1, int(base))
        else:
            mtry = int(self.mtry)
        if not (1 <= mtry <= d.p):
            raise ValueError(f"mtry={mtry} outside 1..{d.p}")
        nodesize = default_nodesize(d.task) if self.nodesize is None else int(self.nodesize)
        if nodesize < 1:
            raise ValueError("nodesize must be >= 1")
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        return mtry, nodesize


class Forest:
    """Fitted ensemble; per-tree node arrays are stored as stacked slabs."""

    def __init__(self, slabs, nnodes, boot, config, task, n_classes,
                 oob_predictions, oob_error, n_never_oob, per_class_errors=None):
        self._feat, self._thr, self._left, self._right, self._val = slabs
        self.nnodes = nnodes
        self.boot = boot
        self.config = config
        self.task = task
        self.n_classes = n_classes
        self.oob_predictions = oob_predictions
        self.oob_error = oob_error
        self.n_never_oob = n_never_oob
        self.per_class_errors = per_class_errors

    @property
    def ntree(self):
        return self._feat.shape[0]

    def tree(self, t):
        """Materialize tree t as a standalone Tree value."""
        nn = self.nnodes[t]
        n = self.boot.shape[1]
        oob = np.ones(n, dtype=bool)
        oob[self.boot[t]] = False
        return Tree(self._feat[t, :nn].copy(), self._thr[t, :nn].copy(),
                    self._left[t, :nn].copy(), self._right[t, :nn].copy(),
                    self._val[t, :nn].copy(), bootstrap=self.boot[t].copy(),
                    oob_indices=np.flatnonzero(oob).astype(np.int64))

    @property
    def trees(self):
        return [self.tree(t) for t in range(self.ntree)]


def bootstrap_for(seed, tree_idx, n):
    """The bootstrap rows tree `tree_idx` of a forest with this seed draws."""
    return _kernels.fill_bootstrap(_kernels.bootstrap_stream(seed, tree_idx), n)


def _chunks(ntree):
    return [(t0, min(t0 + _CHUNK, ntree)) for t0 in range(0, ntree, _CHUNK)]


def _response_arrays(d):
    if d.task == CLASSIFICATION:
        return d.response.astype(np.float64), d.response, d.n_classes
    return d.response, np.zeros(d.n, dtype=np.int64), 0


def fit_forest(d, cfg, threads=1):
    """Grow cfg.ntree trees on independent bootstraps and aggregate OOB.

    Classification aggregates by majority vote (ties -> lowest class id),
    regression by mean. Observations never out of bag are excluded from the
    error and counted in n_never_oob. Deterministic in (d, cfg) regardless
    of the thread count.
    """
    mtry, nodesize = cfg.resolve(d)
    n = d.n
    y, labels, n_classes = _response_arrays(d)
    cap = 2 * n + 2
    ntree = cfg.ntree
    feat_s = np.empty((ntree, cap), np.int64)
    thr_s = np.empty((ntree, cap), np.float64)
    left_s = np.empty((ntree, cap), np.int64)
    right_s = np.empty((ntree, cap), np.int64)
    val_s = np.empty((ntree, cap), np.float64)
    nnodes = np.empty(ntree, np.int64)
    boot = np.empty((ntree, n), np.int64)
    seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)

    spans = _chunks(ntree)

    def run_chunk(span):
        t0, t1 = span
        if n_classes > 0:
            votes = np.zeros((n, n_classes), np.int64)
            sums = np.zeros(0)
            counts = np.zeros(0, np.int64)
        else:
            votes = np.zeros((1, 1), np.int64)
            sums = np.zeros(n)
            counts = np.zeros(n, np.int64)
        _kernels.fit_forest_chunk_kernel(
            d.features, y, labels, n_classes, seed, t0, t1, mtry, nodesize,
            feat_s, thr_s, left_s, right_s, val_s, nnodes, boot,
            votes, sums, counts)
        return votes, sums, counts

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, spans))
    else:
        parts = [run_chunk(s) for s in spans]

    if n_classes > 0:
        votes = np.zeros((n, n_classes), np.int64)
        for v, _s, _c in parts:
            votes += v
        covered = votes.sum(axis=1) > 0
        oob_pred = np.full(n, -1.0)
        oob_pred[covered] = np.argmax(votes[covered], axis=1)
        err = float(np.mean(oob_pred[covered] != d.response[covered])) if covered.any() else float("nan")
        per_class = np.full(d.n_classes, np.nan)
        for c in range(d.n_classes):
            mask = covered & (d.response == c)
            if mask.any():
                per_class[c] = float(np.mean(oob_pred[mask] != c))
    else:
        sums = np.zeros(n)
        counts = np.zeros(n, np.int64)
        for _v, s, c in parts:
            sums += s
            counts += c
        covered = counts > 0
        oob_pred = np.full(n, np.nan)
        oob_pred[covered] = sums[covered] / counts[covered]
        err = float(np.mean((oob_pred[covered] - d.response[covered]) ** 2)) if covered.any() else float("nan")
        per_class = None

    return Forest(slabs=(feat_s, thr_s, left_s, right_s, val_s),
                  nnodes=nnodes, boot=boot, config=cfg, task=d.task,
                  n_classes=d.n_classes, oob_predictions=oob_pred,
                  oob_error=err, n_never_oob=int(n - covered.sum()),
                  per_class_errors=per_class)


def predict_forest(f, X, threads=1):
    """Aggregate prediction of a fitted forest on new rows."""
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    spans = _chunks(f.ntree)

    def run_chunk(span):
        t0, t1 = span
        if f.task == CLASSIFICATION:
            votes = np.zeros((m, f.n_classes), np.int64)
            sums = np.zeros(0)
        else:
            votes = np.zeros((m, 0), np.int64)
            sums = np.zeros(m)
        _kernels.forest_predict_chunk_kernel(
            f._feat, f._thr, f._left, f._right, f._val, t0, t1, X, votes, sums)
        return votes, sums

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, spans))
    else:
        parts = [run_chunk(s) for s in spans]

    if f.task == CLASSIFICATION:
        votes = np.zeros((m, f.n_classes), np.int64)
        for v, _s in parts:
            votes += v
        return np.argmax(votes, axis=1)
    sums = np.zeros(m)
    for _v, s in parts:
        sums += s
    return sums / f.ntree


def test_error(f, d_test):
    preds = predict_forest(f, d_test.features)
    if f.task == CLASSIFICATION:
        return float(np.mean(preds != d_test.response))
    return float(np.mean((preds - d_test.response) ** 2))


def oob_error_mean(d, cfg, repeats=10, threads=1):
    """Mean and sample sd of OOB error over `repeats` independent forests
    (seeds derived from cfg.seed)."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    errs = np.empty(repeats)
    for r in range(repeats):
        errs[r] = fit_forest(d, replace(cfg, seed=derive_seed(cfg.seed, r)),
                             threads=threads).oob_error
    sd = float(np.std(errs, ddof=1)) if repeats > 1 else 0.0
    return float(errs.mean()), sd


def permutation_importance(f, d, n_perm=1, seed=None, threads=1):
    """Raw mean decrease in per-tree OOB accuracy when one variable's OOB
    values are permuted; length-p vector, may be negative.

    Each (tree, variable) pair owns an independent permutation stream keyed
    by (seed, tree index, variable); skipping variables a tree never splits
    on cannot perturb the others. Trees with an empty OOB set are skipped
    and do not count in the averaging denominator.
    """
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    if seed is None:
        seed = derive_seed(f.config.seed, _PERM_TAG)
    y = d.response.astype(np.float64) if d.task == CLASSIFICATION else d.response
    n_classes = d.n_classes if d.task == CLASSIFICATION else 0
    pseed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    spans = _chunks(f.ntree)

    def run_chunk(span):
        t0, t1 = span
        vi = np.zeros(d.p)
        n_eff = _kernels.forest_vi_chunk_kernel(
            f._feat, f._thr, f._left, f._right, f._val, f.nnodes, f.boot,
            d.features, y, n_classes, pseed, int(n_perm), t0, t1, vi)
        return vi, n_eff

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, spans))
    else:
        parts = [run_chunk(s) for s in spans]

    vi = np.zeros(d.p)
    n_eff = 0
    for v, ne in parts:
        vi += v
        n_eff += ne
    if n_eff == 0:
        raise ValueError("no tree has a non-empty OOB set")
    return vi / n_eff


def importance_report(d, cfg, runs=50, threads=1):
    """Mean/sd of permutation importance over `runs` independent forests."""
    if runs < 2:
        raise ValueError("need runs >= 2")
    vis = np.empty((runs, d.p))
    for r in range(runs):
        fcfg = replace(cfg, seed=derive_seed(cfg.seed, r))
        f = fit_forest(d, fcfg, threads=threads)
        vis[r] = permutation_importance(
            f, d, seed=derive_seed(cfg.seed, r, _PERM_TAG), threads=threads)
    return ImportanceReport(mean_vi=vis.mean(axis=0),
                            sd_vi=vis.std(axis=0, ddof=1), runs=runs)
