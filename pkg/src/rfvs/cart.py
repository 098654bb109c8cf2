"""Unpruned binary CART trees with per-node random feature subsets."""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import CLASSIFICATION, REGRESSION


def default_nodesize(task):
    return 1 if task == CLASSIFICATION else 5


@dataclass
class TreeConfig:
    mtry: int
    nodesize: int
    task: str
    seed: int = 0


class Tree:
    """Flat-array binary tree. feature[i] == -1 marks a leaf whose
    prediction is value[i] (class id for classification, mean otherwise)."""

    __slots__ = ("feature", "threshold", "left", "right", "value",
                 "bootstrap", "oob_indices")

    def __init__(self, feature, threshold, left, right, value,
                 bootstrap=None, oob_indices=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.bootstrap = bootstrap
        self.oob_indices = oob_indices

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def used_features(self):
        f = self.feature[self.feature >= 0]
        return np.unique(f).astype(np.int64)

    def predict(self, X, rows=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if rows is None:
            rows = np.arange(X.shape[0], dtype=np.int64)
        else:
            rows = np.asarray(rows, dtype=np.int64)
        out = np.empty(rows.shape[0], dtype=np.float64)
        _kernels.predict_rows_kernel(self.feature, self.threshold, self.left,
                                     self.right, self.value, X, rows, out)
        return out

    def to_json(self):
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({"split": [int(self.feature[i]), float(self.threshold[i])],
                              "left": int(self.left[i]), "right": int(self.right[i])})
            else:
                nodes.append({"leaf": float(self.value[i])})
        doc = {"nodes": nodes}
        if self.bootstrap is not None:
            doc["bootstrap"] = [int(i) for i in self.bootstrap]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        nodes = doc["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n, dtype=np.float64)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n, dtype=np.float64)
        for i, nd in enumerate(nodes):
            if "split" in nd:
                feature[i], threshold[i] = nd["split"][0], nd["split"][1]
                left[i], right[i] = nd["left"], nd["right"]
            else:
                value[i] = nd["leaf"]
        boot = doc.get("bootstrap")
        boot = None if boot is None else np.asarray(boot, dtype=np.int64)
        return cls(feature, threshold, left, right, value, bootstrap=boot)


def _response_arrays(d):
    if d.task == CLASSIFICATION:
        return d.response.astype(np.float64), d.response, d.n_classes
    return d.response, np.zeros(d.n, dtype=np.int64), 0


def best_split(rows, candidate_features, d):
    """Best (feature, threshold, impurity_decrease) over the candidates,
    or None when no candidate admits a strictly improving split."""
    y, labels, n_classes = _response_arrays(d)
    f, thr, gain = _kernels.best_split_kernel(
        d.features, y, labels, n_classes,
        np.asarray(rows, dtype=np.int64),
        np.asarray(candidate_features, dtype=np.int64))
    if f < 0:
        return None
    return int(f), float(thr), float(gain)


def grow_tree(d, bootstrap, cfg):
    """Grow one maximal tree on the bootstrap rows.

    Feature-subset draws come from a stream seeded by cfg.seed alone, so
    (d, bootstrap, cfg) fully determines the tree.
    """
    bootstrap = np.asarray(bootstrap, dtype=np.int64)
    if bootstrap.size == 0:
        raise ValueError("empty bootstrap")
    return grow_tree_raw(d, bootstrap, _kernels.feature_stream(cfg.seed),
                         cfg.mtry, cfg.nodesize)


def grow_tree_raw(d, bootstrap, feat_stream, mtry, nodesize):
    y, labels, n_classes = _response_arrays(d)
    cap = 2 * bootstrap.size + 2
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap, dtype=np.float64)
    with np.errstate(over="ignore"):
        n_nodes = _kernels.grow_tree_kernel(
            d.features, y, labels, n_classes, bootstrap, feat_stream,
            int(min(mtry, d.p)), int(nodesize), feature, threshold, left, right, value)
    oob = np.ones(d.n, dtype=bool)
    oob[bootstrap] = False
    return Tree(feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
                left[:n_nodes].copy(), right[:n_nodes].copy(),
                value[:n_nodes].copy(), bootstrap=bootstrap,
                oob_indices=np.flatnonzero(oob).astype(np.int64))


def predict_tree(t, x):
    """Route a single feature vector through the tree."""
    return float(t.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def fit_1d_curve_tree(ys, min_leaf=5):
    """Piecewise-constant least-squares fit of ys against its rank order.

    A 1-D regression CART: recursively take the SSE-optimal split whose
    children both hold at least min_leaf points, no other stopping. Returns
    the fitted value at every rank.
    """
    ys = np.asarray(ys, dtype=np.float64)
    m = ys.shape[0]
    if m < 2:
        raise ValueError("need at least 2 points")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    fitted = np.empty(m, dtype=np.float64)

    def fit_segment(lo, hi):
        seg = ys[lo:hi]
        n = hi - lo
        if n < 2 * min_leaf:
            fitted[lo:hi] = seg.mean()
            return
        csum = np.cumsum(seg)
        total = csum[-1]
        counts = np.arange(1, n)
        left_term = csum[:-1] ** 2 / counts
        right_term = (total - csum[:-1]) ** 2 / (n - counts)
        gain = left_term + right_term - total ** 2 / n
        lo_cut, hi_cut = min_leaf - 1, n - min_leaf
        window = gain[lo_cut:hi_cut]
        if window.size == 0 or window.max() <= 0:
            fitted[lo:hi] = seg.mean()
            return
        cut = lo_cut + int(np.argmax(window)) + 1
        fit_segment(lo, lo + cut)
        fit_segment(lo + cut, hi)

    fit_segment(0, m)
    return fitted
