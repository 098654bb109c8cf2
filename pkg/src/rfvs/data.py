"""Dataset container, CSV ingestion, fold splitting and seed derivation."""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"

MISSING_MARKERS = ("", "NA")


class DataError(ValueError):
    """Raised for unusable input data (missing files, bad columns, ...)."""


def derive_seed(seed, *path):
    """Deterministic 64-bit child seed for the integer path (seed, *path).

    The path length is appended as a terminator because SeedSequence ignores
    trailing zero entropy words; without it (s,), (s, 0) and (s, 0, 0) would
    all derive the same child.
    """
    entropy = (int(seed),) + tuple(int(x) for x in path) + (len(path),)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(2, np.uint64)[0])


@dataclass
class Dataset:
    """Numeric feature matrix plus response.

    features is (n, p) float64 in Fortran order (column access is the hot
    pattern). For classification the response holds class ids 0..n_classes-1.
    Immutable by convention after construction; all consumers treat it as
    read-only.
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: list
    task: str
    n_classes: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asfortranarray(self.features, dtype=np.float64)
        if self.task == CLASSIFICATION:
            self.response = np.ascontiguousarray(self.response, dtype=np.int64)
        elif self.task == REGRESSION:
            self.response = np.ascontiguousarray(self.response, dtype=np.float64)
        else:
            raise DataError(f"unknown task {self.task!r}")
        n, p = self.features.shape
        if n < 2:
            raise DataError("need at least 2 observations")
        if p < 1:
            raise DataError("need at least 1 feature column")
        if self.response.shape != (n,):
            raise DataError("response length does not match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature values")
        if len(self.feature_names) != p or len(set(self.feature_names)) != p:
            raise DataError("feature_names must be p unique strings")
        if self.task == CLASSIFICATION:
            if self.n_classes < 2:
                raise DataError("classification needs n_classes >= 2")
            present = np.unique(self.response)
            if present.min() < 0 or present.max() >= self.n_classes:
                raise DataError("class ids out of range")
            if present.size != self.n_classes:
                raise DataError("every class in 0..c-1 must occur")
        else:
            if not np.all(np.isfinite(self.response)):
                raise DataError("non-finite response values")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def subset_columns(self, cols):
        """New Dataset restricted to the given feature columns (in order)."""
        cols = list(cols)
        return Dataset(
            features=self.features[:, cols],
            response=self.response,
            feature_names=[self.feature_names[c] for c in cols],
            task=self.task,
            n_classes=self.n_classes,
            metadata=dict(self.metadata, parent_columns=cols),
        )

    def take_rows(self, rows):
        """New Dataset restricted to the given observation rows (in order)."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows, :],
            response=self.response[rows],
            feature_names=list(self.feature_names),
            task=self.task,
            n_classes=self.n_classes,
            metadata=dict(self.metadata),
        )


@dataclass
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(path, task, response_column):
    """Read a header-ed CSV into a Dataset.

    Rows with any missing cell ("NA" or empty) are dropped. Non-numeric
    feature columns and classification labels are integer-coded by first
    appearance; the coding maps and dropped-row count land in metadata.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise DataError(f"response column {response_column!r} not in header")
        rows = []
        dropped = 0
        for raw in reader:
            if not raw:
                continue
            cells = [c.strip() for c in raw]
            if len(cells) != len(header):
                raise DataError(f"{path}: row with {len(cells)} cells, expected {len(header)}")
            if any(c in MISSING_MARKERS for c in cells):
                dropped += 1
                continue
            rows.append(cells)
    if len(rows) < 2:
        raise DataError(f"{path}: fewer than 2 usable rows")

    resp_i = header.index(response_column)
    feat_names = [h for i, h in enumerate(header) if i != resp_i]
    if not feat_names:
        raise DataError(f"{path}: zero feature columns")
    feat_idx = [i for i in range(len(header)) if i != resp_i]

    n = len(rows)
    X = np.empty((n, len(feat_idx)), dtype=np.float64, order="F")
    codings = {}
    for out_j, j in enumerate(feat_idx):
        col = [r[j] for r in rows]
        vals = [_parse_float(c) for c in col]
        if all(v is not None for v in vals):
            X[:, out_j] = vals
        else:
            codes = {}
            for c in col:
                if c not in codes:
                    codes[c] = len(codes)
            X[:, out_j] = [codes[c] for c in col]
            codings[header[j]] = list(codes)

    resp_cells = [r[resp_i] for r in rows]
    response_coding = None
    if task == CLASSIFICATION:
        codes = {}
        for c in resp_cells:
            if c not in codes:
                codes[c] = len(codes)
        y = np.array([codes[c] for c in resp_cells], dtype=np.int64)
        n_classes = len(codes)
        response_coding = list(codes)
    else:
        vals = [_parse_float(c) for c in resp_cells]
        if any(v is None for v in vals):
            raise DataError(f"{path}: non-numeric regression response")
        y = np.array(vals, dtype=np.float64)
        n_classes = 0

    meta = {
        "source": str(path),
        "dropped_rows": dropped,
        "feature_codings": codings,
        "response_coding": response_coding,
    }
    return Dataset(X, y, feat_names, task, n_classes, meta)


def stratified_folds(d, k, seed):
    """k disjoint train/test Splits covering 0..n-1.

    Classification folds are stratified per class; regression folds are
    plain random partitions. Deterministic in (d, k, seed).
    """
    if k < 2:
        raise DataError("need k >= 2 folds")
    if k > d.n:
        raise DataError("more folds than observations")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), d.n, k)))
    assignments = [[] for _ in range(k)]
    if d.task == CLASSIFICATION:
        for c in range(d.n_classes):
            members = np.flatnonzero(d.response == c)
            if members.size < k:
                warnings.warn(
                    f"class {c} has {members.size} < {k} members; folds will be uneven")
            members = rng.permutation(members)
            for f, chunk in enumerate(np.array_split(members, k)):
                assignments[f].append(chunk)
    else:
        order = rng.permutation(d.n)
        for f, chunk in enumerate(np.array_split(order, k)):
            assignments[f].append(chunk)

    splits = []
    all_idx = np.arange(d.n)
    for f in range(k):
        test = np.sort(np.concatenate(assignments[f]).astype(np.int64))
        mask = np.ones(d.n, dtype=bool)
        mask[test] = False
        splits.append(Split(train_indices=all_idx[mask], test_indices=test))
    return splits
