"""Simulated benchmark data: Friedman regression models, the two-class
"toys" mixture, and correlated-replicate augmentation."""

from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, REGRESSION, DataError, Dataset


@dataclass
class FriedmanConfig:
    variant: int
    n: int
    p: int
    noise_sd: float = None  # None -> variant default (see gen_friedman*)
    seed: int = 0


@dataclass
class ToysConfig:
    n: int
    p: int
    seed: int = 0


@dataclass
class ReplicateSpec:
    source_variable: int  # 0-based column index
    count: int
    correlation: float


def _names(p):
    return [f"V{j + 1}" for j in range(p)]


def gen_friedman1(cfg):
    """Friedman #1: y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + eps,
    all inputs uniform on [0, 1]; columns 6..p are nuisance."""
    if cfg.variant != 1:
        raise ValueError("gen_friedman1 requires variant=1")
    if cfg.p < 5:
        raise ValueError("friedman1 needs p >= 5")
    noise_sd = 1.0 if cfg.noise_sd is None else float(cfg.noise_sd)
    rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), 1)))
    X = rng.random((cfg.n, cfg.p))
    y = friedman1_signal(X)
    if noise_sd > 0:
        y = y + noise_sd * rng.standard_normal(cfg.n)
    meta = {"generator": "friedman1", "true_variables": [0, 1, 2, 3, 4],
            "noise_sd": noise_sd, "seed": int(cfg.seed)}
    return Dataset(X, y, _names(cfg.p), REGRESSION, 0, meta)


def friedman1_signal(X):
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
            + 20.0 * (X[:, 2] - 0.5) ** 2 + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def friedman2_signal(X):
    return np.sqrt(X[:, 0] ** 2 + (X[:, 1] * X[:, 2] - 1.0 / (X[:, 1] * X[:, 3])) ** 2)


def friedman3_signal(X):
    return np.arctan((X[:, 1] * X[:, 2] - 1.0 / (X[:, 1] * X[:, 3])) / X[:, 0])


def gen_friedman23(cfg):
    """Friedman #2 / #3 with the usual input ranges:
    x1 in [0, 100], x2 in [40*pi, 560*pi], x3 in [0, 1], x4 in [1, 11].

    Nuisance columns (uniform on [0, 1]) are appended to reach p. When
    noise_sd is None it is set to sd(signal)/3, estimated on the generated
    sample, giving a 3:1 signal-to-noise ratio.
    """
    if cfg.variant not in (2, 3):
        raise ValueError("gen_friedman23 requires variant in {2, 3}")
    if cfg.p < 4:
        raise ValueError("friedman2/3 need p >= 4")
    rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), cfg.variant)))
    X = rng.random((cfg.n, cfg.p))
    X[:, 0] *= 100.0
    X[:, 1] = 40.0 * np.pi + X[:, 1] * (560.0 - 40.0) * np.pi
    X[:, 3] = 1.0 + X[:, 3] * 10.0
    signal = friedman2_signal(X) if cfg.variant == 2 else friedman3_signal(X)
    noise_sd = (float(np.std(signal, ddof=1)) / 3.0
                if cfg.noise_sd is None else float(cfg.noise_sd))
    y = signal
    if noise_sd > 0:
        y = y + noise_sd * rng.standard_normal(cfg.n)
    meta = {"generator": f"friedman{cfg.variant}", "true_variables": [0, 1, 2, 3],
            "noise_sd": noise_sd, "seed": int(cfg.seed)}
    return Dataset(X, y, _names(cfg.p), REGRESSION, 0, meta)


def gen_friedman(cfg):
    return gen_friedman1(cfg) if cfg.variant == 1 else gen_friedman23(cfg)


def _standardize(X):
    # sample mean 0, sample variance 1 (ddof=1, as R's scale())
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise DataError("constant column cannot be standardized")
    return (X - mu) / sd


def gen_toys(cfg, standardize=True):
    """Equiprobable two-class mixture with 6 informative variables.

    With label sign s (+1/-1), 70% of the rows draw X_i ~ N(s*i, 1) for
    i=1..3 and X_i ~ N(0, 1) for i=4..6; the other 30% swap the roles with
    means s*(i-3) on variables 4..6. Variables 7..p are N(0, 1) noise.
    Columns are standardized afterwards. Labels are stored as {0, 1}.
    """
    if cfg.p < 6:
        raise ValueError("toys needs p >= 6")
    rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), 0x70F5)))
    y = rng.integers(0, 2, cfg.n)
    s = 2.0 * y - 1.0
    regime_a = rng.random(cfg.n) < 0.7
    X = np.empty((cfg.n, cfg.p))
    X[:, :6] = rng.standard_normal((cfg.n, 6))
    for i in range(3):
        X[regime_a, i] += s[regime_a] * (i + 1)
        X[~regime_a, i + 3] += s[~regime_a] * (i + 1)
    if cfg.p > 6:
        X[:, 6:] = rng.standard_normal((cfg.n, cfg.p - 6))
    if standardize:
        X = _standardize(X)
    meta = {"generator": "toys", "true_variables": [0, 1, 2, 3, 4, 5],
            "seed": int(cfg.seed)}
    return Dataset(X, y, _names(cfg.p), CLASSIFICATION, 2, meta)


def add_replicates(d, specs, seed):
    """Insert noisy copies of chosen columns right after the first 6.

    A replicate of column x is rho*std(x) + sqrt(1-rho^2)*z with fresh
    standard normal z, standardized afterwards. Inserted columns are named
    "<position>^<source>" in 1-based notation so provenance survives into
    reports. Original columns are untouched.
    """
    seen = set()
    for spec in specs:
        if not (0.0 < spec.correlation < 1.0):
            raise ValueError("replicate correlation must lie strictly in (0, 1)")
        if not (0 <= spec.source_variable < d.p):
            raise ValueError("replicate source out of range")
        if spec.source_variable in seen:
            raise ValueError("duplicate replicate source")
        seen.add(spec.source_variable)

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5EB1)))
    cols = []
    sources = []
    for spec in specs:
        x = d.features[:, spec.source_variable]
        xs = (x - x.mean()) / x.std(ddof=1)
        for _ in range(spec.count):
            z = rng.standard_normal(d.n)
            r = spec.correlation * xs + np.sqrt(1.0 - spec.correlation ** 2) * z
            cols.append((r - r.mean()) / r.std(ddof=1))
            sources.append(spec.source_variable)
    if not cols:
        return d

    insert_at = min(6, d.p)
    R = np.column_stack(cols)
    X = np.concatenate([d.features[:, :insert_at], R, d.features[:, insert_at:]], axis=1)
    rep_names = [f"{insert_at + i + 1}^{src + 1}" for i, src in enumerate(sources)]
    names = (list(d.feature_names[:insert_at]) + rep_names
             + list(d.feature_names[insert_at:]))
    meta = dict(d.metadata)
    meta["replicates"] = {insert_at + i: src for i, src in enumerate(sources)}
    return Dataset(X, d.response, names, d.task, d.n_classes, meta)
