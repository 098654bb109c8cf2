"""Two-step variable selection on top of permutation importance.

Step 1 ranks variables by mean importance over repeated forests and drops
everything below a data-driven threshold (the minimum of a 1-D CART fit to
the sd-vs-rank curve). Step 2a picks an interpretation set from nested-model
OOB errors with a 1-SE-style rule; step 2b builds a parsimonious prediction
set by stepwise introduction, accepting a variable only when the error drop
beats the mean noise-level fluctuation of the nested-error tail.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .cart import fit_1d_curve_tree
from .data import derive_seed
from .forest import ForestConfig, importance_report, oob_error_mean

_NESTED_TAG = 0x6E65
_PRED_TAG = 0x7072


class SelectionError(RuntimeError):
    pass


@dataclass
class SelectionConfig:
    vi_forest: ForestConfig = field(default_factory=lambda: ForestConfig(ntree=2000))
    nested_forest: ForestConfig = field(default_factory=ForestConfig)
    vi_runs: int = 50
    nested_repeats: int = 25
    se_multiplier: float = 1.0
    curve_min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.vi_runs < 2:
            raise ValueError("vi_runs must be >= 2")
        if self.nested_repeats < 2:
            raise ValueError("nested_repeats must be >= 2")


@dataclass
class SelectionResult:
    threshold: float
    kept: list  # variable indices, decreasing mean VI
    nested_errors: np.ndarray
    nested_sds: np.ndarray
    interpretation_set: list
    prediction_set: list
    prediction_threshold: float
    report: object = None
    stepwise: list = None  # (variable, candidate error, accepted) per tested step


def eliminate_and_rank(report, min_leaf=5):
    """Threshold from the sd-vs-rank curve; keep variables whose mean VI is
    strictly above it and strictly positive, in decreasing-VI order."""
    order = report.ranking
    sd_curve = report.sd_vi[order]
    fitted = fit_1d_curve_tree(sd_curve, min_leaf=min(min_leaf, max(1, len(order) // 2)))
    threshold = float(fitted.min())
    kept = [int(v) for v in order
            if report.mean_vi[v] > threshold and report.mean_vi[v] > 0.0]
    if not kept:
        raise SelectionError(
            "all variables eliminated; retry with larger ntree and/or mtry")
    return threshold, kept


def _nested_cfg(cfg, seed):
    return replace(cfg.nested_forest, seed=seed)


def nested_error_curve(d, kept, cfg, threads=1):
    """Mean OOB error (and sd over repeats) of forests on the top-k kept
    variables, for k = 1..len(kept)."""
    m = len(kept)
    errs = np.empty(m)
    sds = np.empty(m)
    for k in range(1, m + 1):
        sub = d.subset_columns(kept[:k])
        errs[k - 1], sds[k - 1] = oob_error_mean(
            sub, _nested_cfg(cfg, derive_seed(cfg.seed, _NESTED_TAG, k)),
            repeats=cfg.nested_repeats, threads=threads)
    return errs, sds


def interpretation_step(d, kept, cfg, threads=1, curve=None):
    """Smallest nested model whose error is within se_multiplier * sd of the
    minimum nested-model error."""
    if not kept:
        raise SelectionError("empty kept list")
    errs, sds = curve if curve is not None else nested_error_curve(d, kept, cfg, threads)
    k_star = int(np.argmin(errs))
    limit = errs[k_star] + cfg.se_multiplier * sds[k_star]
    k0 = int(np.flatnonzero(errs <= limit)[0]) + 1
    return kept[:k0], (errs, sds)


def prediction_step(d, interpretation_set, kept, nested_errors, cfg, threads=1):
    """Stepwise introduction over the interpretation set.

    The acceptance threshold is the mean absolute first-order difference of
    the nested error curve from the interpretation size to the end (0 when
    there is no tail). A candidate enters only when it lowers the running
    model's error by more than the threshold; rejections are final.
    """
    if not interpretation_set:
        raise SelectionError("empty interpretation set")
    k0 = len(interpretation_set)
    m = len(kept)
    tail = np.abs(np.diff(nested_errors[k0 - 1:m]))
    tau = float(tail.mean()) if tail.size else 0.0

    current = [interpretation_set[0]]
    current_err = float(nested_errors[0])
    steps = [(interpretation_set[0], current_err, True)]
    for step, var in enumerate(interpretation_set[1:], start=1):
        cand = current + [var]
        sub = d.subset_columns(cand)
        cand_err, _sd = oob_error_mean(
            sub, _nested_cfg(cfg, derive_seed(cfg.seed, _PRED_TAG, step)),
            repeats=cfg.nested_repeats, threads=threads)
        accept = (current_err - cand_err) > tau
        steps.append((var, cand_err, accept))
        if accept:
            current = cand
            current_err = cand_err
    return current, tau, steps


def select_variables(d, cfg, threads=1, report=None):
    """Full two-step procedure; pure function of (d, cfg)."""
    if report is None:
        vi_cfg = replace(cfg.vi_forest, seed=derive_seed(cfg.seed, 0))
        report = importance_report(d, vi_cfg, runs=cfg.vi_runs, threads=threads)
    threshold, kept = eliminate_and_rank(report, min_leaf=cfg.curve_min_leaf)
    interpretation, (errs, sds) = interpretation_step(d, kept, cfg, threads=threads)
    prediction, tau, steps = prediction_step(
        d, interpretation, kept, errs, cfg, threads=threads)
    return SelectionResult(threshold=threshold, kept=kept, nested_errors=errs,
                           nested_sds=sds, interpretation_set=interpretation,
                           prediction_set=prediction, prediction_threshold=tau,
                           report=report, stepwise=steps)
