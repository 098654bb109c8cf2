import numpy as np
import pytest

from rfvs.cart import fit_1d_curve_tree
from rfvs.forest import ForestConfig, ImportanceReport
from rfvs.select import (SelectionConfig, SelectionError, eliminate_and_rank,
                         interpretation_step, nested_error_curve,
                         prediction_step, select_variables)
from rfvs.synth import ToysConfig, gen_toys


def _report(mean_vi, sd_vi, runs=5):
    return ImportanceReport(mean_vi=np.asarray(mean_vi, dtype=np.float64),
                            sd_vi=np.asarray(sd_vi, dtype=np.float64),
                            runs=runs)


def _fast_cfg(seed=0, vi_runs=2, nested_repeats=2):
    return SelectionConfig(
        vi_forest=ForestConfig(ntree=30),
        nested_forest=ForestConfig(ntree=30),
        vi_runs=vi_runs, nested_repeats=nested_repeats, seed=seed)


class TestEliminateAndRank:
    def test_constant_sd_curve(self):
        # all sds equal s -> fitted curve is the constant s -> threshold s
        mean = [0.5, 0.4, 0.3, 0.2, 0.15, 0.12, 0.11, 0.105]
        sd = [0.02] * 8
        threshold, kept = eliminate_and_rank(_report(mean, sd))
        assert threshold == pytest.approx(0.02)
        assert kept == [0, 1, 2, 3, 4, 5, 6, 7]  # all means exceed 0.02

    def test_staircase_sd_curve(self):
        # 6 high-sd ranks then a near-zero plateau: threshold is the plateau
        mean = np.concatenate([np.linspace(0.6, 0.1, 6), np.full(44, 0.001)])
        sd = np.concatenate([np.full(6, 0.05), np.full(44, 0.0004)])
        fitted = fit_1d_curve_tree(sd, min_leaf=5)
        threshold, kept = eliminate_and_rank(_report(mean, sd))
        assert threshold == pytest.approx(fitted.min())
        assert threshold == pytest.approx(0.0004, abs=1e-6)
        assert kept[:6] == [0, 1, 2, 3, 4, 5]
        assert all(mean[v] > threshold for v in kept)

    def test_kept_sorted_by_decreasing_mean(self):
        mean = [0.1, 0.5, 0.3, 0.0, 0.2]
        sd = [0.01] * 5
        _, kept = eliminate_and_rank(_report(mean, sd))
        assert kept == [1, 2, 4, 0]  # 3 dropped: mean not > 0

    def test_negative_and_zero_vi_never_kept(self):
        mean = [0.4, 0.0, -0.2, 0.3]
        sd = [0.0001] * 4
        _, kept = eliminate_and_rank(_report(mean, sd))
        assert 1 not in kept and 2 not in kept

    def test_all_eliminated_raises(self):
        mean = [-0.1, -0.2, 0.0]
        sd = [0.01] * 3
        with pytest.raises(SelectionError):
            eliminate_and_rank(_report(mean, sd))

    def test_short_lists_shrink_min_leaf(self):
        # fewer ranks than 2*min_leaf must still fit a curve
        mean = [0.5, 0.3, 0.2]
        sd = [0.03, 0.02, 0.01]
        threshold, kept = eliminate_and_rank(_report(mean, sd), min_leaf=5)
        assert kept


class TestInterpretationStep:
    def test_strictly_decreasing_curve_keeps_everything(self):
        kept = [4, 2, 7, 1]
        errs = np.array([0.4, 0.3, 0.2, 0.1])
        sds = np.zeros(4)
        interp, _ = interpretation_step(None, kept, _fast_cfg(),
                                        curve=(errs, sds))
        assert interp == kept  # sd 0 -> only the minimum qualifies; k0 = m

    def test_one_se_rule_prefers_smaller_model(self):
        kept = [3, 5, 1, 9]
        errs = np.array([0.30, 0.12, 0.10, 0.11])
        sds = np.array([0.01, 0.03, 0.02, 0.01])
        # min at k=3 (err 0.10, sd 0.02) -> limit 0.12 -> first k under it is 2
        interp, _ = interpretation_step(None, kept, _fast_cfg(),
                                        curve=(errs, sds))
        assert interp == [3, 5]

    def test_se_multiplier_zero_takes_argmin_prefix(self):
        kept = [3, 5, 1, 9]
        errs = np.array([0.30, 0.12, 0.10, 0.11])
        sds = np.array([0.01, 0.03, 0.02, 0.01])
        cfg = _fast_cfg()
        cfg.se_multiplier = 0.0
        interp, _ = interpretation_step(None, kept, cfg, curve=(errs, sds))
        assert interp == [3, 5, 1]

    def test_empty_kept_raises(self):
        with pytest.raises(SelectionError):
            interpretation_step(None, [], _fast_cfg(), curve=(np.array([]),
                                                              np.array([])))


class TestPredictionStep:
    def test_prediction_subset_of_interpretation(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=3))
        res = select_variables(d, _fast_cfg(seed=5, vi_runs=3, nested_repeats=3))
        assert set(res.prediction_set) <= set(res.interpretation_set)
        assert res.prediction_set[0] == res.interpretation_set[0]
        assert set(res.interpretation_set) <= set(res.kept)

    def test_tau_is_mean_absolute_tail_difference(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=3))
        cfg = _fast_cfg(seed=5, vi_runs=3, nested_repeats=3)
        res = select_variables(d, cfg)
        k0 = len(res.interpretation_set)
        m = len(res.kept)
        tail = np.abs(np.diff(res.nested_errors[k0 - 1:m]))
        want = float(tail.mean()) if tail.size else 0.0
        assert res.prediction_threshold == pytest.approx(want, rel=1e-12)

    def test_degenerate_tail_tau_zero(self):
        # interpretation set spans all kept variables -> empty tail -> tau 0
        errs = np.array([0.5, 0.2])
        d = gen_toys(ToysConfig(n=60, p=10, seed=7))
        pred, tau, steps = prediction_step(
            d, [0, 1], [0, 1], errs, _fast_cfg(seed=1, nested_repeats=2))
        assert tau == 0.0
        assert steps[0] == (0, 0.5, True)

    def test_rejections_are_final(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=3))
        res = select_variables(d, _fast_cfg(seed=9, vi_runs=3, nested_repeats=3))
        rejected = [v for v, _e, a in res.stepwise if not a]
        assert not (set(rejected) & set(res.prediction_set))

    def test_empty_interpretation_raises(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=3))
        with pytest.raises(SelectionError):
            prediction_step(d, [], [0], np.array([0.1]), _fast_cfg())


class TestSelectVariables:
    def test_deterministic(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=11))
        cfg = _fast_cfg(seed=13, vi_runs=3, nested_repeats=3)
        a = select_variables(d, cfg)
        b = select_variables(d, cfg)
        assert a.kept == b.kept
        assert a.interpretation_set == b.interpretation_set
        assert a.prediction_set == b.prediction_set
        assert np.array_equal(a.nested_errors, b.nested_errors)

    def test_nested_curve_lengths(self):
        d = gen_toys(ToysConfig(n=60, p=10, seed=11))
        cfg = _fast_cfg(seed=13, vi_runs=3, nested_repeats=3)
        res = select_variables(d, cfg)
        assert len(res.nested_errors) == len(res.kept)
        assert len(res.nested_sds) == len(res.kept)
        assert len(res.stepwise) == len(res.interpretation_set)

    def test_nested_curve_matches_direct_computation(self):
        d = gen_toys(ToysConfig(n=60, p=8, seed=15))
        cfg = _fast_cfg(seed=17, vi_runs=3, nested_repeats=3)
        res = select_variables(d, cfg)
        errs, sds = nested_error_curve(d, res.kept, cfg)
        assert np.array_equal(res.nested_errors, errs)
        assert np.array_equal(res.nested_sds, sds)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(vi_runs=1)
        with pytest.raises(ValueError):
            SelectionConfig(nested_repeats=1)

    def test_informative_variables_selected_on_toys(self):
        d = gen_toys(ToysConfig(n=120, p=12, seed=19))
        cfg = SelectionConfig(vi_forest=ForestConfig(ntree=100),
                              nested_forest=ForestConfig(ntree=100),
                              vi_runs=5, nested_repeats=5, seed=21)
        res = select_variables(d, cfg)
        assert set(res.prediction_set) <= set(range(6))
        assert res.kept[0] in (0, 1, 2, 3, 4, 5)
