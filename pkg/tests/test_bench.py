import numpy as np
import pytest

from rfvs.bench import (ConfigError, CvSpec, SweepSpec, hash_cell,
                        is_generator_source, parse_mtry_expr,
                        parse_replicate_specs, resolve_fresh_source,
                        resolve_source, run_cv_selection, run_sweep,
                        run_train_test_eval)
from rfvs.data import CLASSIFICATION, DataError, REGRESSION
from rfvs.forest import ForestConfig
from rfvs.select import SelectionConfig
from rfvs.synth import ToysConfig, gen_toys


class TestParseMtryExpr:
    @pytest.mark.parametrize("expr,p,want", [
        ("5", 100, 5),
        ("sqrt", 100, 10),
        ("sqrt/2", 100, 5),
        ("2sqrt", 100, 20),
        ("2*sqrt", 100, 20),
        ("p", 100, 100),
        ("p/3", 100, 33),
        ("3p/4", 100, 75),
        ("3*p/4", 100, 75),
        ("0.5p", 100, 50),
        ("sqrt", 10, 3),     # floor
        ("p/3", 10, 3),
    ])
    def test_grammar(self, expr, p, want):
        assert parse_mtry_expr(expr, p) == want

    @pytest.mark.parametrize("expr", ["", "log", "p/q", "sqrt(p)", "-3", "p^2"])
    def test_unparseable(self, expr):
        with pytest.raises(ConfigError):
            parse_mtry_expr(expr, 100)

    @pytest.mark.parametrize("expr,p", [("0", 100), ("101", 100), ("2p", 100),
                                        ("sqrt/20", 100)])
    def test_out_of_range(self, expr, p):
        with pytest.raises(ConfigError):
            parse_mtry_expr(expr, p)


class TestParseReplicateSpecs:
    def test_single(self):
        specs = parse_replicate_specs("3:20:0.9")
        assert len(specs) == 1
        assert specs[0].source_variable == 2  # 1-based on the wire
        assert specs[0].count == 20
        assert specs[0].correlation == 0.9

    def test_multiple(self):
        specs = parse_replicate_specs("3:10:0.9+6:10:0.9")
        assert [s.source_variable for s in specs] == [2, 5]

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_replicate_specs("3:20")
        with pytest.raises(ConfigError):
            parse_replicate_specs("3:20:0.9:extra")


class TestResolveSource:
    def test_toys(self):
        d = resolve_source("toys:n=50,p=8", seed=3)
        assert d.task == CLASSIFICATION
        assert (d.n, d.p) == (50, 8)

    def test_friedman1(self):
        d = resolve_source("friedman1:n=40,p=12", seed=3)
        assert d.task == REGRESSION
        assert (d.n, d.p) == (40, 12)

    def test_explicit_seed_beats_cli_seed(self):
        a = resolve_source("toys:n=50,p=8,seed=9", seed=1)
        b = resolve_source("toys:n=50,p=8,seed=9", seed=2)
        assert np.array_equal(a.features, b.features)

    def test_matches_direct_generator(self):
        d = resolve_source("toys:n=50,p=8", seed=7)
        ref = gen_toys(ToysConfig(n=50, p=8, seed=7))
        assert np.array_equal(d.features, ref.features)
        assert np.array_equal(d.response, ref.response)

    def test_replicates_inline(self):
        d = resolve_source("toys:n=60,p=8,replicates=3:4:0.9", seed=5)
        assert d.p == 12
        assert sum("^3" in name for name in d.feature_names) == 4

    def test_noise_sd_passthrough(self):
        a = resolve_source("friedman1:n=40,p=10,noise_sd=0,seed=2", seed=0)
        b = resolve_source("friedman1:n=40,p=10,noise_sd=5,seed=2", seed=0)
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.response, b.response)

    @pytest.mark.parametrize("source", [
        "toys", "mystery:n=10,p=4", "toys:n=10", "toys:p=4",
        "toys:n=10,p=4,oops", "csv:/tmp/x.csv,task=magic,response=y",
        "csv:/tmp/x.csv",
    ])
    def test_malformed_sources(self, source):
        with pytest.raises(ConfigError):
            resolve_source(source, seed=0)

    def test_csv_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            resolve_source(f"csv:{tmp_path}/nope.csv,response=y", seed=0)

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1,2,0.5\n3,4,1.5\n5,6,2.5\n")
        d = resolve_source(f"csv:{path},task=regression,response=y", seed=0)
        assert (d.n, d.p) == (3, 2)
        assert d.feature_names == ["a", "b"]


class TestResolveFreshSource:
    def test_fresh_draw_differs_but_is_deterministic(self):
        base = resolve_source("toys:n=50,p=8", seed=3)
        f1 = resolve_fresh_source("toys:n=50,p=8", seed=3, draw=1)
        f1b = resolve_fresh_source("toys:n=50,p=8", seed=3, draw=1)
        f2 = resolve_fresh_source("toys:n=50,p=8", seed=3, draw=2)
        assert not np.array_equal(base.features, f1.features)
        assert np.array_equal(f1.features, f1b.features)
        assert not np.array_equal(f1.features, f2.features)
        assert (f1.n, f1.p) == (50, 8)

    def test_csv_source_rejected(self):
        assert is_generator_source("toys:n=5,p=4")
        assert not is_generator_source("csv:/tmp/x.csv,response=y")
        with pytest.raises(ConfigError):
            resolve_fresh_source("csv:/tmp/x.csv,response=y", seed=0, draw=1)


class TestRunSweep:
    def _spec(self, **kw):
        base = dict(source="toys:n=40,p=6", mtry_grid=["1", "2", "sqrt"],
                    ntree_grid=[20, 40], repeats=2, seed=11)
        base.update(kw)
        return SweepSpec(**base)

    def test_grid_shape_and_dedupe(self):
        rows = run_sweep(self._spec())
        # sqrt(6) floors to 2, deduped against "2": 2 distinct mtry x 2 ntree
        assert len(rows) == 4
        assert sorted({r["mtry_value"] for r in rows}) == [1, 2]
        labels = {r["mtry_value"]: r["mtry_expr"] for r in rows}
        assert labels[2] == "2"  # first label wins

    def test_reproducible(self):
        a = run_sweep(self._spec())
        b = run_sweep(self._spec())
        assert a == b

    def test_subgrid_cells_match_full_grid(self):
        full = {(r["mtry_value"], r["ntree"]): r for r in run_sweep(self._spec())}
        sub = run_sweep(self._spec(mtry_grid=["2"], ntree_grid=[40]))
        assert len(sub) == 1
        key = (sub[0]["mtry_value"], sub[0]["ntree"])
        assert full[key]["mean"] == sub[0]["mean"]
        assert full[key]["sd"] == sub[0]["sd"]

    def test_threaded_identical(self):
        assert run_sweep(self._spec()) == run_sweep(self._spec(), threads=3)


class TestHashCell:
    def test_stable_and_order_insensitive(self):
        assert hash_cell({"mtry": 4, "ntree": 100}) == \
            hash_cell({"ntree": 100, "mtry": 4})
        assert hash_cell({"mtry": 4}) != hash_cell({"mtry": 5})


class TestRunCvSelection:
    @pytest.fixture(scope="class")
    def result(self):
        spec = CvSpec(
            source="toys:n=60,p=8", folds=3,
            selection=SelectionConfig(vi_forest=ForestConfig(ntree=30),
                                      nested_forest=ForestConfig(ntree=30),
                                      vi_runs=2, nested_repeats=2),
            eval_forest=ForestConfig(ntree=30), seed=23)
        return run_cv_selection(spec)

    def test_fold_rows(self, result):
        assert len(result["folds"]) == 3
        sizes = [r["test_size"] for r in result["folds"]]
        assert sum(sizes) == 60
        for r in result["folds"]:
            assert set(r["prediction_set"]) <= set(r["interpretation_set"])
            assert 0.0 <= r["all_error"] <= 1.0

    def test_aggregate_is_weighted_mean(self, result):
        rows = result["folds"]
        w = np.array([r["test_size"] for r in rows], dtype=float)
        w /= w.sum()
        for k in ("interpretation", "prediction", "all"):
            want = float(sum(wi * r[f"{k}_error"] for wi, r in zip(w, rows)))
            assert result["aggregate"][f"{k}_error"] == pytest.approx(want, rel=1e-12)

    def test_aggregate_sizes(self, result):
        rows = result["folds"]
        assert result["aggregate"]["mean_interpretation_size"] == \
            pytest.approx(np.mean([r["interpretation_size"] for r in rows]))


class TestRunTrainTestEval:
    def test_report_shape_and_determinism(self):
        sel = SelectionConfig(vi_forest=ForestConfig(ntree=30),
                              nested_forest=ForestConfig(ntree=30),
                              vi_runs=2, nested_repeats=2)
        rep1, res1 = run_train_test_eval("toys:n=60,p=8", sel, seed=31,
                                         eval_forest=ForestConfig(ntree=30))
        rep2, _ = run_train_test_eval("toys:n=60,p=8", sel, seed=31,
                                      eval_forest=ForestConfig(ntree=30))
        assert rep1 == rep2
        assert set(rep1["prediction_set"]) <= set(rep1["interpretation_set"])
        assert len(res1.interpretation_set) == len(rep1["interpretation_set"])
        for k in ("all_error", "interpretation_error", "prediction_error"):
            assert 0.0 <= rep1[k] <= 1.0

    def test_csv_rejected(self):
        with pytest.raises(ConfigError):
            run_train_test_eval("csv:/tmp/x.csv,response=y", SelectionConfig(),
                                seed=0)
