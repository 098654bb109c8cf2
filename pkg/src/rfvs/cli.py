"""Command line interface.

Subcommands: gen, fit, importance, select, sweep, cv, eval. Every command
writes its results (tidy CSV and/or JSON) plus a manifest.json into
--out-dir. Result files are byte-identical for identical (command, seed)
regardless of --threads; the manifest additionally records wall-clock time
and is the one file excluded from that guarantee.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import csv as csvmod
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .bench import ConfigError, CvSpec, SweepSpec, is_generator_source, \
    parse_mtry_expr, resolve_source, run_cv_selection, run_sweep, \
    run_train_test_eval, run_vi_study
from .data import CLASSIFICATION, DataError, derive_seed
from .forest import ForestConfig, fit_forest, importance_report, oob_error_mean, \
    permutation_importance
from .select import SelectionConfig, select_variables


def _write_csv(path, rows, fieldnames=None):
    if fieldnames is None:
        fieldnames = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csvmod.writer(fh)
        w.writerow(fieldnames)
        for r in rows:
            w.writerow([_cell(r[k]) for k in fieldnames])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _manifest(out_dir, args, started):
    _write_json(out_dir / "manifest.json", {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": args.seed,
        "threads": args.threads,
        "rfvs_version": __version__,
        "numpy_version": np.__version__,
        "numba_active": _kernels.USING_NUMBA,
        "wall_clock_s": time.monotonic() - started,
    })


def _emit_dataset_meta(out_dir, d, source):
    # CSV-backed runs carry the ingestion metadata next to the results
    if not is_generator_source(source):
        _write_json(out_dir / "dataset_meta.json", d.metadata)


def _forest_config(args, seed):
    return ForestConfig(ntree=args.ntree, mtry=args.mtry,
                        nodesize=args.nodesize, seed=seed)


def _resolve_mtry(args, d):
    if args.mtry is not None:
        args.mtry = parse_mtry_expr(args.mtry, d.p)


def _selection_config(args, seed):
    return SelectionConfig(
        vi_forest=ForestConfig(ntree=args.vi_ntree, mtry=args.vi_mtry),
        nested_forest=ForestConfig(ntree=args.nested_ntree),
        vi_runs=args.vi_runs, nested_repeats=args.nested_repeats,
        se_multiplier=args.se_multiplier, curve_min_leaf=args.curve_min_leaf,
        seed=seed)


def _add_selection_flags(sp):
    sp.add_argument("--vi-ntree", type=int, default=2000)
    sp.add_argument("--vi-mtry", default=None,
                    help="mtry expression for the importance forests (default: task default)")
    sp.add_argument("--vi-runs", type=int, default=50)
    sp.add_argument("--nested-ntree", type=int, default=500)
    sp.add_argument("--nested-repeats", type=int, default=25)
    sp.add_argument("--se-multiplier", type=float, default=1.0)
    sp.add_argument("--curve-min-leaf", type=int, default=5)


def cmd_gen(args, out_dir):
    d = resolve_source(args.source, args.seed)
    path = out_dir / "dataset.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csvmod.writer(fh)
        w.writerow(d.feature_names + ["response"])
        for i in range(d.n):
            row = [repr(float(v)) for v in d.features[i]]
            row.append(int(d.response[i]) if d.task == CLASSIFICATION
                       else repr(float(d.response[i])))
            w.writerow(row)
    _write_json(out_dir / "dataset.json", {
        "source": args.source, "seed": args.seed, "n": d.n, "p": d.p,
        "task": d.task, "n_classes": d.n_classes, "metadata": d.metadata,
    })


def cmd_fit(args, out_dir):
    d = resolve_source(args.source, args.seed)
    _emit_dataset_meta(out_dir, d, args.source)
    _resolve_mtry(args, d)
    cfg = _forest_config(args, derive_seed(args.seed, 1))
    mean, sd = oob_error_mean(d, cfg, repeats=args.repeats, threads=args.threads)
    out = {"oob_error_mean": mean, "oob_error_sd": sd,
           "ntree": cfg.ntree, "mtry": cfg.resolve(d)[0], "repeats": args.repeats}
    f = fit_forest(d, replace(cfg, seed=derive_seed(args.seed, 2)), threads=args.threads)
    out["n_never_oob"] = f.n_never_oob
    if f.per_class_errors is not None:
        out["per_class_errors"] = f.per_class_errors
    if args.vi:
        vi = permutation_importance(f, d, threads=args.threads)
        out["vi"] = {d.feature_names[j]: float(vi[j]) for j in range(d.p)}
    _write_json(out_dir / "fit.json", out)


def cmd_importance(args, out_dir):
    d = resolve_source(args.source, args.seed)
    _emit_dataset_meta(out_dir, d, args.source)
    _resolve_mtry(args, d)
    cfg = _forest_config(args, derive_seed(args.seed, 1))
    rep = importance_report(d, cfg, runs=args.runs, threads=args.threads)
    rows = [{"rank": i, "variable": d.feature_names[v], "var_index": int(v),
             "vi_mean": float(rep.mean_vi[v]), "vi_sd": float(rep.sd_vi[v])}
            for i, v in enumerate(rep.ranking)]
    _write_csv(out_dir / "importance.csv", rows)
    _write_json(out_dir / "importance.json",
                {"runs": rep.runs, "ranking": [int(v) for v in rep.ranking]})


def cmd_select(args, out_dir):
    d = resolve_source(args.source, args.seed)
    _emit_dataset_meta(out_dir, d, args.source)
    if args.vi_mtry is not None:
        args.vi_mtry = parse_mtry_expr(args.vi_mtry, d.p)
    cfg = _selection_config(args, derive_seed(args.seed, 1))
    res = select_variables(d, cfg, threads=args.threads)
    _write_json(out_dir / "selection.json", {
        "threshold": res.threshold,
        "kept": [d.feature_names[v] for v in res.kept],
        "interpretation_set": [d.feature_names[v] for v in res.interpretation_set],
        "prediction_set": [d.feature_names[v] for v in res.prediction_set],
        "prediction_threshold": res.prediction_threshold,
        "nested_errors": res.nested_errors,
        "nested_sds": res.nested_sds,
    })
    rep = res.report
    _write_csv(out_dir / "vi_by_rank.csv",
               [{"rank": i, "variable": d.feature_names[v],
                 "vi_mean": float(rep.mean_vi[v])}
                for i, v in enumerate(rep.ranking)])
    _write_csv(out_dir / "vi_sd_by_rank.csv",
               [{"rank": i, "variable": d.feature_names[v],
                 "vi_sd": float(rep.sd_vi[v])}
                for i, v in enumerate(rep.ranking)])
    _write_csv(out_dir / "nested_errors.csv",
               [{"k": k + 1, "variable": d.feature_names[res.kept[k]],
                 "oob_mean": float(res.nested_errors[k]),
                 "oob_sd": float(res.nested_sds[k])}
                for k in range(len(res.kept))])
    _write_csv(out_dir / "stepwise_errors.csv",
               [{"step": i, "variable": d.feature_names[v],
                 "oob_mean": float(e), "accepted": int(a)}
                for i, (v, e, a) in enumerate(res.stepwise)])


def cmd_sweep(args, out_dir):
    spec = SweepSpec(source=args.source,
                     mtry_grid=[s.strip() for s in args.mtry_grid.split(",")],
                     ntree_grid=[int(s) for s in args.ntree_grid.split(",")],
                     repeats=args.repeats, seed=derive_seed(args.seed, 1),
                     nodesize=args.nodesize)
    rows = run_sweep(spec, threads=args.threads)
    _write_csv(out_dir / "sweep.csv", rows)


def cmd_cv(args, out_dir):
    if args.vi_mtry is not None:
        d = resolve_source(args.source, args.seed)
        args.vi_mtry = parse_mtry_expr(args.vi_mtry, d.p)
    spec = CvSpec(source=args.source, folds=args.folds,
                  selection=_selection_config(args, 0),
                  eval_forest=ForestConfig(ntree=args.eval_ntree),
                  seed=derive_seed(args.seed, 1))
    report = run_cv_selection(spec, threads=args.threads)
    _write_json(out_dir / "cv.json", report)
    _write_csv(out_dir / "cv_folds.csv", report["folds"])


def cmd_eval(args, out_dir):
    if args.vi_mtry is not None:
        d = resolve_source(args.source, args.seed)
        args.vi_mtry = parse_mtry_expr(args.vi_mtry, d.p)
    report, _res = run_train_test_eval(
        args.source, _selection_config(args, 0), seed=derive_seed(args.seed, 1),
        eval_forest=ForestConfig(ntree=args.eval_ntree), threads=args.threads)
    _write_json(out_dir / "eval.json", report)


def build_parser():
    ap = argparse.ArgumentParser(prog="rfvs",
                                 description="Random forest variable selection toolkit")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out-dir", default=".")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="generate a dataset CSV + JSON sidecar")
    sp.add_argument("source")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("fit", help="fit forests, report OOB error")
    sp.add_argument("source")
    sp.add_argument("--ntree", type=int, default=500)
    sp.add_argument("--mtry", default=None, help="expression over p (sqrt, p/3, p, 14, ...)")
    sp.add_argument("--nodesize", type=int, default=None)
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--vi", action="store_true", help="include permutation importance")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("importance", help="importance report over repeated forests")
    sp.add_argument("source")
    sp.add_argument("--ntree", type=int, default=500)
    sp.add_argument("--mtry", default=None)
    sp.add_argument("--nodesize", type=int, default=None)
    sp.add_argument("--runs", type=int, default=50)
    sp.set_defaults(func=cmd_importance)

    sp = sub.add_parser("select", help="two-step variable selection")
    sp.add_argument("source")
    _add_selection_flags(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("sweep", help="mtry x ntree OOB error grid")
    sp.add_argument("source")
    sp.add_argument("--mtry-grid", default="1,sqrt/2,sqrt,2sqrt,4sqrt,p/4,p/3,p/2,3p/4,p")
    sp.add_argument("--ntree-grid", default="100,500,1000")
    sp.add_argument("--repeats", type=int, default=10)
    sp.add_argument("--nodesize", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("cv", help="cross-validated selection evaluation")
    sp.add_argument("source")
    sp.add_argument("--folds", type=int, default=5)
    sp.add_argument("--eval-ntree", type=int, default=500)
    _add_selection_flags(sp)
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("eval", help="train/test evaluation of selected sets")
    sp.add_argument("source")
    sp.add_argument("--eval-ntree", type=int, default=500)
    _add_selection_flags(sp)
    sp.set_defaults(func=cmd_eval)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    try:
        args.func(args, out_dir)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _manifest(out_dir, args, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
