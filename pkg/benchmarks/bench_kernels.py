"""Time the accelerated kernels against the pure-numpy fallback.

Each implementation runs in its own subprocess because the kernel choice is
made at import time (RFVS_DISABLE_NUMBA=1 selects the fallback). The child
fits forests and computes permutation importance on generated data, prints
timings plus a digest, and the parent checks the digests agree before
reporting the speedups.

Usage: python3 benchmarks/bench_kernels.py [--n 200] [--p 50] [--ntree 100]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def child(args):
    import numpy as np

    from rfvs import _kernels
    from rfvs.forest import ForestConfig, fit_forest, permutation_importance
    from rfvs.synth import FriedmanConfig, ToysConfig, gen_friedman, gen_toys

    results = {"using_numba": _kernels.USING_NUMBA, "cases": {}}
    cases = {
        "toys_classification": gen_toys(ToysConfig(n=args.n, p=args.p, seed=7)),
        "friedman1_regression": gen_friedman(
            FriedmanConfig(variant=1, n=args.n, p=args.p, seed=7)),
    }
    for name, d in cases.items():
        cfg = ForestConfig(ntree=args.ntree, seed=13)
        fit_forest(d, cfg)  # warm-up: trigger any jit compilation
        t0 = time.perf_counter()
        for r in range(args.repeats):
            f = fit_forest(d, ForestConfig(ntree=args.ntree, seed=13 + r))
        fit_s = (time.perf_counter() - t0) / args.repeats

        t0 = time.perf_counter()
        for r in range(args.repeats):
            vi = permutation_importance(f, d, seed=29 + r)
        vi_s = (time.perf_counter() - t0) / args.repeats

        blob = repr((float(f.oob_error), vi.tolist())).encode()
        results["cases"][name] = {
            "fit_s": fit_s, "vi_s": vi_s,
            "digest": hashlib.sha256(blob).hexdigest(),
        }
    json.dump(results, sys.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--p", type=int, default=50)
    ap.add_argument("--ntree", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--as-child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.as_child:
        child(args)
        return

    runs = {}
    for label, disable in (("accelerated", False), ("fallback", True)):
        env = dict(os.environ)
        if disable:
            env["RFVS_DISABLE_NUMBA"] = "1"
        else:
            env.pop("RFVS_DISABLE_NUMBA", None)
        cmd = [sys.executable, os.path.abspath(__file__), "--as-child",
               "--n", str(args.n), "--p", str(args.p),
               "--ntree", str(args.ntree), "--repeats", str(args.repeats)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.exit(f"{label} run failed:\n{proc.stderr}")
        runs[label] = json.loads(proc.stdout)

    if not runs["accelerated"]["using_numba"]:
        print("warning: accelerated run fell back to numpy (numba unavailable)")

    print(f"n={args.n} p={args.p} ntree={args.ntree} "
          f"(mean of {args.repeats} repeats)\n")
    print(f"{'case':<24} {'stage':<5} {'accel (s)':>10} {'numpy (s)':>10} {'speedup':>8}")
    for name in runs["accelerated"]["cases"]:
        fast = runs["accelerated"]["cases"][name]
        slow = runs["fallback"]["cases"][name]
        if fast["digest"] != slow["digest"]:
            sys.exit(f"digest mismatch on {name}: kernels disagree")
        for stage, key in (("fit", "fit_s"), ("vi", "vi_s")):
            ratio = slow[key] / fast[key] if fast[key] else float("inf")
            print(f"{name:<24} {stage:<5} {fast[key]:>10.4f} {slow[key]:>10.4f} "
                  f"{ratio:>7.1f}x")
    print("\ndigests match: outputs are identical across implementations")


if __name__ == "__main__":
    main()
