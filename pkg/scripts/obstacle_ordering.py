"""Compare BodyGen against ParamH on over-obstacle reaches shown among
sampled distractors, at early and late stopping fractions.

    python3 scripts/obstacle_ordering.py --n-trials 20 --seed 7
"""

import argparse
import time
from collections import defaultdict

import numpy as np

from reachintent.harness import ExperimentConfig, obstacle_scene, run_experiment
from reachintent.synthetic import distractor_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-trials", type=int, default=20)
    ap.add_argument("--fractions", default="0.35,0.45,0.55,0.65,0.75")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    t0 = time.perf_counter()
    store = distractor_trials(obstacle_scene(), args.n_trials, seed=args.seed)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    cfg = ExperimentConfig(tuple(store), fractions, (("bodygen", None), ("paramh", None)), seed=0)
    table = run_experiment(cfg, store)
    by = defaultdict(dict)
    for o in table.outcomes:
        by[(o.ref, o.stopping_fraction)][o.model] = o
    print(" frac  rank(B)<=rank(P)  logp B   logp P   acc B  acc P")
    for f in fractions:
        ks = [k for k in by if k[1] == f]
        b = [by[k]["bodygen"] for k in ks]
        p = [by[k]["paramh"] for k in ks]
        print(f" {f:.2f}  {np.mean([x.rank <= y.rank for x, y in zip(b, p)]):>15.0%}  "
              f"{np.mean([x.log_posterior_true for x in b]):7.3f}  {np.mean([y.log_posterior_true for y in p]):7.3f}  "
              f"{np.mean([x.predicted == x.target for x in b]):5.2f}  {np.mean([y.predicted == y.target for y in p]):5.2f}")
    print(f"{len(store)} trials, {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
