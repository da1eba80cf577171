"""Parameter recovery: sample observer choices from a known model, refit,
and compare per-subject fits across models.

    python3 scripts/fit_recovery.py --n-trials 180 --n-subjects 12
"""

import argparse
import time

from reachintent.fitting import FitConfig, fit_model, per_unit_loglik
from reachintent.harness import STANDING_FRACTIONS, compare_models
from reachintent.models.params import DistanceParams, LinHParams
from reachintent.synthetic import random_straight_store, sample_responses


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-trials", type=int, default=180)
    ap.add_argument("--n-subjects", type=int, default=12)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    store = random_straight_store(args.n_trials, seed=args.seed)
    refs = sorted(store)
    truths = {"distance": (DistanceParams(theta=4.0), STANDING_FRACTIONS),
              "linh": (LinHParams(beta1=20.0, h1=6, alpha1=1), (0.35, 0.5, 0.65, 0.8))}
    for i, (model, (truth, fractions)) in enumerate(truths.items()):
        t0 = time.perf_counter()
        recs = sample_responses(model, truth, store, refs, fractions, args.n_subjects, seed=args.seed + 2 + i)
        fits = {m: fit_model(m, recs, "responses", FitConfig(), store) for m in ("distance", "linh")}
        print(f"generator {truth}  ({len(recs)} choices)")
        for m, res in fits.items():
            print(f"  fitted {m:>8}: {res.params}  train NLL {res.train_nll:.1f}  test NLL {res.test_nll:.1f}")
        rows = per_unit_loglik(fits, recs, "subject", store)
        cmp = compare_models(rows, unit="subject", split=None)
        for w in cmp.winners:
            print(f"  best for {w['fraction']:.0%} of subjects: {w['model']}")
        print(f"  {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
