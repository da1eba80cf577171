"""Train the value ensemble for a scene and save its weights.

    python3 scripts/train_value.py --condition obstacle --out value_obstacle.json
"""

import argparse
import time

from reachintent.harness import SCENES
from reachintent.value import ValueTrainingConfig, train_value_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--condition", choices=sorted(SCENES), default="standing")
    ap.add_argument("--iterations", type=int, default=ValueTrainingConfig.iterations)
    ap.add_argument("--rollouts", type=int, default=ValueTrainingConfig.rollouts_per_iteration)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    cfg = ValueTrainingConfig(iterations=args.iterations, rollouts_per_iteration=args.rollouts)
    t0 = time.perf_counter()
    ens, report = train_value_ensemble(SCENES[args.condition](), config=cfg, rng_seed=args.seed,
                                       return_report=True)
    ens.save(args.out)
    for k, losses in enumerate(report.losses):
        print(f"net {k}: " + "  ".join(f"{a:.3f}->{b:.3f}" for a, b in losses))
    print(f"saved {args.out} after {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
