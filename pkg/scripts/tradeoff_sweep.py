"""Final (complexity, loss) points of several search procedures against the exact front.

    python scripts/tradeoff_sweep.py --seeds 5 --t-theta 500 --out runs/tradeoff.csv
"""

import argparse
import csv
import sys

import numpy as np

from mixnas.objectives import pareto_front, tradeoff_instance
from mixnas.runner import SearchConfig, run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--t-theta", type=int, default=500)
    p.add_argument("--lambda", dest="lam", type=int, default=2)
    p.add_argument("--epsilons", default="0,0.1,0.3,0.5")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--methods", default="proposed,method2,random")
    p.add_argument("--out", help="CSV file (stdout if omitted)")
    args = p.parse_args(argv)

    instance = {"kind": "tradeoff", "dims": 6, "k": 4, "seed": 0, "noise": args.noise}
    space, raw, obj = tradeoff_instance(6, 4, seed=0, noise=args.noise)
    epsilons = tuple(float(e) for e in args.epsilons.split(","))
    front = pareto_front(obj, raw)
    targets = [c for _, c, _ in front[:: max(1, len(front) // 4)]]

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["method", "seed", "epsilon", "complexity", "loss", "front_loss_at_complexity"])
    comps = np.array([c for _, c, _ in front])
    losses = np.array([l for l, _, _ in front])
    for method in args.methods.split(","):
        for seed in range(args.seeds):
            cfg = SearchConfig(evaluator=instance, method=method, seed=seed, lam=args.lam, epsilons=epsilons,
                               t_w=0, t_theta=args.t_theta, random_search={"targets": targets, "budget": 2 * args.t_theta})
            for f in run(cfg).finals:
                best = losses[comps <= f.complexity + 1e-12].min()
                writer.writerow([method, seed, f.epsilon if f.epsilon is not None else "", f"{f.complexity:.6f}",
                                 f"{f.metrics['loss']:.6f}", f"{best:.6f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
