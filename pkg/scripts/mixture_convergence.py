"""How sample size and component count affect convergence of the mixture search.

Counts the seeds where every component ends with max-theta >= 0.95 in every
dimension, and reports the smallest max-theta seen.

    python scripts/mixture_convergence.py --lams 2,8 --ns 1,2,4 --seeds 10
"""

import argparse

import numpy as np

from mixnas.runner import SearchConfig, run_proposed


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lams", default="2,8")
    p.add_argument("--ns", default="1,2,4")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--t-theta", type=int, default=2000)
    p.add_argument("--theta-min", type=float, default=1e-3)
    p.add_argument("--same-epsilon", action="store_true", help="give every component epsilon 0")
    args = p.parse_args(argv)

    instance = {"kind": "tradeoff", "dims": 6, "k": 4, "seed": 0, "noise": 1.0}
    print("lambda n converged min_max_theta")
    for lam in (int(x) for x in args.lams.split(",")):
        for n in (int(x) for x in args.ns.split(",")):
            eps = tuple(float(i) * 1e-9 for i in range(n)) if args.same_epsilon else tuple(np.linspace(0, 0.5, n))
            cfg = SearchConfig(evaluator=instance, epsilons=eps, lam=lam, t_w=0, t_theta=args.t_theta,
                               theta_min=args.theta_min)
            hits, low = 0, 1.0
            for seed in range(args.seeds):
                peak = np.stack(run_proposed(cfg.replace(seed=seed)).final_probs).max(axis=-1)
                hits += bool(np.all(peak >= 0.95))
                low = min(low, float(peak.min()))
            print(f"{lam} {n} {hits}/{args.seeds} {low:.3f}")


if __name__ == "__main__":
    main()
