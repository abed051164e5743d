"""Paired-seed retrained accuracy of the two-stage search against per-epsilon simultaneous search.

    python scripts/two_stage_vs_simultaneous.py --seeds 20 --t 2000
"""

import argparse

import numpy as np

from mixnas.runner import SearchConfig, run_method1, run_proposed


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--t", type=int, default=2000)
    p.add_argument("--widths", default="1,2,4,8")
    args = p.parse_args(argv)

    widths = [int(w) for w in args.widths.split(",")]
    dims = [{"name": f"block{d + 1}", "categories": [f"w{w}" for w in widths], "widths": widths} for d in range(3)]
    cfg = SearchConfig(space={"dims": dims}, evaluator={"kind": "supernet", "retrain_steps": 300},
                       t_w=args.t, t_theta=args.t, batch_w=32, batch_theta=32)
    print("seed proposed_acc method1_acc")
    a, b = [], []
    for seed in range(args.seeds):
        prop = run_proposed(cfg.replace(seed=seed))
        simul = run_method1(cfg.replace(seed=seed))
        a.append(np.mean([f.metrics["val_accuracy"] for f in prop.finals]))
        b.append(np.mean([f.metrics["val_accuracy"] for f in simul.finals]))
        print(f"{seed} {a[-1]:.4f} {b[-1]:.4f}")
    print(f"mean {np.mean(a):.4f} {np.mean(b):.4f}")


if __name__ == "__main__":
    main()
