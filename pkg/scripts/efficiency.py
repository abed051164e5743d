"""Evaluator calls and wall-clock of the three search procedures on the toy supernet.

    python scripts/efficiency.py --t 200 --n 4
"""

import argparse

from mixnas.runner import SearchConfig, expected_calls, run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--t", type=int, default=200, help="T_W = T_theta")
    p.add_argument("--n", type=int, default=4, help="number of regularization strengths")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    dims = [{"name": f"block{d + 1}", "categories": ["w1", "w2", "w4", "w8"], "widths": [1, 2, 4, 8]}
            for d in range(3)]
    epsilons = tuple(round(0.5 * i / max(1, args.n - 1), 6) for i in range(args.n))
    cfg = SearchConfig(space={"dims": dims}, evaluator={"kind": "supernet", "retrain_steps": 100},
                       epsilons=epsilons, t_w=args.t, t_theta=args.t, batch_w=32, batch_theta=32, seed=args.seed)
    print("method loss_calls grad_calls total closed_form search_seconds")
    for method in ("proposed", "method2", "method1"):
        record = run(cfg.replace(method=method))
        formula = expected_calls(method, True, cfg.lam, args.n, args.t, args.t)
        seconds = sum(v for k, v in record.timings.items() if k != "retrain")
        print(f"{method} {record.loss_calls} {record.grad_calls} {record.evaluator_calls} {formula['total']} "
              f"{seconds:.2f}")


if __name__ == "__main__":
    main()
