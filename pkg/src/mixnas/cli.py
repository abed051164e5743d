"""Command line entry point: ``mixnas search|pareto-oracle|gradcheck|replay``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runner
from .runner import SearchConfig


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _config(args) -> SearchConfig:
    cfg = SearchConfig.load(args.config) if args.config else SearchConfig()
    overrides = {}
    for key in ("seed", "eta", "t_w", "t_theta", "batch_w", "batch_theta", "theta_min", "out", "method"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "lam", None) is not None:
        overrides["lam"] = args.lam
    if getattr(args, "epsilons", None) is not None:
        overrides["epsilons"] = tuple(_floats(args.epsilons))
    if getattr(args, "targets", None) is not None:
        overrides["random_search"] = {**cfg.random_search, "targets": _floats(args.targets)}
    return cfg.replace(**overrides) if overrides else cfg


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML config document")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilons", help="comma separated list, e.g. 0,0.1,0.3")
    p.add_argument("--lambda", dest="lam", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--t-w", dest="t_w", type=int)
    p.add_argument("--t-theta", dest="t_theta", type=int)
    p.add_argument("--batch-w", dest="batch_w", type=int)
    p.add_argument("--batch-theta", dest="batch_theta", type=int)
    p.add_argument("--theta-min", dest="theta_min", type=float)
    p.add_argument("--out", help="output directory")


def cmd_search(args) -> int:
    cfg = _config(args)
    record = runner.run(cfg)
    for f in record.finals:
        key = f"target={f.target}" if f.target is not None else f"epsilon={f.epsilon}"
        metrics = " ".join(f"{k}={v:.6g}" for k, v in sorted(f.metrics.items()))
        print(f"{key} complexity={f.complexity:.6g} arch={','.join(f.labels)} {metrics}")
    print(f"evaluator_calls loss={record.loss_calls} grad={record.grad_calls}")
    if cfg.out:
        paths = runner.emit_results(record, cfg.out)
        print(f"wrote {paths['manifest'].parent}")
    return 0


def cmd_pareto(args) -> int:
    from .objectives import TableEvaluator, pareto_front

    cfg = _config(args)
    problem = runner.build_problem(cfg)
    if not isinstance(problem.evaluator, TableEvaluator):
        print("pareto-oracle needs a table objective", file=sys.stderr)
        return 2
    for loss, comp, arch in pareto_front(problem.evaluator.objective, problem.cost):
        print(f"{comp:.10g} {loss:.10g} {','.join(arch.labels(problem.space))}")
    return 0


def cmd_gradcheck(args) -> int:
    from .checks import fim_oracle_suite, gradient_suite

    worst_grad = gradient_suite(args.instances, args.seed)
    worst_fim = fim_oracle_suite(args.instances * 20, args.seed)
    ok_grad, ok_fim = worst_grad < 1e-5, worst_fim < 1e-10
    print(f"finite-difference max relative error {worst_grad:.3e} {'PASS' if ok_grad else 'FAIL'}")
    print(f"fim oracle max abs error {worst_fim:.3e} {'PASS' if ok_fim else 'FAIL'}")
    return 0 if ok_grad and ok_fim else 1


def cmd_replay(args) -> int:
    out = args.out or str(Path(args.manifest).parent / "replay")
    same, _ = runner.replay(args.manifest, out)
    print(f"replay {'identical' if same else 'DIFFERS'} -> {out}")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixnas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run one search procedure")
    _add_config_flags(p)
    p.add_argument("--method", choices=runner.METHODS)
    p.add_argument("--targets", help="random search complexity targets")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("pareto-oracle", help="enumerate the exact front of a table objective")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("gradcheck", help="finite-difference and FIM oracle suites")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("replay", help="rerun from a manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory for the rerun")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
