import time

import numpy as np
import pytest
import yaml

from mixnas.model import SearchSpace
from mixnas.objectives import tradeoff_instance
from mixnas.regularizer import complexity
from mixnas.runner import (
    SearchConfig,
    build_problem,
    emit_results,
    expected_calls,
    load_finals,
    replay,
    run,
    run_method1,
    run_method2,
    run_proposed,
    run_random_search,
)

TRADEOFF = {"kind": "tradeoff", "dims": 6, "k": 4, "seed": 0, "noise": 1.0}
SUPERNET_DIMS = [{"name": f"b{d}", "categories": ["w1", "w2", "w4", "w8"], "widths": [1, 2, 4, 8]} for d in range(2)]


def separable_config(seed, losses, **kw):
    dims = [{"name": f"d{d}", "categories": [f"c{k}" for k in range(len(row))],
             "costs": list(range(1, len(row) + 1)), "losses": list(row)} for d, row in enumerate(losses)]
    return SearchConfig(space={"dims": dims}, evaluator={"kind": "table", "noise": 0.0}, seed=seed, **kw)


def supernet_config(**kw):
    base = dict(space={"dims": SUPERNET_DIMS}, evaluator={"kind": "supernet", "retrain_steps": 20, "n_train": 200},
                t_w=20, t_theta=20, batch_w=16, batch_theta=16)
    base.update(kw)
    return SearchConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(lam=0)
    with pytest.raises(ValueError):
        SearchConfig(epsilons=(0.1, 0.1))
    with pytest.raises(ValueError):
        SearchConfig(epsilons=(-0.1,))
    with pytest.raises(ValueError):
        SearchConfig(t_theta=-1)
    with pytest.raises(ValueError):
        SearchConfig(method="bogus")
    with pytest.raises(ValueError):
        SearchConfig.from_dict({"lambda": 2, "colour": "red"})


def test_config_round_trip(tmp_path):
    cfg = SearchConfig(lam=3, epsilons=(0.0, 0.2), evaluator=dict(TRADEOFF), seed=4)
    doc = cfg.to_dict()
    assert doc["lambda"] == 3
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert SearchConfig.load(path).to_dict() == doc


def test_zero_iterations_give_first_categories():
    cfg = SearchConfig(evaluator=dict(TRADEOFF), t_theta=0)
    record = run_proposed(cfg)
    assert all(f.arch.choices == (0,) * 6 for f in record.finals)
    assert record.rows == []


def test_single_component_finds_argmin():
    hits = 0
    for seed in range(20):
        losses = np.random.default_rng(100 + seed).uniform(0, 1, (4, 3))
        record = run_proposed(separable_config(seed, losses, epsilons=(0.0,), t_theta=500))
        hits += record.finals[0].arch.choices == tuple(int(k) for k in losses.argmin(axis=1))
    assert hits >= 18


def test_large_epsilon_is_cheaper_on_every_seed():
    for seed in range(20):
        record = run_proposed(SearchConfig(evaluator=dict(TRADEOFF), epsilons=(0.0, 0.5), seed=seed))
        assert record.finals[1].complexity <= record.finals[0].complexity


def test_method1_counts_and_equivalence():
    cfg = SearchConfig(evaluator=dict(TRADEOFF), epsilons=(0.0, 0.2, 0.4), t_theta=50)
    record = run_method1(cfg)
    assert record.theta_updates == 3 * 50
    one = cfg.replace(epsilons=(0.3,))
    a, b = run_method1(one), run_method2(one)
    assert a.rows == b.rows
    assert [f.arch for f in a.finals] == [f.arch for f in b.finals]


def test_method2_weight_stage_runs_once():
    for eps in [(0.0,), (0.0, 0.1, 0.2, 0.3)]:
        record = run_method2(supernet_config(epsilons=eps))
        assert record.weight_updates == 20
        assert record.theta_updates == len(eps) * 20
    assert run_proposed(supernet_config()).theta_updates == 20


def test_method1_slower_than_proposed_on_supernet():
    cfg = supernet_config(t_w=100, t_theta=100)
    t0 = time.perf_counter()
    run_proposed(cfg)
    t1 = time.perf_counter()
    run_method1(cfg)
    t2 = time.perf_counter()
    assert t2 - t1 >= t1 - t0


def test_method2_and_proposed_fronts_comparable():
    space, raw, obj = tradeoff_instance(**{k: v for k, v in TRADEOFF.items() if k != "kind"})
    pairs = []
    for seed in range(20):
        cfg = SearchConfig(evaluator=dict(TRADEOFF), seed=seed)
        prop, sep = run_proposed(cfg), run_method2(cfg)
        for f in prop.finals:
            match = min(sep.finals, key=lambda g: abs(g.complexity - f.complexity))
            pairs.append((f.metrics["loss"], match.metrics["loss"]))
    pairs = np.array(pairs)
    med_p, med_m = np.median(pairs, axis=0)
    print(f"median loss at matched complexity: proposed {med_p:.4f} method2 {med_m:.4f}")
    assert abs(med_p - med_m) / med_m < 0.05


def test_random_search_budget_one():
    cfg = SearchConfig(evaluator=dict(TRADEOFF), method="random", random_search={"targets": [2.0], "budget": 1})
    record = run_random_search(cfg)
    problem = build_problem(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(5, 0)))
    from mixnas.model import Distribution, sample_choices
    from mixnas.regularizer import complexities
    uniform = Distribution.uniform(problem.space).probs
    while True:
        c = sample_choices(uniform, problem.space, rng, 1)
        if abs(complexities(problem.cost, c)[0] - 2.0) <= 0.1:
            break
    assert record.finals[0].arch.choices == tuple(c[0])


def test_random_search_large_budget_matches_band_optimum():
    losses = np.random.default_rng(3).uniform(0, 1, (3, 3))
    cfg = separable_config(0, losses, method="random", normalize_costs=False,
                           random_search={"targets": [5.0, 7.0], "budget": 2000, "max_draws": 20000})
    record = run_random_search(cfg)
    problem = build_problem(cfg)
    choices = problem.space.enumerate()
    from mixnas.regularizer import complexities
    comps = complexities(problem.cost, choices)
    det = problem.evaluator.objective.deterministic(choices)
    for f in record.finals:
        band = np.abs(comps - f.target) <= 0.05 * f.target
        assert f.metrics["loss"] == det[band].min()


def test_random_search_errors_and_determinism():
    cfg = SearchConfig(evaluator=dict(TRADEOFF), method="random", random_search={"targets": [2.0, 3.0], "budget": 3})
    a, b = run_random_search(cfg), run_random_search(cfg)
    assert [f.arch for f in a.finals] == [f.arch for f in b.finals]
    with pytest.raises(ValueError):
        run_random_search(cfg, targets=[50.0])
    with pytest.raises(ValueError):
        run_random_search(cfg, targets=[])


@pytest.mark.parametrize("method", ["proposed", "method1", "method2", "random"])
def test_emit_and_replay(tmp_path, method):
    cfg = SearchConfig(evaluator=dict(TRADEOFF), t_theta=30, method=method,
                       random_search={"targets": [2.0, 3.0], "budget": 3})
    record = run(cfg)
    paths = emit_results(record, tmp_path / "run")
    lines = paths["trajectory"].read_text().splitlines()
    assert lines[0] == "iter,component,epsilon,mean_loss,expected_complexity," + ",".join(
        f"entropy_d{d}" for d in range(1, 7))
    if method != "random":
        assert len(lines) == 1 + 30 * 4
    same, again = replay(paths["manifest"], tmp_path / "again")
    assert same
    archs = load_finals(paths["finals"], record.space)
    assert archs == [f.arch for f in record.finals]


def test_determinism_and_accounting():
    cfg = supernet_config()
    for method in ("proposed", "method1", "method2"):
        a, b = run(cfg.replace(method=method)), run(cfg.replace(method=method))
        assert a.rows == b.rows
        assert [f.metrics for f in a.finals] == [f.metrics for f in b.finals]
        calls = expected_calls(method, True, cfg.lam, len(cfg.epsilons), cfg.t_w, cfg.t_theta)
        assert (a.loss_calls, a.grad_calls) == (calls["loss"], calls["grad"])
        problem = build_problem(cfg)
        for f in a.finals:
            assert f.complexity == complexity(problem.cost, f.arch)
            assert f.raw_complexity == complexity(problem.raw_cost, f.arch)


def test_weight_free_accounting():
    cfg = SearchConfig(evaluator=dict(TRADEOFF), t_w=7, t_theta=11)
    for method in ("proposed", "method1", "method2"):
        record = run(cfg.replace(method=method))
        calls = expected_calls(method, False, 2, 4, 7, 11)
        assert (record.loss_calls, record.grad_calls) == (calls["loss"], calls["grad"])


def test_build_problem_from_document():
    cfg = SearchConfig.load("configs/table.yaml")
    problem = build_problem(cfg)
    assert problem.space.names == ("stem", "body", "head")
    assert problem.space.labels[1] == ("skip", "conv3", "conv5")
    assert problem.cost.costs.max() == 1.0
    assert problem.raw_cost.costs[1, 2] == 5.0
    assert len(problem.evaluator.objective.couplings) == 1
    with pytest.raises(ValueError):
        build_problem(cfg.replace(evaluator={"kind": "nope"}))
    bad = [dict(d, costs=[1, 2, 3, 4]) for d in SUPERNET_DIMS]
    with pytest.raises(ValueError):
        build_problem(supernet_config(space={"dims": bad}))


def test_supernet_costs_are_parameter_counts():
    problem = build_problem(supernet_config(normalize_costs=False))
    assert problem.cost.rows[0].tolist() == [12.0, 24.0, 48.0, 96.0]
    assert isinstance(problem.space, SearchSpace)
