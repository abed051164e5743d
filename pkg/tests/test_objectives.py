import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixnas.checks import fd_gradient, random_supernet_instance, relative_error
from mixnas.model import Architecture, SearchSpace
from mixnas.objectives import (
    SupernetEvaluator,
    SyntheticDataset,
    TableEvaluator,
    TableObjective,
    ToySupernet,
    nondominated_mask,
    nondominated_mask_naive,
    pareto_front,
    retrain,
    supernet_gradient,
    supernet_loss,
    supernet_train_step,
    table_evaluate,
    tradeoff_instance,
)
from mixnas.regularizer import CostModel, complexities


def test_table_examples():
    obj = TableObjective.from_rows([[0, 1], [0, 1]])
    assert table_evaluate(obj, Architecture((0, 0))) == 0.0
    rng = np.random.default_rng(2)
    obj = TableObjective.from_rows([rng.uniform(0, 1, 3), rng.uniform(0, 1, 4)])
    assert obj.deterministic(obj.space.enumerate()).min() == pytest.approx(sum(r[:k].min() for r, k in zip(obj.losses, (3, 4))))


def test_table_noise_mean():
    obj = TableObjective.from_rows([[0.3, 1.0], [0.2, 0.5]], noise=0.1)
    rng = np.random.default_rng(0)
    values = obj.evaluate_many(np.tile([[0, 1]], (10_000, 1)), rng)
    assert abs(values.mean() - 0.8) < 0.005


def test_table_is_pure_without_noise():
    obj = TableObjective.from_rows([[0.3, 1.0], [0.2, 0.5, 0.1]])
    a = [table_evaluate(obj, Architecture((1, 2)), np.random.default_rng(s)) for s in range(5)]
    assert len(set(a)) == 1


def test_table_validation():
    with pytest.raises(ValueError):
        TableObjective(SearchSpace((2,)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        TableObjective.from_rows([[0, 1]], noise=-1.0)


def test_couplings_are_added():
    _, _, obj = tradeoff_instance(3, 3, seed=1, noise=0.0, coupling=0.5)
    choices = obj.space.enumerate()
    plain = obj.losses[np.arange(3)[None, :], choices].sum(axis=1)
    extra = sum(cp.table[choices[:, cp.d1], choices[:, cp.d2]] for cp in obj.couplings)
    assert np.allclose(obj.deterministic(choices), plain + extra)


def test_tradeoff_instance_shape():
    space, cost, obj = tradeoff_instance(6, 4, seed=0)
    assert space.cardinalities == (4,) * 6
    assert cost.costs.max() == 1.0
    assert np.all(np.argmin(cost.costs, axis=1) == 0)
    assert np.all(np.argmin(obj.losses, axis=1) == 3)


def test_pareto_examples():
    obj = TableObjective.from_rows([[0, 1]])
    assert len(pareto_front(obj, CostModel.from_rows([[1, 0]]))) == 2
    front = pareto_front(obj, CostModel.from_rows([[0, 1]]))
    assert [a.choices for _, _, a in front] == [(0,)]
    with pytest.raises(ValueError):
        pareto_front(TableObjective.from_rows([[0, 1]] * 21), CostModel.from_rows([[0, 1]] * 21))


def test_pareto_random_instance_against_double_loop():
    rng = np.random.default_rng(8)
    obj = TableObjective.from_rows([rng.uniform(0, 1, 3) for _ in range(4)])
    cost = CostModel.from_rows([rng.uniform(0, 1, 3) for _ in range(4)])
    choices = obj.space.enumerate()
    keep = nondominated_mask_naive(obj.deterministic(choices), complexities(cost, choices))
    front = {a.choices for _, _, a in pareto_front(obj, cost)}
    assert front == {tuple(c) for c in choices[keep]}


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_dominance_implementations_agree(seed, coarse):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    losses, comps = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    if coarse:  # force ties
        losses, comps = np.round(losses, 1), np.round(comps, 1)
    assert np.array_equal(nondominated_mask(losses, comps), nondominated_mask_naive(losses, comps))


def test_dominance_on_hundred_instances():
    rng = np.random.default_rng(99)
    for _ in range(100):
        n = int(rng.integers(1, 80))
        losses, comps = np.round(rng.uniform(0, 1, (2, n)), 2)
        assert np.array_equal(nondominated_mask(losses, comps), nondominated_mask_naive(losses, comps))


# ---------------------------------------------------------------------------
# toy supernet


@pytest.fixture
def data():
    return SyntheticDataset.generate(np.random.default_rng(0), n_train=200, n_val=100)


def test_zero_weights_give_log_classes(data):
    net = ToySupernet.create([(1, 2), (3, 4)], data.n_features, 4, data.n_classes)
    assert supernet_loss(net, (1, 0), (data.x_w, data.y_w)) == pytest.approx(np.log(data.n_classes), abs=1e-15)
    with pytest.raises(ValueError):
        supernet_loss(net, (0, 0), (data.x_w[:0], data.y_w[:0]))


def test_full_batch_descent_is_monotone(data):
    net = ToySupernet.create([(2, 4), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    batch = (data.x_w, data.y_w)
    losses = [supernet_loss(net, (1, 0), batch)]
    for _ in range(100):
        net = supernet_train_step(net, [(1, 0)], batch, 0.05)
        losses.append(supernet_loss(net, (1, 0), batch))
    assert np.all(np.diff(losses) <= 1e-9)
    assert losses[-1] < losses[0]


def test_shared_ops_share_loss(data):
    net = ToySupernet.create([(2, 4), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    batch = (data.x_theta, data.y_theta)
    assert supernet_loss(net, Architecture((1, 0)), batch) == supernet_loss(net, (1, 0), batch)


def test_weight_sharing_sentinel(data):
    net = ToySupernet.create([(2, 4), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    net.params["V"] = np.random.default_rng(2).standard_normal(net.params["V"].shape)
    batch = (data.x_theta, data.y_theta)
    before = [supernet_loss(net, a, batch) for a in [(0, 0), (1, 0), (0, 1)]]
    net.op(0, 0)[0][...] += 1.0  # mutate one stored operation in place
    after = [supernet_loss(net, a, batch) for a in [(0, 0), (1, 0), (0, 1)]]
    assert after[0] != before[0] and after[2] != before[2]
    assert after[1] == before[1]


def test_lambda_one_is_plain_gradient_step(data):
    net = ToySupernet.create([(2, 4), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    batch = (data.x_w[:20], data.y_w[:20])
    grads = supernet_gradient(net, (1, 1), batch)
    out = supernet_train_step(net, [(1, 1)], batch, 0.3)
    for key, value in net.params.items():
        assert np.array_equal(out.params[key], value - 0.3 * grads[key] if key in grads else value)


def test_unselected_ops_unchanged(data):
    net = ToySupernet.create([(2, 4, 1), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    out = supernet_train_step(net, [(0, 1), (1, 1)], (data.x_w, data.y_w), 0.3)
    for k in (2,):
        for mat_new, mat_old in zip(out.op(0, k), net.op(0, k)):
            assert np.array_equal(mat_new, mat_old)
    assert np.array_equal(out.op(1, 0)[0], net.op(1, 0)[0])
    with pytest.raises(ValueError):
        supernet_train_step(net, [], (data.x_w, data.y_w), 0.3)


def test_non_finite_gradient_raises(data):
    net = ToySupernet.create([(2,), (1,)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    net.params["V"][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        supernet_train_step(net, [(0, 0)], (data.x_w, data.y_w), 0.1)


def test_gradient_finite_differences_small_instance():
    rng = np.random.default_rng(0)
    d = SyntheticDataset.generate(rng, n_features=3, n_classes=3, n_train=20, n_val=10)
    net = ToySupernet.create([(2, 3), (1, 2)], 3, 2, 3, rng)
    net.params["V"] = rng.standard_normal(net.params["V"].shape)
    batch = (d.x_w[:10], d.y_w[:10])
    analytic = supernet_gradient(net, (1, 0), batch)
    numeric = fd_gradient(net, (1, 0), batch)
    for key, g in numeric.items():
        assert relative_error(analytic.get(key, np.zeros_like(g)), g, floor=1e-6) < 1e-5


@given(st.integers(0, 2**32 - 1))
def test_gradient_property(seed):
    net, arch, batch = random_supernet_instance(np.random.default_rng(seed))
    analytic = supernet_gradient(net, arch, batch)
    for key, g in fd_gradient(net, arch, batch).items():
        assert relative_error(analytic.get(key, np.zeros_like(g)), g, floor=1e-6) < 1e-5


def test_cost_equals_parameter_count(data):
    net = ToySupernet.create([(2, 4), (1, 3)], data.n_features, 4, data.n_classes, np.random.default_rng(1))
    cost = net.cost_model()
    for d, row in enumerate(net.widths):
        for k in range(len(row)):
            assert cost.costs[d, k] == sum(m.size for m in net.op(d, k))


def test_dataset_partitions(data):
    again = SyntheticDataset.generate(np.random.default_rng(0), n_train=200, n_val=100)
    assert np.array_equal(again.x_theta, data.x_theta)
    rows_w = {tuple(r) for r in data.x_w}
    assert not rows_w & {tuple(r) for r in data.x_theta}
    assert len(data.x_w) + len(data.x_theta) == 200


def test_retrain_zero_budget(data):
    template = ToySupernet.create([(1, 2), (1, 2)], data.n_features, 4, data.n_classes)
    res = retrain(template, (1, 1), data, 0, np.random.default_rng(0))
    assert res.val_loss == pytest.approx(np.log(data.n_classes), abs=1e-15)


def test_retrain_is_deterministic(data):
    template = ToySupernet.create([(1, 2), (1, 2)], data.n_features, 4, data.n_classes)
    a = retrain(template, (1, 0), data, 30, np.random.default_rng(5))
    b = retrain(template, (1, 0), data, 30, np.random.default_rng(5))
    assert all(np.array_equal(a.net.params[k], b.net.params[k]) for k in a.net.params)


def test_retrain_brute_force_best(data):
    template = ToySupernet.create([(1, 4), (1, 4)], data.n_features, 4, data.n_classes)
    results = {a.choices: retrain(template, a, data, 200, np.random.default_rng(0)) for a in template.space.architectures()}
    best = min(results, key=lambda a: results[a].val_loss)
    top = max(r.val_accuracy for r in results.values())
    assert results[best].val_accuracy >= top - 0.02


def test_evaluators_count_calls(data):
    ev = SupernetEvaluator([(1, 2), (1, 2)], data, retrain_steps=5)
    rng = np.random.default_rng(0)
    ev.reset(rng)
    ev.train_step(np.array([[0, 1], [1, 1]]), rng)
    ev.losses(np.array([[0, 1], [1, 1], [0, 0]]), rng)
    assert (ev.grad_calls, ev.loss_calls) == (2, 3)
    ev.final_metrics(Architecture((0, 0)), rng)
    assert (ev.grad_calls, ev.loss_calls) == (2, 3)
    table = TableEvaluator(TableObjective.from_rows([[0, 1]]))
    table.losses(np.array([[0], [1]]), rng)
    assert table.loss_calls == 2 and not table.has_weights
