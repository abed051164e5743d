"""Oracle suites shared by the test-suite and ``mixnas gradcheck``."""

from __future__ import annotations

import numpy as np

from .model import Distribution, SearchSpace
from .objectives import SyntheticDataset, ToySupernet, supernet_gradient, supernet_loss
from .regularizer import nat_grad_rows


def explicit_fim(theta_row: np.ndarray) -> np.ndarray:
    """Fisher matrix of a categorical in its first ``K-1`` coordinates."""
    bar = theta_row[:-1]
    return np.diag(1.0 / bar) + 1.0 / theta_row[-1]


def fd_gradient(net: ToySupernet, arch, batch, h: float = 1e-5) -> dict[str, np.ndarray]:
    out = {}
    for key, value in net.params.items():
        g = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + h
            up = supernet_loss(net, arch, batch)
            value[idx] = old - h
            down = supernet_loss(net, arch, batch)
            value[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[key] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_supernet_instance(rng: np.random.Generator, n: int = 10):
    dims = int(rng.integers(1, 4))
    widths = [tuple(int(w) for w in rng.integers(1, 4, size=int(rng.integers(2, 4)))) for _ in range(dims)]
    data = SyntheticDataset.generate(rng, n_features=int(rng.integers(2, 5)), n_classes=int(rng.integers(2, 4)),
                                     n_train=2 * n, n_val=n)
    net = ToySupernet.create(widths, data.n_features, int(rng.integers(1, 4)), data.n_classes, rng)
    net.params["V"] = rng.standard_normal(net.params["V"].shape)
    net.params["b"] = rng.standard_normal(net.params["b"].shape)
    arch = tuple(int(rng.integers(len(row))) for row in widths)
    return net, arch, (data.x_w[:n], data.y_w[:n])


def gradient_suite(instances: int = 50, seed: int = 0) -> float:
    """Worst relative error of analytic gradients against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        net, arch, batch = random_supernet_instance(rng)
        analytic = supernet_gradient(net, arch, batch)
        numeric = fd_gradient(net, arch, batch)
        for key, g in numeric.items():
            worst = max(worst, relative_error(analytic.get(key, np.zeros_like(g)), g, floor=1e-6))
    return worst


def random_interior(rng: np.random.Generator, max_dims: int = 5, max_k: int = 6):
    cards = tuple(int(k) for k in rng.integers(2, max_k + 1, size=int(rng.integers(1, max_dims + 1))))
    space = SearchSpace(cards)
    rows = [rng.dirichlet(np.ones(k)) * 0.98 + 0.02 / k for k in cards]
    costs = space.pad([rng.uniform(0, 1, size=k) for k in cards])
    return space, Distribution(space, space.pad(rows)), costs


def fim_oracle_suite(instances: int = 1000, seed: int = 0) -> float:
    """Worst gap between the analytic regularizer natural gradient and an explicit FIM solve."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        space, dist, costs = random_interior(rng)
        analytic = nat_grad_rows(costs, dist.probs)
        for d, k in enumerate(space.cardinalities):
            theta, c = dist.probs[d, :k], costs[d, :k]
            vanilla = c[:-1] - c[-1]
            oracle = np.linalg.solve(explicit_fim(theta), vanilla)
            worst = max(worst, float(np.max(np.abs(oracle - analytic[d, :k - 1]))))
    return worst
