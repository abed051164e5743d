"""Desk-scale objectives: table losses with enumerable fronts and a toy supernet.

The toy supernet has one block per search dimension. Operation ``k`` of
dimension ``d`` is ``z_d = tanh(x P^T) U^T`` with hidden width ``r_{d,k}``,
so it owns ``r_{d,k} * (F + B)`` weights. Block outputs have a fixed width
``B`` and are concatenated into a shared softmax classifier, which keeps the
classifier shape independent of the architecture.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.special import ndtri

from .model import Architecture, SearchSpace, as_choices
from .regularizer import CostModel, complexities

MAX_ENUMERATION = 10**6


class Evaluator(Protocol):
    has_weights: bool
    loss_calls: int
    grad_calls: int

    def reset(self, rng: np.random.Generator) -> None: ...

    def losses(self, choices: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def train_step(self, choices: np.ndarray, rng: np.random.Generator) -> None: ...

    def final_metrics(self, arch: Architecture, rng: np.random.Generator) -> dict: ...


# ---------------------------------------------------------------------------
# table objectives


@dataclass(frozen=True, eq=False)
class Coupling:
    d1: int
    d2: int
    table: np.ndarray


@dataclass(frozen=True, eq=False)
class TableObjective:
    space: SearchSpace
    losses: np.ndarray = field(repr=False)
    couplings: tuple[Coupling, ...] = ()
    noise: float = 0.0

    def __post_init__(self):
        l = np.array(self.losses, dtype=float)
        if l.shape != (self.space.dims, self.space.kmax):
            raise ValueError(f"loss table shape {l.shape} does not match space")
        if not np.isfinite(self.noise) or self.noise < 0:
            raise ValueError("noise must be finite and nonnegative")
        for cp in self.couplings:
            shape = (self.space.cardinalities[cp.d1], self.space.cardinalities[cp.d2])
            if np.shape(cp.table) != shape or cp.d1 == cp.d2:
                raise ValueError(f"coupling table for ({cp.d1}, {cp.d2}) must have shape {shape}")
        object.__setattr__(self, "losses", np.where(self.space.mask, l, 0.0))
        object.__setattr__(self, "couplings", tuple(self.couplings))

    @classmethod
    def from_rows(cls, rows, space: SearchSpace | None = None, **kw) -> "TableObjective":
        if space is None:
            space = SearchSpace(tuple(len(r) for r in rows))
        return cls(space, space.pad(rows), **kw)

    def deterministic(self, choices: np.ndarray) -> np.ndarray:
        out = self.losses[np.arange(self.space.dims)[None, :], choices].sum(axis=1)
        for cp in self.couplings:
            out = out + np.asarray(cp.table)[choices[:, cp.d1], choices[:, cp.d2]]
        return out

    def evaluate_many(self, choices: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        out = self.deterministic(choices)
        if self.noise > 0:
            out = out + self.noise * rng.standard_normal(len(out))
        return out


def table_evaluate(obj: TableObjective, arch: Architecture, rng: np.random.Generator | None = None) -> float:
    return float(obj.evaluate_many(as_choices(arch, obj.space), rng)[0])


def tradeoff_instance(
    dims: int = 6,
    k: int = 4,
    seed: int = 0,
    noise: float = 1.0,
    switch: Sequence[float] = (0.75, 0.4, 0.2),
    coupling: float = 0.0,
) -> tuple[SearchSpace, CostModel, TableObjective]:
    """Anticorrelated loss/cost tables with a designed switch-over per dimension.

    In every dimension category 0 is the cheapest and worst, category ``k-1``
    the most expensive and best; the middle categories cost more than 0 and
    lose more, so they are dominated. Dimension ``d`` is given a loss gap
    such that, with evaluation noise ``noise``, the pairwise win margin
    ``2 P(cheap loses) - 1`` equals ``switch[d % len(switch)]`` times the
    normalized cost gap. Rank-based updates therefore keep the expensive
    category for regularization strengths below that value and switch to the
    cheap one above it.
    """
    rng = np.random.default_rng(seed)
    space = SearchSpace(tuple([k] * dims))
    sigma = noise if noise > 0 else 1.0
    levels = np.linspace(0.1, 1.0, k)
    units = rng.uniform(0.8, 1.0, size=dims)
    units[rng.integers(dims)] = 1.0  # global max cost is exactly 1
    cost_rows, loss_rows = [], []
    for d in range(dims):
        c = units[d] * levels
        margin = min(switch[d % len(switch)] * (c[-1] - c[0]), 0.99)
        gap = sigma * np.sqrt(2.0) * float(ndtri((1.0 + margin) / 2.0))
        row = np.empty(k)
        row[0], row[-1] = gap, 0.0
        row[1:-1] = gap + sigma * rng.uniform(0.3, 0.8, size=k - 2)
        cost_rows.append(c)
        loss_rows.append(row)
    couplings = []
    if coupling > 0:
        for d in range(dims - 1):
            couplings.append(Coupling(d, d + 1, coupling * rng.standard_normal((k, k))))
    obj = TableObjective(space, space.pad(loss_rows), tuple(couplings), noise)
    return space, CostModel(space, space.pad(cost_rows)), obj


class TableEvaluator:
    """Weight-free evaluator backed by a :class:`TableObjective`."""

    has_weights = False

    def __init__(self, objective: TableObjective):
        self.objective = objective
        self.loss_calls = 0
        self.grad_calls = 0

    def reset(self, rng):
        pass

    def losses(self, choices, rng):
        self.loss_calls += len(choices)
        return self.objective.evaluate_many(choices, rng)

    def train_step(self, choices, rng):
        pass

    def final_metrics(self, arch, rng):
        return {"loss": float(self.objective.deterministic(as_choices(arch, self.objective.space))[0])}


# ---------------------------------------------------------------------------
# Pareto oracle


def _enumerate(obj: TableObjective, cost: CostModel):
    if obj.space.size > MAX_ENUMERATION:
        raise ValueError(f"space has {obj.space.size} architectures, limit is {MAX_ENUMERATION}")
    choices = obj.space.enumerate()
    return choices, obj.deterministic(choices), complexities(cost, choices)


def nondominated_mask(losses: np.ndarray, comps: np.ndarray) -> np.ndarray:
    """Sweep over points sorted by loss; exact, duplicates are all kept."""
    order = np.lexsort((comps, losses))
    keep = np.zeros(len(losses), dtype=bool)
    best_below = np.inf  # min complexity among strictly smaller losses
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and losses[order[j]] == losses[order[i]]:
            j += 1
        group = order[i:j]
        cmin = comps[group[0]]
        if cmin < best_below:
            keep[group[comps[group] == cmin]] = True
            best_below = cmin
        i = j
    return keep


def nondominated_mask_naive(losses: np.ndarray, comps: np.ndarray) -> np.ndarray:
    n = len(losses)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        for j in range(n):
            if (losses[j] <= losses[i] and comps[j] <= comps[i]) and (losses[j] < losses[i] or comps[j] < comps[i]):
                keep[i] = False
                break
    return keep


def pareto_front(obj: TableObjective, cost: CostModel) -> list[tuple[float, float, Architecture]]:
    choices, losses, comps = _enumerate(obj, cost)
    keep = np.flatnonzero(nondominated_mask(losses, comps))
    keep = keep[np.lexsort((losses[keep], comps[keep]))]
    return [(float(losses[i]), float(comps[i]), Architecture(tuple(choices[i]))) for i in keep]


# ---------------------------------------------------------------------------
# synthetic data and the toy supernet


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    x_w: np.ndarray
    y_w: np.ndarray
    x_theta: np.ndarray
    y_theta: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    n_classes: int

    @classmethod
    def generate(
        cls,
        rng: np.random.Generator,
        n_features: int = 8,
        n_classes: int = 4,
        clusters_per_class: int = 3,
        n_train: int = 800,
        n_val: int = 400,
        spread: float = 0.6,
    ) -> "SyntheticDataset":
        centers = rng.standard_normal((n_classes * clusters_per_class, n_features))
        owner = np.repeat(np.arange(n_classes), clusters_per_class)

        def draw(n):
            which = rng.integers(len(centers), size=n)
            x = centers[which] + spread * rng.standard_normal((n, n_features))
            return x, owner[which]

        x, y = draw(n_train)
        xv, yv = draw(n_val)
        half = n_train // 2
        return cls(x[:half], y[:half], x[half:], y[half:], xv, yv, n_classes)

    @property
    def n_features(self) -> int:
        return self.x_w.shape[1]

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        return np.concatenate([self.x_w, self.x_theta]), np.concatenate([self.y_w, self.y_theta])


def minibatch(x: np.ndarray, y: np.ndarray, size: int, rng: np.random.Generator):
    if size >= len(x):
        return x, y
    idx = rng.choice(len(x), size=size, replace=False)
    return x[idx], y[idx]


def _key(kind: str, d: int, k: int) -> str:
    return f"{kind}{d}_{k}"


@dataclass(eq=False)
class ToySupernet:
    widths: tuple[tuple[int, ...], ...]
    n_features: int
    block_width: int
    n_classes: int
    params: dict[str, np.ndarray] = field(repr=False)

    @classmethod
    def create(cls, widths, n_features, block_width, n_classes, rng=None, scale=1.0) -> "ToySupernet":
        """Random hidden weights (``rng``) or all zeros (``rng=None``); classifier starts at zero."""
        widths = tuple(tuple(int(r) for r in row) for row in widths)
        params = {}
        for d, row in enumerate(widths):
            for k, r in enumerate(row):
                if rng is None:
                    params[_key("P", d, k)] = np.zeros((r, n_features))
                    params[_key("U", d, k)] = np.zeros((block_width, r))
                else:
                    params[_key("P", d, k)] = scale * rng.standard_normal((r, n_features)) / np.sqrt(n_features)
                    params[_key("U", d, k)] = scale * rng.standard_normal((block_width, r)) / np.sqrt(r)
        params["V"] = np.zeros((len(widths) * block_width, n_classes))
        params["b"] = np.zeros(n_classes)
        return cls(widths, n_features, block_width, n_classes, params)

    @property
    def space(self) -> SearchSpace:
        return SearchSpace(tuple(len(row) for row in self.widths))

    def op_param_count(self, d: int, k: int) -> int:
        return self.widths[d][k] * (self.n_features + self.block_width)

    def cost_model(self) -> CostModel:
        space = self.space
        rows = [[self.op_param_count(d, k) for k in range(len(row))] for d, row in enumerate(self.widths)]
        return CostModel(space, space.pad(rows))

    def copy(self) -> "ToySupernet":
        return ToySupernet(self.widths, self.n_features, self.block_width, self.n_classes,
                           {k: v.copy() for k, v in self.params.items()})

    def op(self, d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.params[_key("P", d, k)], self.params[_key("U", d, k)]


def _forward(net: ToySupernet, choices: Sequence[int], x: np.ndarray):
    hidden, blocks = [], []
    for d, k in enumerate(choices):
        P, U = net.op(d, k)
        h = np.tanh(x @ P.T)
        hidden.append(h)
        blocks.append(h @ U.T)
    z = np.concatenate(blocks, axis=1)
    logits = z @ net.params["V"] + net.params["b"]
    logits = logits - logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return hidden, z, logp


def _arch_choices(arch) -> tuple[int, ...]:
    return arch.choices if isinstance(arch, Architecture) else tuple(int(h) for h in arch)


def supernet_loss(net: ToySupernet, arch, batch: tuple[np.ndarray, np.ndarray]) -> float:
    x, y = batch
    if len(x) == 0:
        raise ValueError("empty batch")
    _, _, logp = _forward(net, _arch_choices(arch), x)
    return float(-logp[np.arange(len(y)), y].mean())


def supernet_accuracy(net: ToySupernet, arch, batch) -> float:
    x, y = batch
    _, _, logp = _forward(net, _arch_choices(arch), x)
    return float((logp.argmax(axis=1) == y).mean())


def supernet_gradient(net: ToySupernet, arch, batch) -> dict[str, np.ndarray]:
    """Closed-form gradient of the mean cross-entropy; only selected ops appear."""
    x, y = batch
    choices = _arch_choices(arch)
    hidden, z, logp = _forward(net, choices, x)
    n, B = len(x), net.block_width
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    g /= n
    V = net.params["V"]
    grads = {"V": z.T @ g, "b": g.sum(axis=0)}
    dz = g @ V.T
    for d, k in enumerate(choices):
        P, U = net.op(d, k)
        dzd = dz[:, d * B:(d + 1) * B]
        h = hidden[d]
        grads[_key("U", d, k)] = dzd.T @ h
        da = (dzd @ U) * (1.0 - h * h)
        grads[_key("P", d, k)] = da.T @ x
    return grads


def supernet_train_step(net: ToySupernet, samples, batch, step: float) -> ToySupernet:
    """``W <- W - step * mean_i grad L(M_i, W, batch)``; returns a new net."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one architecture")
    total: dict[str, np.ndarray] = {}
    for arch in samples:
        for key, g in supernet_gradient(net, arch, batch).items():
            total[key] = total[key] + g if key in total else g
    out = net.copy()
    for key, g in total.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {key}")
        out.params[key] -= step * g / len(samples)
    return out


@dataclass
class RetrainResult:
    net: ToySupernet
    val_loss: float
    val_accuracy: float


def retrain(
    template: ToySupernet,
    arch,
    data: SyntheticDataset,
    steps: int,
    rng: np.random.Generator,
    lr: float = 0.5,
    batch_size: int = 64,
    scale: float = 1.0,
) -> RetrainResult:
    """Fresh weights for ``arch`` trained on ``D_W + D_theta``; metrics on held-out data."""
    net = ToySupernet.create(template.widths, template.n_features, template.block_width,
                             template.n_classes, rng, scale)
    x, y = data.full()
    for _ in range(steps):
        net = supernet_train_step(net, [arch], minibatch(x, y, batch_size, rng), lr)
    val = (data.x_val, data.y_val)
    return RetrainResult(net, supernet_loss(net, arch, val), supernet_accuracy(net, arch, val))


class SupernetEvaluator:
    """Weight-sharing evaluator: weight steps on ``D_W``, losses on ``D_theta``."""

    has_weights = True

    def __init__(
        self,
        widths,
        data: SyntheticDataset,
        block_width: int = 4,
        weight_lr: float = 0.5,
        batch_w: int = 64,
        batch_theta: int = 64,
        init_scale: float = 1.0,
        retrain_steps: int = 300,
        retrain_lr: float = 0.5,
    ):
        self.data = data
        self.template = ToySupernet.create(widths, data.n_features, block_width, data.n_classes)
        self.weight_lr = weight_lr
        self.batch_w = batch_w
        self.batch_theta = batch_theta
        self.init_scale = init_scale
        self.retrain_steps = retrain_steps
        self.retrain_lr = retrain_lr
        self.net = self.template
        self.loss_calls = 0
        self.grad_calls = 0

    @property
    def space(self) -> SearchSpace:
        return self.template.space

    def cost_model(self) -> CostModel:
        return self.template.cost_model()

    def reset(self, rng):
        t = self.template
        self.net = ToySupernet.create(t.widths, t.n_features, t.block_width, t.n_classes, rng, self.init_scale)

    def train_step(self, choices, rng):
        batch = minibatch(self.data.x_w, self.data.y_w, self.batch_w, rng)
        self.grad_calls += len(choices)
        self.net = supernet_train_step(self.net, [tuple(c) for c in choices], batch, self.weight_lr)

    def losses(self, choices, rng):
        batch = minibatch(self.data.x_theta, self.data.y_theta, self.batch_theta, rng)
        self.loss_calls += len(choices)
        return np.array([supernet_loss(self.net, tuple(c), batch) for c in choices])

    def final_metrics(self, arch, rng):
        res = retrain(self.template, arch, self.data, self.retrain_steps, rng, self.retrain_lr,
                      self.batch_w, self.init_scale)
        return {"val_loss": res.val_loss, "val_accuracy": res.val_accuracy}
