"""Natural-gradient updates of one or several categorical distributions.

All update paths go through :func:`natural_step`, which works on stacked
``(N, D, Kmax)`` probability arrays. A single-distribution update is the
``N = 1`` case with unit likelihood ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Architecture, Distribution, SearchSpace, ShapeMismatchError, as_choices, one_hot, sample_choices
from .regularizer import CostModel, nat_grad_rows
from .utility import UtilityConfig, mixture_ratios, utility_values, weighted_quantiles


def default_learning_rate(space: SearchSpace) -> float:
    return 1.0 / space.total_categories


def default_theta_min(space: SearchSpace) -> float:
    return 1.0 / (2.0 * space.total_categories)


@dataclass(frozen=True, eq=False)
class Ensemble:
    components: tuple[Distribution, ...]
    epsilons: tuple[float, ...]
    eta: float | None = None
    theta_min: float | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        eps = tuple(float(e) for e in self.epsilons)
        if len(comps) < 1:
            raise ValueError("an ensemble needs at least one component")
        if len(comps) != len(eps):
            raise ValueError("one epsilon per component is required")
        if any(e < 0 for e in eps):
            raise ValueError("epsilons must be nonnegative")
        space = comps[0].space
        if any(c.space.cardinalities != space.cardinalities for c in comps):
            raise ShapeMismatchError("all components must share one search space")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "epsilons", eps)
        if self.eta is None:
            object.__setattr__(self, "eta", default_learning_rate(space))
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.theta_min is None:
            object.__setattr__(self, "theta_min", default_theta_min(space))

    @classmethod
    def uniform(cls, space: SearchSpace, epsilons: Sequence[float], **kw) -> "Ensemble":
        return cls(tuple(Distribution.uniform(space) for _ in epsilons), tuple(epsilons), **kw)

    @property
    def space(self) -> SearchSpace:
        return self.components[0].space

    @property
    def size(self) -> int:
        return len(self.components)

    def stacked(self) -> np.ndarray:
        return np.stack([c.probs for c in self.components])

    def replace(self, stacked: np.ndarray) -> "Ensemble":
        comps = tuple(Distribution(self.space, p) for p in stacked)
        return Ensemble(comps, self.epsilons, self.eta, self.theta_min)


@dataclass
class StepReport:
    complexity_before: np.ndarray
    complexity_after: np.ndarray
    max_change: float
    projections: int = 0
    ratios: np.ndarray | None = field(default=None, repr=False)
    utilities: np.ndarray | None = field(default=None, repr=False)


def natural_step(
    stacked: np.ndarray,
    onehots: np.ndarray,
    utils: np.ndarray,
    ratios: np.ndarray,
    costs: np.ndarray,
    epsilons: np.ndarray,
    eta: float,
) -> np.ndarray:
    """One unprojected step for every component.

    ``theta_n - eta * (mean_i s_ni r_ni (m_i - theta_n) + eps_n (c - Q_n) * theta_n)``
    """
    lam = onehots.shape[0]
    weights = utils * ratios / lam  # (N, lam)
    ll = np.einsum("ni,idk->ndk", weights, onehots) - weights.sum(axis=1)[:, None, None] * stacked
    reg = np.asarray(epsilons, dtype=float)[:, None, None] * nat_grad_rows(costs, stacked)
    return stacked - eta * (ll + reg)


def project_rows(probs: np.ndarray, mask: np.ndarray, theta_min: float) -> tuple[np.ndarray, int]:
    """Clamp to ``theta_min`` and rescale the mass above the floor to sum to 1.

    Works on ``(..., D, Kmax)`` arrays; returns the projected array and the
    number of rows where the floor was active.
    """
    if not np.all(np.isfinite(probs)):
        raise ValueError("non-finite probabilities")
    cards = mask.sum(axis=-1)
    if np.any(cards * theta_min >= 1.0):
        raise ValueError(f"theta_min={theta_min} leaves no feasible mass")
    clamped = np.where(mask, np.maximum(probs, theta_min), 0.0)
    active = np.any(mask & (probs < theta_min), axis=-1)
    floor = cards * theta_min
    excess = np.where(mask, clamped - theta_min, 0.0)
    scale = (1.0 - floor) / excess.sum(axis=-1)
    out = np.where(mask, theta_min + excess * scale[..., None], 0.0)
    return out, int(active.sum())


def project(dist: Distribution, theta_min: float) -> Distribution:
    out, _ = project_rows(dist.probs, dist.space.mask, theta_min)
    return Distribution(dist.space, out)


def _check_batch(space: SearchSpace, samples, losses) -> tuple[np.ndarray, np.ndarray]:
    choices = as_choices(samples, space)
    losses = np.asarray(losses, dtype=float)
    if losses.shape != (choices.shape[0],):
        raise ValueError("one loss per sample is required")
    if choices.shape[0] < 1:
        raise ValueError("empty batch")
    return choices, losses


def raw_update_single(dist, samples, losses, cost, eps, eta, cfg=UtilityConfig()) -> np.ndarray:
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    if cost.space.cardinalities != dist.space.cardinalities:
        raise ShapeMismatchError("cost model does not match the distribution")
    choices, losses = _check_batch(dist.space, samples, losses)
    ratios = np.ones((1, len(losses)))
    utils = utility_values(weighted_quantiles(losses, ratios), cfg)
    stacked = dist.probs[None]
    return natural_step(stacked, one_hot(choices, dist.space), utils, ratios, cost.costs, np.array([eps]), eta)[0]


def update_single(
    dist: Distribution,
    samples,
    losses,
    cost: CostModel,
    eps: float,
    eta: float,
    cfg: UtilityConfig = UtilityConfig(),
    theta_min: float | None = None,
) -> Distribution:
    raw = raw_update_single(dist, samples, losses, cost, eps, eta, cfg)
    if theta_min is None:
        theta_min = default_theta_min(dist.space)
    out, _ = project_rows(raw, dist.space.mask, theta_min)
    return Distribution(dist.space, out)


def raw_update_is(ens: Ensemble, samples, losses, cost: CostModel, cfg=UtilityConfig()):
    """Unprojected importance-sampled step; returns ``(raw, ratios, utils)``."""
    if cost.space.cardinalities != ens.space.cardinalities:
        raise ShapeMismatchError("cost model does not match the ensemble")
    choices, losses = _check_batch(ens.space, samples, losses)
    stacked = ens.stacked()
    ratios = mixture_ratios(stacked, choices)
    utils = utility_values(weighted_quantiles(losses, ratios), cfg)
    raw = natural_step(stacked, one_hot(choices, ens.space), utils, ratios, cost.costs, np.array(ens.epsilons), ens.eta)
    return raw, ratios, utils


def update_is_report(ens: Ensemble, samples, losses, cost: CostModel, cfg=UtilityConfig()):
    before = ens.stacked()
    raw, ratios, utils = raw_update_is(ens, samples, losses, cost, cfg)
    out, hits = project_rows(raw, ens.space.mask, ens.theta_min)
    report = StepReport(
        complexity_before=(cost.costs * before).sum(axis=(1, 2)),
        complexity_after=(cost.costs * out).sum(axis=(1, 2)),
        max_change=float(np.abs(out - before).max()),
        projections=hits,
        ratios=ratios,
        utilities=utils,
    )
    return ens.replace(out), report


def update_is(ens: Ensemble, samples, losses, cost: CostModel, cfg: UtilityConfig = UtilityConfig()) -> Ensemble:
    return update_is_report(ens, samples, losses, cost, cfg)[0]


def sample_mixture_choices(ens: Ensemble, lam: int, rng: np.random.Generator) -> np.ndarray:
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    stacked = ens.stacked()
    if ens.size == 1:
        return sample_choices(stacked[0], ens.space, rng, lam)
    which = rng.integers(ens.size, size=lam)
    return sample_choices(stacked[which], ens.space, rng, lam)


def sample_mixture(ens: Ensemble, lam: int, rng: np.random.Generator) -> list[Architecture]:
    return [Architecture(tuple(c)) for c in sample_mixture_choices(ens, lam, rng)]
