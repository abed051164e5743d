"""Complexity cost model and the analytic expectation of the regularizer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Architecture, Distribution, SearchSpace, ShapeMismatchError, as_choices

RAW = "raw"
GLOBAL_MAX = "global-max"


@dataclass(frozen=True, eq=False)
class CostModel:
    """Per-category costs ``c[d, k]`` (zero-padded like the distribution)."""

    space: SearchSpace
    costs: np.ndarray = field(repr=False)
    mode: str = RAW

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        if c.shape != (self.space.dims, self.space.kmax):
            raise ShapeMismatchError(f"cost shape {c.shape} does not match space")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValueError("costs must be finite and nonnegative")
        if np.any(c[~self.space.mask] != 0.0):
            raise ValueError("padding costs must be zero")
        if self.mode not in (RAW, GLOBAL_MAX):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if self.mode == GLOBAL_MAX and c.max() != 1.0:
            raise ValueError("global-max normalized costs must have maximum 1")
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], space: SearchSpace | None = None, mode: str = RAW):
        if space is None:
            space = SearchSpace(tuple(len(r) for r in rows))
        return cls(space, space.pad(rows), mode)

    @property
    def rows(self) -> list[np.ndarray]:
        return self.space.unpad(self.costs)


def _check(cost: CostModel, space: SearchSpace):
    if cost.space.cardinalities != space.cardinalities:
        raise ShapeMismatchError(f"cost model {cost.space.cardinalities} vs space {space.cardinalities}")


def complexities(cost: CostModel, choices: np.ndarray) -> np.ndarray:
    """Vectorized ``R(M)`` for an ``(n, D)`` choice array."""
    return cost.costs[np.arange(cost.space.dims)[None, :], choices].sum(axis=1)


def complexity(cost: CostModel, arch: Architecture) -> float:
    return float(complexities(cost, as_choices(arch, cost.space))[0])


def expected_complexity(cost: CostModel, dist: Distribution) -> float:
    _check(cost, dist.space)
    return float((cost.costs * dist.probs).sum())


def nat_grad_rows(costs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """``(c_d - Q_d) * theta_d`` on padded arrays; broadcasts over leading axes."""
    q = (costs * probs).sum(axis=-1, keepdims=True)
    return (costs - q) * probs


def nat_grad_expected_complexity(cost: CostModel, dist: Distribution) -> list[np.ndarray]:
    _check(cost, dist.space)
    return dist.space.unpad(nat_grad_rows(cost.costs, dist.probs))


def normalize_costs(cost: CostModel) -> CostModel:
    top = cost.costs.max()
    if top <= 0:
        raise ValueError("cannot normalize an all-zero cost model")
    return CostModel(cost.space, cost.costs / top, GLOBAL_MAX)
