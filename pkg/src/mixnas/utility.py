"""Quantile-based utilities and importance weights for mixture sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import Distribution, as_choices, log_probs

RATIO_CEILING = 1e6


@dataclass(frozen=True)
class UtilityConfig:
    lower: float = 0.25
    upper: float = 0.75
    low: float = -2.0
    mid: float = 0.0
    high: float = 2.0

    def __post_init__(self):
        if not 0 < self.lower < self.upper <= 1:
            raise ValueError(f"need 0 < lower < upper <= 1, got {self.lower}, {self.upper}")
        if not self.low <= self.mid <= self.high:
            raise ValueError("need low <= mid <= high")


@dataclass(frozen=True)
class WeightedBatch:
    losses: np.ndarray
    ratios: np.ndarray | None = None

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=float)
        ratios = np.ones_like(losses) if self.ratios is None else np.asarray(self.ratios, dtype=float)
        if losses.ndim != 1 or losses.shape != ratios.shape:
            raise ValueError("losses and ratios must be 1-d and of equal length")
        if np.any(~np.isfinite(ratios)) or np.any(ratios < 0):
            raise ValueError("ratios must be finite and nonnegative")
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "ratios", ratios)


def weighted_quantiles(losses: np.ndarray, ratios: np.ndarray) -> np.ndarray:
    """``q[..., i] = sum_k r[..., k] * 1{l_k <= l_i} / lam``; ratios may carry a leading axis."""
    losses = np.asarray(losses, dtype=float)
    lam = losses.shape[-1]
    if lam == 0:
        raise ValueError("empty batch")
    below = losses[None, :] <= losses[:, None]  # below[i, k] = l_k <= l_i
    return (np.asarray(ratios, dtype=float) @ below.T) / lam


def quantile_levels(batch: WeightedBatch) -> np.ndarray:
    return weighted_quantiles(batch.losses, batch.ratios)


def utility_values(q: np.ndarray, cfg: UtilityConfig) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.where(q <= cfg.lower, cfg.low, np.where(q <= cfg.upper, cfg.mid, cfg.high))


def utility_from_quantile(q: float, cfg: UtilityConfig = UtilityConfig()) -> float:
    return float(utility_values(q, cfg))


def utilities(batch: WeightedBatch, cfg: UtilityConfig = UtilityConfig()) -> np.ndarray:
    return utility_values(quantile_levels(batch), cfg)


def mixture_ratios(stacked: np.ndarray, choices: np.ndarray) -> np.ndarray:
    """Likelihood ratios of every component against the uniform mixture.

    ``stacked`` is ``(N, D, Kmax)``; returns ``(N, lam)`` with
    ``r[n, i] = P_n(M_i) / mean_j P_j(M_i)``.
    """
    logp = log_probs(stacked, choices)  # (N, lam)
    top = logp.max(axis=0)
    if np.any(~np.isfinite(top)):
        raise ValueError("a sample has zero probability under the mixture")
    p = np.exp(logp - top)
    r = p / (p.sum(axis=0) / p.shape[0])
    return np.minimum(r, RATIO_CEILING)


def likelihood_ratios(dists: Sequence[Distribution], samples, n: int) -> np.ndarray:
    space = dists[0].space
    if any(d.space.cardinalities != space.cardinalities for d in dists):
        raise ValueError("all components must share one search space")
    choices = as_choices(samples, space)
    stacked = np.stack([d.probs for d in dists])
    return mixture_ratios(stacked, choices)[n]
