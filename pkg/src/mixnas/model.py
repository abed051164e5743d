"""Categorical search spaces and factorized categorical distributions.

Probabilities are stored as a zero-padded ``(D, Kmax)`` array so that the
update rules can be vectorized; padding entries are always exactly zero and
are never sampled.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when an object does not match the search space it is used with."""


class SingularFisherError(ValueError):
    """Raised when a Fisher block is requested at a degenerate distribution."""


@dataclass(frozen=True)
class SearchSpace:
    cardinalities: tuple[int, ...]
    names: tuple[str, ...] | None = None
    labels: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        cards = tuple(int(k) for k in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        if len(cards) < 1:
            raise ValueError("search space needs at least one dimension")
        if any(k < 2 for k in cards):
            raise ValueError(f"every dimension needs >= 2 categories, got {cards}")
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"d{i}" for i in range(len(cards))))
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(tuple(str(k) for k in range(K)) for K in cards))
        if len(self.names) != len(cards) or len(self.labels) != len(cards):
            raise ShapeMismatchError("names/labels do not match the number of dimensions")
        for K, lab in zip(cards, self.labels):
            if len(lab) != K:
                raise ShapeMismatchError(f"expected {K} labels, got {len(lab)}")

    @property
    def dims(self) -> int:
        return len(self.cardinalities)

    @property
    def kmax(self) -> int:
        return max(self.cardinalities)

    @property
    def total_categories(self) -> int:
        return sum(self.cardinalities)

    @property
    def size(self) -> int:
        """Number of distinct architectures."""
        return int(np.prod(self.cardinalities, dtype=object))

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(D, Kmax)`` array, True on real categories."""
        return np.arange(self.kmax)[None, :] < np.asarray(self.cardinalities)[:, None]

    def pad(self, rows: Sequence[Sequence[float]], fill: float = 0.0) -> np.ndarray:
        if len(rows) != self.dims:
            raise ShapeMismatchError(f"expected {self.dims} rows, got {len(rows)}")
        out = np.full((self.dims, self.kmax), fill, dtype=float)
        for d, (row, K) in enumerate(zip(rows, self.cardinalities)):
            row = np.asarray(row, dtype=float)
            if row.shape != (K,):
                raise ShapeMismatchError(f"row {d} has shape {row.shape}, expected ({K},)")
            out[d, :K] = row
        return out

    def unpad(self, arr: np.ndarray) -> list[np.ndarray]:
        return [np.array(arr[d, :K]) for d, K in enumerate(self.cardinalities)]

    def enumerate(self) -> np.ndarray:
        """All architectures as an ``(size, D)`` int array in lexicographic order."""
        grids = np.meshgrid(*[np.arange(K) for K in self.cardinalities], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def architectures(self) -> Iterable["Architecture"]:
        for choices in itertools.product(*[range(K) for K in self.cardinalities]):
            yield Architecture(choices)


@dataclass(frozen=True)
class Architecture:
    choices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(int(h) for h in self.choices))

    def validate(self, space: SearchSpace) -> "Architecture":
        if len(self.choices) != space.dims:
            raise ShapeMismatchError(f"architecture has {len(self.choices)} dims, space has {space.dims}")
        for h, K in zip(self.choices, space.cardinalities):
            if not 0 <= h < K:
                raise ShapeMismatchError(f"category {h} out of range for K={K}")
        return self

    def one_hot(self, space: SearchSpace) -> np.ndarray:
        self.validate(space)
        m = np.zeros((space.dims, space.kmax))
        m[np.arange(space.dims), self.choices] = 1.0
        return m

    @classmethod
    def from_one_hot(cls, m: np.ndarray) -> "Architecture":
        return cls(tuple(int(k) for k in np.argmax(m, axis=1)))

    def labels(self, space: SearchSpace) -> list[str]:
        return [space.labels[d][h] for d, h in enumerate(self.choices)]


@dataclass(frozen=True, eq=False)
class Distribution:
    """Product of independent categorical distributions, one per dimension."""

    space: SearchSpace
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.space.dims, self.space.kmax):
            raise ShapeMismatchError(f"probs shape {p.shape} does not match space")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        mask = self.space.mask
        if np.any(p[~mask] != 0.0):
            raise ValueError("padding entries must be zero")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every row must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, space: SearchSpace) -> "Distribution":
        return cls(space, space.mask / np.asarray(space.cardinalities, dtype=float)[:, None])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], space: SearchSpace | None = None) -> "Distribution":
        if space is None:
            space = SearchSpace(tuple(len(r) for r in rows))
        return cls(space, space.pad(rows))

    @property
    def rows(self) -> list[np.ndarray]:
        return self.space.unpad(self.probs)

    def entropy(self) -> np.ndarray:
        """Per-dimension entropy in nats."""
        p = self.probs
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, -p * np.log(p), 0.0)
        return terms.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.probs, other.probs)


def as_choices(samples, space: SearchSpace) -> np.ndarray:
    """Stack architectures (or an int array) into a validated ``(n, D)`` array."""
    if isinstance(samples, Architecture):
        samples = [samples]
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.int64)
    else:
        arr = np.array([a.choices if isinstance(a, Architecture) else tuple(a) for a in samples], dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != space.dims:
        raise ShapeMismatchError(f"samples of shape {arr.shape} do not match D={space.dims}")
    if np.any(arr < 0) or np.any(arr >= np.asarray(space.cardinalities)[None, :]):
        raise ShapeMismatchError("category index out of range")
    return arr


def one_hot(choices: np.ndarray, space: SearchSpace) -> np.ndarray:
    """``(n, D)`` choices to ``(n, D, Kmax)`` one-hot encodings."""
    n = choices.shape[0]
    m = np.zeros((n, space.dims, space.kmax))
    m[np.arange(n)[:, None], np.arange(space.dims)[None, :], choices] = 1.0
    return m


def sample_choices(probs: np.ndarray, space: SearchSpace, rng: np.random.Generator, n: int) -> np.ndarray:
    """Inverse-CDF sampling of ``n`` architectures from padded probabilities.

    ``probs`` is either ``(D, Kmax)`` (one distribution) or ``(n, D, Kmax)``
    (one distribution per sample, used for mixtures).
    """
    cards = np.asarray(space.cardinalities)
    tail = np.arange(space.kmax)[None, :] >= (cards - 1)[:, None]
    # pin the cdf to exactly 1 from the last real category on, so round-off
    # can never select a padding slot
    cdf = np.where(tail, 1.0, np.cumsum(probs, axis=-1))
    u = rng.random((n, space.dims))
    h = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(h, cards - 1)


def sample(dist: Distribution, rng: np.random.Generator) -> Architecture:
    return Architecture(tuple(sample_choices(dist.probs, dist.space, rng, 1)[0]))


def sample_many(dist: Distribution, rng: np.random.Generator, n: int) -> np.ndarray:
    return sample_choices(dist.probs, dist.space, rng, n)


def log_probs(probs: np.ndarray, choices: np.ndarray) -> np.ndarray:
    """Log-likelihood of each row of ``choices``; ``-inf`` on zero-probability picks."""
    picked = probs[..., np.arange(choices.shape[1]), choices]
    with np.errstate(divide="ignore"):
        return np.log(picked).sum(axis=-1)


def log_prob(dist: Distribution, arch: Architecture) -> float:
    choices = as_choices(arch, dist.space)
    return float(log_probs(dist.probs, choices)[0])


def nat_grad_log_likelihood(dist: Distribution, arch: Architecture) -> list[np.ndarray]:
    """Natural gradient of ``ln P(arch)``: one-hot row minus probabilities."""
    m = arch.one_hot(dist.space)
    return dist.space.unpad(m - dist.probs)


def fim_inverse_block(dist: Distribution, d: int) -> np.ndarray:
    """Inverse Fisher block for dimension ``d`` in the first ``K_d - 1`` coordinates."""
    row = dist.rows[d]
    if np.any(row <= 0.0) or np.any(row >= 1.0):
        raise SingularFisherError(f"dimension {d} is degenerate: {row}")
    bar = row[:-1]
    return np.diag(bar) - np.outer(bar, bar)


def fim_block(dist: Distribution, d: int) -> np.ndarray:
    """Fisher block of dimension ``d``: ``diag(1/theta_bar) + 1/theta_K``."""
    row = dist.rows[d]
    if np.any(row <= 0.0):
        raise SingularFisherError(f"dimension {d} is degenerate: {row}")
    return np.diag(1.0 / row[:-1]) + 1.0 / row[-1]


def most_probable(dist: Distribution) -> Architecture:
    # np.argmax returns the first maximum, padding zeros never win
    return Architecture(tuple(np.argmax(dist.probs, axis=1)))
