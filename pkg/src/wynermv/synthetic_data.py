"""Circulant-block synthetic datasets with two coupled views.

A hidden label Y picks a block of symbols in each view: a fraction of the
row mass sits on the label's own block and the rest leaks onto the
circularly previous block, which controls how noisy the coupling is.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .info_measures import CondPmf, JointPmf, Pmf


@dataclass(frozen=True)
class DatasetSpec:
    y_card: int = 8
    x_card: int = 16
    delta: float = 0.0
    block: int = 2
    n_train: int = 100_000
    n_test: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.y_card < 1 or self.block < 1:
            raise ValueError("y_card and block must be positive")
        if self.x_card != self.block * self.y_card:
            raise ValueError("x_card must equal block * y_card")
        if not 0.0 <= self.delta < 0.5:
            raise ValueError("delta must lie in [0, 0.5)")
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("sample counts must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def conditional_table(spec: DatasetSpec) -> CondPmf:
    """Per-view emission table P(x | y).

    Row y spreads mass 1 - 2*delta evenly over its own block of columns and
    2*delta evenly over the circularly previous block.  With the default
    block width 2 the per-column weights are (1/2 - delta) and delta.
    """
    table = np.zeros((spec.y_card, spec.x_card))
    own = (1.0 - 2.0 * spec.delta) / spec.block
    prev = 2.0 * spec.delta / spec.block
    for y in range(spec.y_card):
        table[y, spec.block * y : spec.block * (y + 1)] = own
        p = (y - 1) % spec.y_card
        table[y, spec.block * p : spec.block * (p + 1)] += prev
    return CondPmf(table)


def compose_dataset_joint(spec: DatasetSpec) -> JointPmf:
    """Two-view joint P(x1, x2) = sum_y P(y) P(x1|y) P(x2|y), uniform labels."""
    t = conditional_table(spec).table
    py = np.full(spec.y_card, 1.0 / spec.y_card)
    return JointPmf(np.einsum("y,ya,yb->ab", py, t, t))


@dataclass(frozen=True)
class SampleSet:
    """Label and per-view symbol arrays of equal length."""

    labels: np.ndarray
    views: tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        views = tuple(np.asarray(v, dtype=np.int64) for v in self.views)
        if any(v.shape != labels.shape for v in views) or labels.ndim != 1:
            raise ValueError("labels and views must be 1-D arrays of equal length")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "views", views)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)


def sample_rows(cdf_rows: np.ndarray, row_idx: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-transform sample: first k with u < cdf[row, k], vectorized."""
    return (cdf_rows[row_idx] <= u[:, None]).sum(axis=1)


def _row_cdf(table: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(table, axis=1)
    cdf[:, -1] = 1.0
    return cdf


def draw_samples(spec: DatasetSpec, role: str = "train") -> SampleSet:
    """Draw the train or test split by inverse transform sampling.

    The two roles use disjoint child streams of the spec seed, and labels
    and each view get their own substream, so resizing one split or view
    never perturbs the others.
    """
    if role not in ("train", "test"):
        raise ValueError(f"role must be 'train' or 'test', got {role!r}")
    n = spec.n_train if role == "train" else spec.n_test
    root = np.random.SeedSequence(spec.seed)
    train_ss, test_ss = root.spawn(2)
    streams = (train_ss if role == "train" else test_ss).spawn(3)
    rngs = [np.random.default_rng(s) for s in streams]

    u_y = rngs[0].random(n)
    labels = np.minimum((u_y * spec.y_card).astype(np.int64), spec.y_card - 1)
    cdf = _row_cdf(conditional_table(spec).table)
    views = tuple(
        sample_rows(cdf, labels, rngs[1 + v].random(n)) for v in range(2)
    )
    return SampleSet(labels=labels, views=views)


def empirical_joint(samples: SampleSet, cards: Sequence[int]) -> JointPmf:
    """Counting estimate of the view joint; no smoothing is applied."""
    if samples.n == 0:
        raise ValueError("cannot build an empirical joint from zero samples")
    cards = tuple(int(c) for c in cards)
    if len(cards) != samples.n_views:
        raise ValueError("cards must give one alphabet size per view")
    for v, card in zip(samples.views, cards):
        if v.min() < 0 or v.max() >= card:
            raise ValueError("sample symbol out of range")
    flat = np.ravel_multi_index(samples.views, cards)
    counts = np.bincount(flat, minlength=int(np.prod(cards)))
    return JointPmf(counts.reshape(cards) / samples.n)


def save_samples_csv(samples: SampleSet, path) -> None:
    header = ["y"] + [f"x{i + 1}" for i in range(samples.n_views)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(samples.labels, *samples.views):
            writer.writerow([int(v) for v in row])


def load_samples_csv(path) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "y":
            raise ValueError("sample CSV must start with a 'y' column")
        rows = [[int(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError("sample CSV has no data rows")
    arr = np.asarray(rows, dtype=np.int64)
    if arr.shape[1] != len(header):
        raise ValueError("sample CSV row width does not match header")
    return SampleSet(labels=arr[:, 0], views=tuple(arr[:, 1:].T))
