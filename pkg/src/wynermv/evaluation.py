"""Information-plane coordinates and latent-clustering evaluation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .info_measures import (
    CondPmf,
    JointPmf,
    NumericalError,
    conditional_mutual_information,
    encoder_joint,
    mutual_information,
)
from .model_state import Encoder
from .synthetic_data import SampleSet, sample_rows

# Exhaustive permutation matching is factorial; beyond this use assignment.
_EXHAUSTIVE_LIMIT = 10
_IDENTITY_TOL_BITS = 1e-9


@dataclass(frozen=True)
class PlanePoint:
    """One solver run's coordinates on the relevance-complexity plane (bits)."""

    sum_view_mi_bits: float
    joint_mi_bits: float
    residual_cmi_bits: float
    solver: str = ""
    parameter: float = math.nan
    trial: int = 0
    z_card: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def plane_point(
    encoder,
    joint_x: JointPmf,
    *,
    solver: str = "",
    parameter: float = math.nan,
    trial: int = 0,
    converged: bool = True,
) -> PlanePoint:
    """Coordinates of an encoder against a two-view joint.

    Computes I(Z; X1, X2), I(Z; X1) + I(Z; X2) and I(X1; X2 | Z) from the
    encoder-extended joint and enforces the exchange identity

        I(X1;X2|Z) = I(Z;X1,X2) - [I(Z;X1) + I(Z;X2)] + I(X1;X2)

    to one nano-bit as an internal consistency guard.
    """
    if joint_x.n_axes != 2:
        raise ValueError("plane_point expects a two-view joint")
    cond = encoder.to_cond_pmf() if isinstance(encoder, Encoder) else encoder
    full = encoder_joint(joint_x, cond)
    joint_mi = mutual_information(full, (0,), (1, 2), base="bits")
    sum_mi = mutual_information(full, (0,), (1,), base="bits") + mutual_information(
        full, (0,), (2,), base="bits"
    )
    residual = conditional_mutual_information(full, (1,), (2,), (0,), base="bits")
    marginal_mi = mutual_information(joint_x, (0,), (1,), base="bits")
    gap = abs(residual - (joint_mi - sum_mi + marginal_mi))
    if gap > _IDENTITY_TOL_BITS:
        raise NumericalError(f"plane identity off by {gap:.3e} bits")
    return PlanePoint(
        sum_view_mi_bits=sum_mi,
        joint_mi_bits=joint_mi,
        residual_cmi_bits=residual,
        solver=solver,
        parameter=parameter,
        trial=trial,
        z_card=cond.target_card,
        converged=converged,
    )


def wyner_line(sum_view_mi: float, marginal_mi: float) -> float:
    """Relevance on the zero-residual line: I(Z;X1,X2) = sum_i I(Z;Xi) - I(X1;X2)."""
    return sum_view_mi - marginal_mi


def cluster_predict(
    encoder,
    samples,
    seed=0,
    mode: str = "sample",
    x_cards: Sequence[int] | None = None,
) -> np.ndarray:
    """Latent hypotheses for each observation pair.

    ``mode="sample"`` draws z from the encoder row by inverse transform with
    one uniform per observation; ``mode="argmax"`` takes the row mode.  A
    deterministic encoder gives seed-independent hypotheses either way.
    """
    if isinstance(encoder, Encoder):
        rows = encoder.probs()
        cards = encoder.x_cards
    elif isinstance(encoder, CondPmf):
        rows = encoder.table
        if x_cards is None:
            raise ValueError("x_cards is required with a bare conditional table")
        cards = tuple(int(c) for c in x_cards)
    else:
        raise TypeError("encoder must be an Encoder or CondPmf")

    views = samples.views if isinstance(samples, SampleSet) else tuple(samples)
    if len(views) != len(cards):
        raise ValueError("observation views do not match encoder alphabets")
    obs = np.ravel_multi_index(tuple(np.asarray(v) for v in views), cards)

    if mode == "argmax":
        return rows.argmax(axis=1)[obs]
    if mode != "sample":
        raise ValueError(f"mode must be 'sample' or 'argmax', got {mode!r}")
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    u = np.random.default_rng(seed).random(obs.shape[0])
    return sample_rows(cdf, obs, u)


@dataclass(frozen=True)
class ClusterReport:
    accuracy: float
    mode: str
    mapping: tuple[int, ...]
    n_samples: int
    counts: tuple[tuple[int, ...], ...]
    residual_cmi_bits: float | None = None

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mode": self.mode,
            "mapping": list(self.mapping),
            "n_samples": self.n_samples,
            "counts": [list(r) for r in self.counts],
            "residual_cmi_bits": self.residual_cmi_bits,
        }


def _confusion(hypotheses, labels, z_card, y_card) -> np.ndarray:
    h = np.asarray(hypotheses, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if h.shape != y.shape or h.ndim != 1 or h.size == 0:
        raise ValueError("hypotheses and labels must be matching non-empty 1-D arrays")
    if h.min() < 0 or h.max() >= z_card or y.min() < 0 or y.max() >= y_card:
        raise ValueError("hypothesis or label value out of range")
    return np.bincount(h * y_card + y, minlength=z_card * y_card).reshape(
        z_card, y_card
    )


def best_label_accuracy(
    hypotheses,
    labels,
    z_card: int,
    y_card: int,
    mode: str = "exhaustive",
    residual_cmi_bits: float | None = None,
) -> ClusterReport:
    """Accuracy under the best latent-to-label relabeling.

    ``exhaustive`` scans all permutations (square alphabets up to
    10 symbols); ``assignment`` solves a max-weight matching on the
    confusion counts and also covers rectangular alphabets.
    """
    counts = _confusion(hypotheses, labels, z_card, y_card)
    n = int(counts.sum())

    if mode == "exhaustive":
        if z_card != y_card:
            raise ValueError("exhaustive matching needs z_card == y_card")
        if z_card > _EXHAUSTIVE_LIMIT:
            raise ValueError(
                f"exhaustive matching is limited to {_EXHAUSTIVE_LIMIT} symbols; "
                "use mode='assignment'"
            )
        best_hits = -1
        best_perm: tuple[int, ...] = tuple(range(y_card))
        rows = np.arange(z_card)
        chunk: list[tuple[int, ...]] = []
        for perm in itertools.permutations(range(y_card)):
            chunk.append(perm)
            if len(chunk) == 100_000:
                best_hits, best_perm = _best_in_chunk(counts, rows, chunk, best_hits, best_perm)
                chunk = []
        if chunk:
            best_hits, best_perm = _best_in_chunk(counts, rows, chunk, best_hits, best_perm)
        accuracy = best_hits / n
        mapping = best_perm
    elif mode == "assignment":
        rows_idx, cols_idx = linear_sum_assignment(counts, maximize=True)
        mapping_arr = np.full(z_card, -1, dtype=np.int64)
        mapping_arr[rows_idx] = cols_idx
        accuracy = float(counts[rows_idx, cols_idx].sum()) / n
        mapping = tuple(int(v) for v in mapping_arr)
    else:
        raise ValueError(f"mode must be 'exhaustive' or 'assignment', got {mode!r}")

    return ClusterReport(
        accuracy=float(accuracy),
        mode=mode,
        mapping=tuple(int(v) for v in mapping),
        n_samples=n,
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        residual_cmi_bits=residual_cmi_bits,
    )


def _best_in_chunk(counts, rows, chunk, best_hits, best_perm):
    perms = np.asarray(chunk, dtype=np.int64)
    hits = counts[rows[None, :], perms].sum(axis=1)
    i = int(hits.argmax())
    if hits[i] > best_hits:
        return int(hits[i]), tuple(int(v) for v in perms[i])
    return best_hits, best_perm
