"""Solver state in negative-log coordinates.

Tables live as ``-log P`` arrays whose last axis is a probability block:
entries are kept in ``[MLOG_FLOOR, MLOG_CAP]`` and ``exp(-v)`` sums to one
per block.  The cap doubles as a probability floor of ``exp(-MLOG_CAP)``,
so zero-probability symbols are representable without infinities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .info_measures import CondPmf, NumericalError, Pmf

MLOG_FLOOR = 1e-12
MLOG_CAP = 30.0
PROB_FLOOR = math.exp(-MLOG_CAP)

# A block counts as normalized when |log sum(exp(-v))| stays below this.
_SHIFT_TOL = 5e-11
_BLOCK_SUM_TOL = 1e-10


def _block_log_sums(v: np.ndarray) -> np.ndarray:
    """log sum(exp(-v)) over the last axis, shift-stabilized."""
    m = v.min(axis=-1, keepdims=True)
    s = np.log(np.exp(m - v).sum(axis=-1, keepdims=True))
    return s - m


def project_neglog(values, *, max_rounds: int = 8) -> np.ndarray:
    """Map raw negative-log values onto valid blocks.

    Clips into ``[MLOG_FLOOR, MLOG_CAP]`` and shifts each block by
    ``log sum(exp(-v))`` until the block mass is one, which preserves the
    ordering of entries within a block.  Idempotent on valid input.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] < 1:
        raise ValueError("project_neglog expects at least one block entry")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("project_neglog: non-finite input")
    v = np.clip(arr, MLOG_FLOOR, MLOG_CAP)
    for _ in range(max_rounds):
        shift = _block_log_sums(v)
        if np.max(np.abs(shift)) <= _SHIFT_TOL:
            return v
        v = np.clip(v + shift, MLOG_FLOOR, MLOG_CAP)
    raise NumericalError("project_neglog did not stabilize")


def is_neglog_valid(values: np.ndarray, tol: float = _BLOCK_SUM_TOL) -> bool:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        return False
    if np.any(v < MLOG_FLOOR - 1e-15) or np.any(v > MLOG_CAP + 1e-15):
        return False
    return bool(np.max(np.abs(np.exp(-v).sum(axis=-1) - 1.0)) <= tol)


def neglog_to_prob(values: np.ndarray) -> np.ndarray:
    return np.exp(-np.asarray(values, dtype=np.float64))


def prob_to_neglog(probs) -> np.ndarray:
    """Negative-log of a probability block; zeros land on the cap."""
    p = np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(p)) or np.any(p < 0.0):
        raise NumericalError("prob_to_neglog: invalid probabilities")
    return project_neglog(-np.log(np.maximum(p, PROB_FLOOR)))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Encoder:
    """Conditional P(z | x_1..x_V) stored as one neglog block per observation.

    Rows of ``neglog`` are indexed by the row-major flattening of the
    observation tuple; each row is a block over the latent alphabet.
    """

    z_card: int
    x_cards: tuple[int, ...]
    neglog: np.ndarray

    def __post_init__(self):
        x_cards = tuple(int(c) for c in self.x_cards)
        object.__setattr__(self, "x_cards", x_cards)
        table = np.array(self.neglog, dtype=np.float64, copy=True)
        n_obs = int(np.prod(x_cards))
        if table.shape != (n_obs, self.z_card):
            raise ValueError(
                f"encoder table shape {table.shape}, expected {(n_obs, self.z_card)}"
            )
        if not is_neglog_valid(table):
            raise ValueError("encoder table is not a valid neglog block stack")
        table.setflags(write=False)
        object.__setattr__(self, "neglog", table)

    @property
    def n_obs(self) -> int:
        return self.neglog.shape[0]

    def obs_index(self, xs: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(x) for x in xs), self.x_cards))

    def probs(self) -> np.ndarray:
        p = np.exp(-self.neglog)
        return p / p.sum(axis=1, keepdims=True)

    def to_cond_pmf(self) -> CondPmf:
        return CondPmf(self.probs())

    def to_dict(self) -> dict:
        return {
            "z_card": self.z_card,
            "x_cards": list(self.x_cards),
            "neglog": [float(v) for v in self.neglog.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Encoder":
        z_card = int(data["z_card"])
        x_cards = tuple(int(c) for c in data["x_cards"])
        flat = np.asarray(data["neglog"], dtype=np.float64)
        n_obs = int(np.prod(x_cards))
        if flat.size != n_obs * z_card:
            raise ValueError("neglog length does not match z_card * prod(x_cards)")
        return cls(z_card=z_card, x_cards=x_cards, neglog=flat.reshape(n_obs, z_card))


def save_encoder(encoder: Encoder, path) -> None:
    with open(path, "w") as fh:
        json.dump(encoder.to_dict(), fh)
        fh.write("\n")


def load_encoder(path) -> Encoder:
    with open(path) as fh:
        return Encoder.from_dict(json.load(fh))


def encoder_from_random(z_card: int, x_cards: Sequence[int], seed) -> Encoder:
    """Random encoder: normalize uniform(0, 1) draws within each block."""
    x_cards = tuple(int(c) for c in x_cards)
    rng = _as_rng(seed)
    u = rng.random((int(np.prod(x_cards)), z_card))
    u /= u.sum(axis=1, keepdims=True)
    return Encoder(z_card=z_card, x_cards=x_cards, neglog=prob_to_neglog(u))


def encoder_to_prob(encoder: Encoder) -> CondPmf:
    return encoder.to_cond_pmf()


def prob_to_encoder(cond: CondPmf, x_cards: Sequence[int]) -> Encoder:
    x_cards = tuple(int(c) for c in x_cards)
    if cond.given_card != int(np.prod(x_cards)):
        raise ValueError("conditional rows do not match prod(x_cards)")
    return Encoder(
        z_card=cond.target_card,
        x_cards=x_cards,
        neglog=prob_to_neglog(cond.table),
    )


def decoder_to_neglog(decoder: CondPmf) -> np.ndarray:
    return prob_to_neglog(decoder.table)


@dataclass(frozen=True)
class DecoderSet:
    """Per-view decoders P(x_i | z) plus a latent prior (uniform by default)."""

    prior: Pmf
    decoders: tuple[CondPmf, ...]

    def __post_init__(self):
        decoders = tuple(self.decoders)
        if not decoders:
            raise ValueError("DecoderSet needs at least one view")
        for i, d in enumerate(decoders):
            if d.given_card != self.prior.card:
                raise ValueError(f"decoder {i} rows do not match the prior alphabet")
        object.__setattr__(self, "decoders", decoders)

    @property
    def z_card(self) -> int:
        return self.prior.card

    @property
    def n_views(self) -> int:
        return len(self.decoders)

    @property
    def x_cards(self) -> tuple[int, ...]:
        return tuple(d.target_card for d in self.decoders)

    def neglog_tables(self) -> list[np.ndarray]:
        return [decoder_to_neglog(d) for d in self.decoders]

    def to_dict(self) -> dict:
        return {
            "prior": [float(v) for v in self.prior.probs],
            "decoders": [
                [float(v) for v in d.table.reshape(-1)] for d in self.decoders
            ],
            "x_cards": list(self.x_cards),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecoderSet":
        prior = Pmf(data["prior"])
        x_cards = [int(c) for c in data["x_cards"]]
        decoders = tuple(
            CondPmf(np.asarray(flat, dtype=np.float64).reshape(prior.card, card))
            for flat, card in zip(data["decoders"], x_cards)
        )
        return cls(prior=prior, decoders=decoders)


def decoder_set_from_random(
    z_card: int, x_cards: Sequence[int], seed, *, uniform_prior: bool = True
) -> DecoderSet:
    """Random decoders by block-normalized uniform draws; prior stays uniform."""
    rng = _as_rng(seed)
    decoders = []
    for card in x_cards:
        u = rng.random((z_card, int(card)))
        u /= u.sum(axis=1, keepdims=True)
        decoders.append(CondPmf(u))
    if not uniform_prior:
        w = rng.random(z_card)
        prior = Pmf(w / w.sum())
    else:
        prior = Pmf.uniform(z_card)
    return DecoderSet(prior=prior, decoders=tuple(decoders))
