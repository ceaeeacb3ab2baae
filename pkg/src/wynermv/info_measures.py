"""Discrete probability containers and exact information measures.

All computation is carried out in natural log; ``base="bits"`` converts on
output only.  Zero-mass cells follow the 0*log(0) = 0 convention throughout.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np

# Tolerance for the simplex invariant of validated containers.
SIMPLEX_TOL = 1e-12
# Looser tolerance applied when raw arrays are passed straight to an op.
RAW_INPUT_TOL = 1e-9

_LN2 = math.log(2.0)


class DistributionError(ValueError):
    """Input violates a probability invariant (negative entry, bad sum)."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or inconsistent value."""


def _check_mass(arr: np.ndarray, tol: float, what: str, axis=None) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what}: non-finite entries")
    if np.any(arr < 0.0):
        raise DistributionError(f"{what}: negative entries")
    sums = arr.sum(axis=axis)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DistributionError(f"{what}: mass sums off by {worst:.3e} (tol {tol:.1e})")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


class Pmf:
    """Probability vector over a single finite alphabet."""

    def __init__(self, probs, *, tol: float = SIMPLEX_TOL):
        arr = np.array(probs, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("Pmf expects a non-empty 1-D array")
        _check_mass(arr, tol, "Pmf")
        self.probs = _frozen(arr)

    @property
    def card(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, card: int) -> "Pmf":
        return cls(np.full(card, 1.0 / card))


class CondPmf:
    """Row-stochastic table: ``table[g, t]`` is P(t | g)."""

    def __init__(self, table, *, tol: float = SIMPLEX_TOL):
        arr = np.array(table, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("CondPmf expects a non-empty 2-D array")
        _check_mass(arr, tol, "CondPmf rows", axis=1)
        self.table = _frozen(arr)

    @property
    def given_card(self) -> int:
        return self.table.shape[0]

    @property
    def target_card(self) -> int:
        return self.table.shape[1]

    def row(self, g: int) -> np.ndarray:
        return self.table[g]


class JointPmf:
    """Joint distribution over a finite product alphabet, one axis per variable."""

    def __init__(self, mass, *, tol: float = SIMPLEX_TOL):
        arr = np.array(mass, dtype=np.float64, copy=True)
        if arr.ndim < 1 or arr.size == 0:
            raise ValueError("JointPmf expects a non-empty array")
        _check_mass(arr, tol, "JointPmf")
        self.mass = _frozen(arr)

    @property
    def cards(self) -> tuple[int, ...]:
        return self.mass.shape

    @property
    def n_axes(self) -> int:
        return self.mass.ndim

    def marginal(self, axes: Sequence[int]) -> "JointPmf":
        """Marginal over ``axes``, kept in the order given."""
        axes = _check_axes(self.n_axes, axes, "axes")
        drop = tuple(a for a in range(self.n_axes) if a not in axes)
        arr = self.mass.sum(axis=drop) if drop else self.mass
        kept = [a for a in range(self.n_axes) if a in axes]
        order = [kept.index(a) for a in axes]
        return JointPmf(np.transpose(arr, order), tol=1e-9)

    def to_dict(self) -> dict:
        return {
            "cards": list(self.cards),
            "mass": [float(v) for v in self.mass.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JointPmf":
        cards = tuple(int(c) for c in data["cards"])
        flat = np.asarray(data["mass"], dtype=np.float64)
        if flat.size != int(np.prod(cards)):
            raise ValueError("mass length does not match cards")
        return cls(flat.reshape(cards))


def save_joint(joint: JointPmf, path) -> None:
    with open(path, "w") as fh:
        json.dump(joint.to_dict(), fh)
        fh.write("\n")


def load_joint(path) -> JointPmf:
    with open(path) as fh:
        return JointPmf.from_dict(json.load(fh))


def _coerce_mass(p, tol: float = RAW_INPUT_TOL) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.probs
    if isinstance(p, JointPmf):
        return p.mass
    arr = np.asarray(p, dtype=np.float64)
    _check_mass(arr, tol, "distribution")
    return arr


def _check_axes(ndim: int, axes: Sequence[int], name: str) -> tuple[int, ...]:
    axes = tuple(int(a) for a in axes)
    for a in axes:
        if not 0 <= a < ndim:
            raise ValueError(f"{name}: axis {a} out of range for {ndim} axes")
    if len(set(axes)) != len(axes):
        raise ValueError(f"{name}: repeated axis")
    return axes


def _check_disjoint(*groups: tuple[int, ...]) -> None:
    seen: set[int] = set()
    for g in groups:
        for a in g:
            if a in seen:
                raise ValueError(f"axis {a} appears in more than one axis set")
            seen.add(a)


def _from_nats(value: float, base: str) -> float:
    if base == "nats":
        return value
    if base == "bits":
        return value / _LN2
    raise ValueError(f"unknown base {base!r}, expected 'nats' or 'bits'")


def _neg_xlogx_sum(arr: np.ndarray) -> float:
    """-sum(p * log p) with the 0*log(0) = 0 convention, in nats."""
    pos = arr[arr > 0.0]
    return float(-np.dot(pos, np.log(pos)))


def entropy(p, base: str = "nats") -> float:
    """Shannon entropy of a distribution (any shape; summed over all cells)."""
    return _from_nats(_neg_xlogx_sum(_coerce_mass(p)), base)


def conditional_entropy(
    joint: JointPmf,
    target_axes: Sequence[int],
    given_axes: Sequence[int],
    base: str = "nats",
) -> float:
    """H(target | given) via the chain rule H(T,G) - H(G)."""
    t = _check_axes(joint.n_axes, target_axes, "target_axes")
    g = _check_axes(joint.n_axes, given_axes, "given_axes")
    if not t:
        raise ValueError("target_axes must be non-empty")
    _check_disjoint(t, g)
    h_tg = entropy(joint.marginal(t + g))
    h_g = entropy(joint.marginal(g)) if g else 0.0
    return _from_nats(h_tg - h_g, base)


def _clamp_info(value: float, what: str) -> float:
    if value < 0.0:
        if value < -SIMPLEX_TOL:
            raise NumericalError(f"{what} came out {value:.3e} < -{SIMPLEX_TOL:.0e}")
        return 0.0
    return value


def mutual_information(
    joint: JointPmf,
    axes_a: Sequence[int],
    axes_b: Sequence[int],
    base: str = "nats",
) -> float:
    """I(A; B) = H(A) + H(B) - H(A, B), clamped at zero near -1e-12."""
    a = _check_axes(joint.n_axes, axes_a, "axes_a")
    b = _check_axes(joint.n_axes, axes_b, "axes_b")
    if not a or not b:
        raise ValueError("axis sets must be non-empty")
    _check_disjoint(a, b)
    value = (
        entropy(joint.marginal(a))
        + entropy(joint.marginal(b))
        - entropy(joint.marginal(a + b))
    )
    return _from_nats(_clamp_info(value, "mutual information"), base)


def conditional_mutual_information(
    joint: JointPmf,
    axes_a: Sequence[int],
    axes_b: Sequence[int],
    axes_cond: Sequence[int],
    base: str = "nats",
) -> float:
    """I(A; B | C) computed directly from the (A, B, C) table.

    Sums P(a,b,c) * log[ P(a,b,c) P(c) / (P(a,c) P(b,c)) ] over the support,
    which keeps this route independent of the entropy-difference expansion.
    """
    a = _check_axes(joint.n_axes, axes_a, "axes_a")
    b = _check_axes(joint.n_axes, axes_b, "axes_b")
    c = _check_axes(joint.n_axes, axes_cond, "axes_cond")
    if not a or not b:
        raise ValueError("axis sets must be non-empty")
    _check_disjoint(a, b, c)
    if not c:
        return mutual_information(joint, a, b, base)

    na, nb = len(a), len(b)
    pabc = joint.marginal(a + b + c).mass
    pac = pabc.sum(axis=tuple(range(na, na + nb)))
    pbc = pabc.sum(axis=tuple(range(na)))
    pc = pbc.sum(axis=tuple(range(nb)))

    # Broadcast the marginals back onto the (A, B, C) table.
    sh_a = pabc.shape[:na]
    sh_b = pabc.shape[na : na + nb]
    sh_c = pabc.shape[na + nb :]
    pac_b = pac.reshape(sh_a + (1,) * nb + sh_c)
    pbc_b = pbc.reshape((1,) * na + sh_b + sh_c)
    pc_b = pc.reshape((1,) * (na + nb) + sh_c)

    mask = pabc > 0.0
    num = pabc[mask] * np.broadcast_to(pc_b, pabc.shape)[mask]
    den = (
        np.broadcast_to(pac_b, pabc.shape)[mask]
        * np.broadcast_to(pbc_b, pabc.shape)[mask]
    )
    value = float(np.dot(pabc[mask], np.log(num / den)))
    if not math.isfinite(value):
        raise NumericalError("conditional mutual information is non-finite")
    return _from_nats(_clamp_info(value, "conditional mutual information"), base)


def kl_divergence(p, q) -> float:
    """D(p || q) in nats; +inf when p puts mass where q has none."""
    pa = _coerce_mass(p)
    qa = _coerce_mass(q)
    if pa.shape != qa.shape:
        raise ValueError("kl_divergence: shape mismatch")
    mask = pa > 0.0
    if np.any(qa[mask] <= 0.0):
        return math.inf
    return float(np.dot(pa[mask], np.log(pa[mask] / qa[mask])))


def latent_joint(prior_z: Pmf, decoders: Sequence[CondPmf]) -> JointPmf:
    """Full joint P(z, x_1, ..., x_V) = prior(z) * prod_i decoder_i(x_i | z).

    The latent variable is axis 0 of the result.
    """
    if not decoders:
        raise ValueError("need at least one decoder")
    for i, d in enumerate(decoders):
        if d.given_card != prior_z.card:
            raise ValueError(f"decoder {i} is conditioned on {d.given_card} states, "
                             f"prior has {prior_z.card}")
    letters = "abcdefghijklmnop"
    if len(decoders) > len(letters):
        raise ValueError("too many views")
    subs = ",".join(f"z{letters[i]}" for i in range(len(decoders)))
    out = "z" + letters[: len(decoders)]
    full = np.einsum(f"z,{subs}->{out}", prior_z.probs, *[d.table for d in decoders])
    return JointPmf(full, tol=1e-9)


def compose_joint(prior_z: Pmf, decoders: Sequence[CondPmf]) -> JointPmf:
    """Observation model P(x_1, ..., x_V) = sum_z prior(z) prod_i decoder_i(x_i|z)."""
    full = latent_joint(prior_z, decoders)
    return JointPmf(full.mass.sum(axis=0), tol=1e-9)


def encoder_joint(joint_x: JointPmf, encoder: CondPmf) -> JointPmf:
    """Joint P(z, x_1, ..., x_V) = P(x_1..x_V) * encoder(z | x_1..x_V).

    Encoder rows are indexed by the row-major flattening of the observation
    tuple.  The latent variable is axis 0 of the result; summing it out
    recovers ``joint_x`` exactly.
    """
    n_obs = int(np.prod(joint_x.cards))
    if encoder.given_card != n_obs:
        raise ValueError(
            f"encoder has {encoder.given_card} rows, joint has {n_obs} cells"
        )
    table = encoder.table.reshape(joint_x.cards + (encoder.target_card,))
    full = joint_x.mass[..., None] * table
    return JointPmf(np.moveaxis(full, -1, 0), tol=1e-9)
