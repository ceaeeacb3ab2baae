"""Factorized-decoder solver: latent prior plus per-view decoders.

The model explains the observed joint as a mixture of products,
P_theta(x^V) = sum_z prior(z) prod_i P(x_i|z), so parameters grow linearly
in the number of views.  The working objective, in nats,

    L(theta) = -sum_i H_theta(X_i|Z) - E_theta[log P(X^V)] + beta D(P || P_theta)

is minimized block-by-block over the per-view decoder tables in
negative-log coordinates.  The first two terms upper-bound I_theta(X^V; Z)
with equality exactly when P_theta reproduces P, so driving the fit
penalty down makes the bound tight.

Zero-mass cells of P need care: the expectation term skips them only while
the model leaves at most ``MLOG_FLOOR`` mass there, and the objective
counts as infinite otherwise.  Block updates descend the skipped-cell
surrogate and never trade a finite objective for an infinite one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import evaluation
from .info_measures import (
    CondPmf,
    JointPmf,
    latent_joint,
    mutual_information,
)
from .model_state import (
    MLOG_FLOOR,
    DecoderSet,
    Encoder,
    decoder_set_from_random,
    prob_to_encoder,
    project_neglog,
)
from .records import RunRecord

_TINY = 1e-300
_STEP_GROWTH_TOL = 1e-12
_LETTERS = "abcdefgh"


@dataclass(frozen=True)
class VariationalConfig:
    beta: float
    z_card: int
    step_size: float = 1e-2
    inner_tol: float = 1e-8
    inner_max_iters: int = 500
    outer_tol: float = 2e-6
    outer_max_iters: int = 100_000
    xi_filter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.z_card < 1:
            raise ValueError("z_card must be positive")
        if self.step_size <= 0.0 or self.inner_tol <= 0.0 or self.outer_tol <= 0.0:
            raise ValueError("step size and tolerances must be positive")
        if self.inner_max_iters < 1 or self.outer_max_iters < 1:
            raise ValueError("iteration limits must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_count(
    n_views: int, z_card: int, x_card: int, include_prior: bool = False
) -> int:
    """Decoder table entries: V * |Z| * |X|, plus |Z| when the prior counts."""
    if n_views < 1 or z_card < 1 or x_card < 1:
        raise ValueError("counts must be positive")
    return n_views * z_card * x_card + (z_card if include_prior else 0)


class _ModelContext:
    """Cached tensors and einsum routes for one target joint."""

    def __init__(self, joint_x: JointPmf, z_card: int, prior: np.ndarray | None = None):
        self.p = joint_x.mass
        self.v = joint_x.n_axes
        if self.v > len(_LETTERS):
            raise ValueError("too many views")
        self.x_cards = joint_x.cards
        self.z_card = z_card
        self.mask = self.p > 0.0
        self.log_p = np.where(self.mask, np.log(np.maximum(self.p, _TINY)), 0.0)
        self.const_plogp = float(np.vdot(self.p, self.log_p))
        self.full_support = bool(self.mask.all())
        self.prior = (
            np.full(z_card, 1.0 / z_card) if prior is None else np.asarray(prior)
        )
        ls = _LETTERS[: self.v]
        tabs = ",".join(f"z{l}" for l in ls)
        self.ptheta_subs = f"z,{tabs}->{ls}"
        self.full_subs = f"z,{tabs}->z{ls}"
        self.view_subs = []
        for i in range(self.v):
            rest = ",".join(f"z{l}" for j, l in enumerate(ls) if j != i)
            lead = f"{rest}," if rest else ""
            self.view_subs.append(f"{lead}{ls}->z{ls[i]}")

    def ptheta(self, probs: list[np.ndarray]) -> np.ndarray:
        return np.einsum(self.ptheta_subs, self.prior, *probs)

    def objective_parts(self, qs: Sequence[np.ndarray], beta: float):
        """(masked objective value, support flag)."""
        probs = [np.exp(-q) for q in qs]
        pt = self.ptheta(probs)
        t_h = 0.0
        for q, pr in zip(qs, probs):
            t_h -= float(np.vdot(self.prior[:, None] * q, pr))
        t_e = -float(np.vdot(pt, self.log_p))
        fit = self.const_plogp - float(
            np.sum(self.p[self.mask] * np.log(np.maximum(pt[self.mask], _TINY)))
        )
        ok = self.full_support or float(pt[~self.mask].max(initial=0.0)) <= MLOG_FLOOR
        return t_h + t_e + beta * fit, ok

    def objective(self, qs: Sequence[np.ndarray], beta: float) -> float:
        masked, ok = self.objective_parts(qs, beta)
        return masked if ok else math.inf

    def gradient(self, qs: Sequence[np.ndarray], beta: float, view: int) -> np.ndarray:
        probs = [np.exp(-q) for q in qs]
        pt = self.ptheta(probs)
        r = np.zeros_like(self.p)
        np.divide(self.p, pt, out=r, where=self.mask)
        kernel = self.log_p + beta * r
        rest = [probs[j] for j in range(self.v) if j != view]
        s = np.einsum(self.view_subs[view], *rest, kernel)
        return self.prior[:, None] * probs[view] * ((qs[view] - 1.0) + s)


def _check_tables(ctx: _ModelContext, tables: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(tables) != ctx.v:
        raise ValueError("need one decoder table per view")
    out = []
    for i, t in enumerate(tables):
        arr = np.asarray(t, dtype=np.float64)
        if arr.shape != (ctx.z_card, ctx.x_cards[i]):
            raise ValueError(
                f"view {i} table shape {arr.shape}, "
                f"expected {(ctx.z_card, ctx.x_cards[i])}"
            )
        out.append(arr)
    return out


def variational_objective_raw(
    joint_x: JointPmf, neglog_tables: Sequence[np.ndarray], beta: float, prior=None
) -> float:
    """Working objective on raw neglog tables (rows need not normalize)."""
    z_card = np.asarray(neglog_tables[0]).shape[0]
    ctx = _ModelContext(joint_x, z_card, prior)
    return ctx.objective(_check_tables(ctx, neglog_tables), beta)


def variational_gradient_raw(
    joint_x: JointPmf,
    neglog_tables: Sequence[np.ndarray],
    beta: float,
    view: int,
    prior=None,
) -> np.ndarray:
    """Gradient of the working objective in the given view's neglog table."""
    z_card = np.asarray(neglog_tables[0]).shape[0]
    ctx = _ModelContext(joint_x, z_card, prior)
    return ctx.gradient(_check_tables(ctx, neglog_tables), beta, view)


def _model_pieces(theta: DecoderSet, joint_x: JointPmf):
    if theta.n_views != joint_x.n_axes or theta.x_cards != joint_x.cards:
        raise ValueError("decoder alphabets do not match the joint")
    prior = theta.prior.probs
    tables = [d.table for d in theta.decoders]
    ls = _LETTERS[: len(tables)]
    subs = "z," + ",".join(f"z{l}" for l in ls) + f"->{ls}"
    ptheta = np.einsum(subs, prior, *tables)
    t_h = 0.0
    for t in tables:
        logt = np.where(t > 0.0, np.log(np.maximum(t, _TINY)), 0.0)
        t_h += float(np.vdot(prior[:, None] * t, logt))
    return ptheta, t_h


def surrogate_bound(
    theta: DecoderSet, joint_x: JointPmf, zero_mass_tol: float = 0.0
) -> float:
    """Upper bound on I_theta(X^V; Z): -sum_i H(X_i|Z) - E_theta[log P].

    Infinite when the model leaves more than ``zero_mass_tol`` mass on any
    cell outside the support of ``joint_x``.
    """
    ptheta, t_h = _model_pieces(theta, joint_x)
    p = joint_x.mass
    zero = p == 0.0
    if np.any(ptheta[zero] > zero_mass_tol):
        return math.inf
    logp = np.where(~zero, np.log(np.maximum(p, _TINY)), 0.0)
    return t_h - float(np.vdot(ptheta, logp))


def variational_lagrangian(
    theta: DecoderSet, joint_x: JointPmf, beta: float, zero_mass_tol: float = 0.0
) -> float:
    """Surrogate bound plus beta times the fit divergence D(P || P_theta)."""
    bound = surrogate_bound(theta, joint_x, zero_mass_tol)
    if math.isinf(bound):
        return math.inf
    ptheta, _ = _model_pieces(theta, joint_x)
    p = joint_x.mass
    mask = p > 0.0
    if np.any(ptheta[mask] <= 0.0):
        return math.inf
    kl = float(np.sum(p[mask] * np.log(p[mask] / ptheta[mask])))
    return bound + beta * kl


def _acceptable(cur_val: float, cur_ok: bool, new_val: float, new_ok: bool) -> bool:
    if cur_ok and not new_ok:
        return False
    if new_ok and not cur_ok:
        return True
    return new_val <= cur_val + _STEP_GROWTH_TOL


def _block_descend(
    ctx: _ModelContext,
    qs: list[np.ndarray],
    view: int,
    beta: float,
    step0: float,
    inner_tol: float,
    inner_max_iters: int,
) -> np.ndarray:
    """Safeguarded fixed-step descent on one view's neglog table.

    The nominal step is halved within an iteration whenever it would grow
    the objective, so the block trajectory is monotone to within 1e-12 per
    accepted step.
    """
    work = list(qs)
    q_cur = work[view]
    cur_val, cur_ok = ctx.objective_parts(work, beta)
    for _ in range(inner_max_iters):
        work[view] = q_cur
        g = ctx.gradient(work, beta, view)
        cand = project_neglog(q_cur - step0 * g)
        if float(np.linalg.norm(cand - q_cur)) / step0 <= inner_tol:
            break
        step = step0
        accepted = False
        while step > 1e-14:
            work[view] = cand
            new_val, new_ok = ctx.objective_parts(work, beta)
            if _acceptable(cur_val, cur_ok, new_val, new_ok):
                q_cur = cand
                cur_val, cur_ok = new_val, new_ok
                accepted = True
                break
            step *= 0.5
            cand = project_neglog(q_cur - step * g)
        if not accepted:
            break
    return q_cur


def block_update(
    theta: DecoderSet, view: int, joint_x: JointPmf, config: VariationalConfig
) -> DecoderSet:
    """Approximately minimize the objective in one view's decoder."""
    if not 0 <= view < theta.n_views:
        raise ValueError(f"view {view} out of range")
    ctx = _ModelContext(joint_x, theta.z_card, theta.prior.probs)
    qs = theta.neglog_tables()
    q_new = _block_descend(
        ctx,
        qs,
        view,
        config.beta,
        config.step_size,
        config.inner_tol,
        config.inner_max_iters,
    )
    p_new = np.exp(-q_new)
    p_new /= p_new.sum(axis=1, keepdims=True)
    decoders = list(theta.decoders)
    decoders[view] = CondPmf(p_new)
    return DecoderSet(prior=theta.prior, decoders=tuple(decoders))


@dataclass
class VariationalRun:
    """Outcome of one factorized-decoder solve."""

    config: dict
    converged: bool
    cycles: int
    objective: list[float]
    final_changes: list[float]
    metrics: dict
    decoders: DecoderSet
    encoder: Encoder

    def to_dict(self) -> dict:
        return {
            "solver": "variational",
            "config": self.config,
            "converged": self.converged,
            "cycles": self.cycles,
            "objective": self.objective,
            "final_changes": self.final_changes,
            "metrics": self.metrics,
            "decoders": self.decoders.to_dict(),
            "encoder": self.encoder.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VariationalRun":
        return cls(
            config=data["config"],
            converged=bool(data["converged"]),
            cycles=int(data["cycles"]),
            objective=[float(v) for v in data["objective"]],
            final_changes=[float(v) for v in data["final_changes"]],
            metrics=data["metrics"],
            decoders=DecoderSet.from_dict(data["decoders"]),
            encoder=Encoder.from_dict(data["encoder"]),
        )


def posterior_encoder(theta: DecoderSet, x_cards: Sequence[int] | None = None) -> Encoder:
    """Bayes posterior P_theta(z | x^V) of the mixture model, as an encoder."""
    x_cards = theta.x_cards if x_cards is None else tuple(int(c) for c in x_cards)
    full = latent_joint(theta.prior, theta.decoders).mass
    rows = np.moveaxis(full, 0, -1).reshape(-1, theta.z_card)
    sums = rows.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        raise ValueError("model leaves zero mass on some observation")
    return prob_to_encoder(CondPmf(rows / sums), x_cards)


def solve_variational(joint_x: JointPmf, config: VariationalConfig) -> VariationalRun:
    """Cycle block updates over the views until the tables stop moving.

    Convergence means every view's neglog table moved by at most
    ``outer_tol`` in one full cycle.  Runs that exhaust the cycle budget
    are returned with ``converged=False`` rather than raised.
    """
    theta0 = decoder_set_from_random(config.z_card, joint_x.cards, config.seed)
    ctx = _ModelContext(joint_x, config.z_card, theta0.prior.probs)
    qs = theta0.neglog_tables()

    history = [ctx.objective(qs, config.beta)]
    changes = [math.inf] * ctx.v
    converged = False
    cycles = 0
    for cycles in range(1, config.outer_max_iters + 1):
        for i in range(ctx.v):
            q_new = _block_descend(
                ctx,
                qs,
                i,
                config.beta,
                config.step_size,
                config.inner_tol,
                config.inner_max_iters,
            )
            changes[i] = float(np.linalg.norm(q_new - qs[i]))
            qs[i] = q_new
        history.append(ctx.objective(qs, config.beta))
        if max(changes) <= config.outer_tol:
            converged = True
            break

    probs = []
    for q in qs:
        p = np.exp(-q)
        probs.append(p / p.sum(axis=1, keepdims=True))
    theta = DecoderSet(
        prior=theta0.prior, decoders=tuple(CondPmf(p) for p in probs)
    )
    encoder = posterior_encoder(theta)

    pt = ctx.ptheta([d.table for d in theta.decoders])
    kl = ctx.const_plogp - float(
        np.sum(ctx.p[ctx.mask] * np.log(np.maximum(pt[ctx.mask], _TINY)))
    )
    full = latent_joint(theta.prior, theta.decoders)
    axes_x = tuple(range(1, ctx.v + 1))
    metrics = {
        "achieved_kl_nats": kl,
        "kl_feasible": kl <= config.xi_filter,
        "surrogate_nats": surrogate_bound(theta, joint_x, zero_mass_tol=MLOG_FLOOR),
        "objective_nats": history[-1],
        "latent_mi_nats": mutual_information(full, (0,), axes_x),
        "latent_mi_bits": mutual_information(full, (0,), axes_x, base="bits"),
    }
    if ctx.v == 2:
        point = evaluation.plane_point(encoder, joint_x)
        metrics.update(
            joint_mi_bits=point.joint_mi_bits,
            sum_view_mi_bits=point.sum_view_mi_bits,
            residual_cmi_bits=point.residual_cmi_bits,
            marginal_mi_bits=mutual_information(joint_x, (0,), (1,), base="bits"),
        )

    return VariationalRun(
        config=config.to_dict(),
        converged=converged,
        cycles=cycles,
        objective=[float(v) for v in history],
        final_changes=[float(c) for c in changes],
        metrics=metrics,
        decoders=theta,
        encoder=encoder,
    )


def run_to_record(run: VariationalRun) -> RunRecord:
    """Repackage a variational run in the unified record schema."""
    return RunRecord(
        solver="variational",
        config=run.config,
        converged=run.converged,
        iterations=run.cycles,
        metrics=run.metrics,
        trajectory={"objective": run.objective},
        trajectory_stride=1,
        sufficient_decrease=None,
        encoder=run.encoder,
        decoders=run.decoders,
        diagnostics={"final_changes": run.final_changes},
    )
