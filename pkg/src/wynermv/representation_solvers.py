"""Encoder-side solvers for the relaxed common-information objective.

Works on a two-view joint P(X1, X2) and an encoder P(Z | X1, X2) stored in
negative-log coordinates.  The objective

    L(q) = (1 - gamma) H(Z) - (1 + gamma) H(Z|X1,X2) + gamma H(Z|X1) + gamma H(Z|X2)

splits into F (the conditional-entropy part, in p) and G (the rest, in q),
which are tied together by a scaled dual variable and a quadratic penalty.
The main solver alternates projected-gradient blocks on p and q with an
exact dual ascent step in between; a plain projected-gradient descent on
the unsplit objective is kept as a baseline under the same bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Mapping, Sequence

import numpy as np

from . import evaluation
from .info_measures import (
    JointPmf,
    conditional_entropy,
    encoder_joint,
    mutual_information,
)
from .model_state import (
    MLOG_FLOOR,
    Encoder,
    encoder_from_random,
    project_neglog,
)
from .records import RunRecord

_TINY = 1e-300


@dataclass(frozen=True)
class AdmmConfig:
    gamma: float
    z_card: int
    c: float = 128.0
    step_size: float = 1e-2
    inner_tol: float = 1e-8
    inner_max_iters: int = 100
    primal_tol: float = 2e-6
    max_iters: int = 300_000
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be nonnegative")
        if self.z_card < 1:
            raise ValueError("z_card must be positive")
        if self.c <= 0.0 or self.step_size <= 0.0:
            raise ValueError("c and step_size must be positive")
        if self.max_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("iteration limits must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class _PairContext:
    """Precomputed tables for a two-view joint."""

    def __init__(self, joint_x: JointPmf, z_card: int):
        if joint_x.n_axes != 2:
            raise ValueError("these solvers expect a two-view joint")
        w = joint_x.mass
        self.w = w
        self.w3 = w[:, :, None]
        self.n1, self.n2 = w.shape
        self.z_card = z_card
        px1 = w.sum(axis=1)
        px2 = w.sum(axis=0)
        self.px1 = px1
        self.px2 = px2
        # Conditionals used as contraction weights; zero-mass symbols give
        # zero rows, which drop out of every weighted sum.
        self.c21 = np.divide(w, px1[:, None], out=np.zeros_like(w), where=px1[:, None] > 0)
        self.c12 = np.divide(w, px2[None, :], out=np.zeros_like(w), where=px2[None, :] > 0)

    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.z_card)


def _as_cube(arr: np.ndarray, ctx: _PairContext) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2 and a.shape == (ctx.n1 * ctx.n2, ctx.z_card):
        return a.reshape(ctx.shape())
    if a.shape != ctx.shape():
        raise ValueError(f"state shape {a.shape} does not match {ctx.shape()}")
    return a


def _f_value(ctx: _PairContext, p: np.ndarray, gamma: float) -> float:
    ep = np.exp(-p)
    return float(-(1.0 + gamma) * np.sum(ctx.w3 * p * ep))


def _f_gradient(ctx: _PairContext, p: np.ndarray, gamma: float) -> np.ndarray:
    ep = np.exp(-p)
    return (1.0 + gamma) * ctx.w3 * ep * (p - 1.0)


def _g_marginals(ctx: _PairContext, q: np.ndarray):
    eq = np.exp(-q)
    pz = np.einsum("ab,abz->z", ctx.w, eq)
    c1 = np.einsum("ab,abz->az", ctx.c21, eq)
    c2 = np.einsum("ab,abz->bz", ctx.c12, eq)
    return eq, pz, c1, c2


def _g_value(ctx: _PairContext, q: np.ndarray, gamma: float) -> float:
    _, pz, c1, c2 = _g_marginals(ctx, q)
    h_z = -np.dot(pz, np.log(np.maximum(pz, _TINY)))
    h_z1 = -np.dot(ctx.px1, np.sum(c1 * np.log(np.maximum(c1, _TINY)), axis=1))
    h_z2 = -np.dot(ctx.px2, np.sum(c2 * np.log(np.maximum(c2, _TINY)), axis=1))
    return float((1.0 - gamma) * h_z + gamma * (h_z1 + h_z2))


def _g_gradient(ctx: _PairContext, q: np.ndarray, gamma: float) -> np.ndarray:
    eq, pz, c1, c2 = _g_marginals(ctx, q)
    mix = (1.0 - gamma) * (1.0 + np.log(np.maximum(pz, _TINY)))[None, None, :]
    mix = mix + gamma * (1.0 + np.log(np.maximum(c1, _TINY)))[:, None, :]
    mix = mix + gamma * (1.0 + np.log(np.maximum(c2, _TINY)))[None, :, :]
    return ctx.w3 * eq * mix


def split_objectives(joint_x: JointPmf, p, q, gamma: float) -> tuple[float, float]:
    """(F(p), G(q)); their sum equals the unsplit objective when p == q."""
    ctx = _PairContext(joint_x, np.asarray(p).shape[-1])
    return (
        _f_value(ctx, _as_cube(p, ctx), gamma),
        _g_value(ctx, _as_cube(q, ctx), gamma),
    )


def f_gamma_gradient(joint_x: JointPmf, p, gamma: float) -> np.ndarray:
    ctx = _PairContext(joint_x, np.asarray(p).shape[-1])
    cube = _as_cube(p, ctx)
    return _f_gradient(ctx, cube, gamma).reshape(np.asarray(p).shape)

def g_gamma_gradient(joint_x: JointPmf, q, gamma: float) -> np.ndarray:
    ctx = _PairContext(joint_x, np.asarray(q).shape[-1])
    cube = _as_cube(q, ctx)
    return _g_gradient(ctx, cube, gamma).reshape(np.asarray(q).shape)


def augmented_lagrangian(
    joint_x: JointPmf, p, q, nu, gamma: float, c: float
) -> float:
    """F(p) + G(q) + <nu, p - q> + (c/2) ||p - q||^2."""
    ctx = _PairContext(joint_x, np.asarray(p).shape[-1])
    pc = _as_cube(p, ctx)
    qc = _as_cube(q, ctx)
    nc = _as_cube(nu, ctx)
    diff = pc - qc
    return (
        _f_value(ctx, pc, gamma)
        + _g_value(ctx, qc, gamma)
        + float(np.sum(nc * diff))
        + 0.5 * c * float(np.sum(diff * diff))
    )


def augmented_gradients(
    joint_x: JointPmf, p, q, nu, gamma: float, c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the augmented objective in p and in q."""
    ctx = _PairContext(joint_x, np.asarray(p).shape[-1])
    pc = _as_cube(p, ctx)
    qc = _as_cube(q, ctx)
    nc = _as_cube(nu, ctx)
    diff = pc - qc
    gp = _f_gradient(ctx, pc, gamma) + nc + c * diff
    gq = _g_gradient(ctx, qc, gamma) - nc - c * diff
    return gp.reshape(np.asarray(p).shape), gq.reshape(np.asarray(q).shape)


def lagrangian_gamma(encoder, joint_x: JointPmf, gamma: float) -> float:
    """Unsplit objective from entropies of the encoder-extended joint, in nats.

    Independent of the split F/G formulas on purpose: this route goes
    through the exact joint tables, so the two can cross-check each other.
    """
    cond = encoder.to_cond_pmf() if isinstance(encoder, Encoder) else encoder
    full = encoder_joint(joint_x, cond)
    h_z = conditional_entropy(full, (0,), ())
    h_z_12 = conditional_entropy(full, (0,), (1, 2))
    h_z_1 = conditional_entropy(full, (0,), (1,))
    h_z_2 = conditional_entropy(full, (0,), (2,))
    return (
        (1.0 - gamma) * h_z
        - (1.0 + gamma) * h_z_12
        + gamma * (h_z_1 + h_z_2)
    )


def lagrangian_multiview(
    encoder, joint_x: JointPmf, gammas: Mapping[Sequence[int], float]
) -> float:
    """Partition-weighted objective for V views, in nats.

    ``gammas`` maps proper nonempty view subsets S to weights; each key
    contributes gamma_S * [H(Z|X_S) + H(Z|X_Sc)].  With every weight zero
    the value reduces to I(X^V; Z) written in entropy form.
    """
    cond = encoder.to_cond_pmf() if isinstance(encoder, Encoder) else encoder
    full = encoder_joint(joint_x, cond)
    n_views = joint_x.n_axes
    all_axes = tuple(range(1, n_views + 1))

    total = 0.0
    for key, weight in gammas.items():
        s = tuple(sorted(int(v) for v in key))
        if len(set(s)) != len(s) or not s or len(s) >= n_views:
            raise ValueError(f"subset {key!r} is not a proper nonempty view subset")
        if any(v < 0 or v >= n_views for v in s):
            raise ValueError(f"subset {key!r} has a view index out of range")
        if weight < 0.0:
            raise ValueError("partition weights must be nonnegative")
        total += weight
    big_gamma = total

    value = (1.0 - big_gamma) * conditional_entropy(full, (0,), ())
    value -= (1.0 + big_gamma) * conditional_entropy(full, (0,), all_axes)
    for key, weight in gammas.items():
        s_axes = tuple(int(v) + 1 for v in sorted(key))
        sc_axes = tuple(a for a in all_axes if a not in s_axes)
        value += weight * (
            conditional_entropy(full, (0,), s_axes)
            + conditional_entropy(full, (0,), sc_axes)
        )
    return float(value)


def weak_convexity_sigma_entropy(eps0: float) -> float:
    """Weak-convexity modulus of entropy on log-likelihoods in (-2, -eps0)."""
    if not 0.0 < eps0 < 2.0:
        raise ValueError("eps0 must lie in (0, 2)")
    return 2.0 * math.exp(-eps0) * (2.0 - eps0)


def weak_convexity_sigma_negentropy() -> float:
    """Weak-convexity modulus of negative entropy on log-likelihoods."""
    return 2.0 * math.exp(-3.0)


@dataclass(frozen=True)
class ConvexityConstants:
    sigma_f: float
    sigma_g: float
    l_p: float

    @property
    def delta(self) -> float:
        return math.sqrt(self.sigma_f**2 + 8.0 * self.l_p**2)

    @property
    def c_threshold(self) -> float:
        return max(self.sigma_g, 0.5 * (self.sigma_f + self.delta))

    def to_dict(self) -> dict:
        return {
            "sigma_f": self.sigma_f,
            "sigma_g": self.sigma_g,
            "l_p": self.l_p,
            "delta": self.delta,
            "c_threshold": self.c_threshold,
        }


def penalty_threshold(constants: ConvexityConstants) -> float:
    """Smallest admissible penalty: max(sigma_G, (sigma_F + Delta) / 2)."""
    return constants.c_threshold


def estimate_convexity_constants(
    joint_x: JointPmf, gamma: float, eps0: float = MLOG_FLOOR
) -> ConvexityConstants:
    """Plug-in moduli for the split objectives on this joint.

    Scales the per-coordinate entropy / negative-entropy moduli by the
    largest cell weight.  Deliberately conservative: overestimating the
    moduli only shrinks the guaranteed decrease coefficients.
    """
    w_max = float(joint_x.mass.max())
    sig_neg = weak_convexity_sigma_negentropy()
    sig_ent = weak_convexity_sigma_entropy(eps0)
    sigma_f = (1.0 + gamma) * w_max * sig_neg
    marginal_mod = sig_neg if gamma >= 1.0 else sig_ent
    sigma_g = w_max * (abs(1.0 - gamma) * marginal_mod + 2.0 * gamma * sig_ent)
    l_p = 2.0 * (1.0 + gamma) * w_max
    return ConvexityConstants(sigma_f=sigma_f, sigma_g=sigma_g, l_p=l_p)


def decrease_coefficients(
    constants: ConvexityConstants, c: float
) -> tuple[float, float]:
    """(delta_p, delta_q) guaranteed-decrease weights for penalty c."""
    delta_p = 0.5 * (c - constants.sigma_f) - constants.l_p**2 / c
    delta_q = 0.5 * (c - constants.sigma_g)
    return delta_p, delta_q


def sufficient_decrease_check(
    lagrangian: Sequence[float],
    p_steps: Sequence[float],
    q_steps: Sequence[float],
    delta_p: float,
    delta_q: float,
    tol: float = 1e-8,
) -> dict:
    """Count iterations where the logged decrease falls short of the bound.

    Expects the augmented objective at every iterate (one more entry than
    the step-norm lists) and flags pairs with
    L[k] - L[k+1] < delta_p ||dp||^2 + delta_q ||dq||^2 - tol.
    """
    lag = np.asarray(lagrangian, dtype=np.float64)
    dp = np.asarray(p_steps, dtype=np.float64)
    dq = np.asarray(q_steps, dtype=np.float64)
    if lag.size < 2:
        raise ValueError("need at least two logged objective values")
    if dp.size != lag.size - 1 or dq.size != lag.size - 1:
        raise ValueError("step-norm lists must be one shorter than the objective list")
    decrease = lag[:-1] - lag[1:]
    required = delta_p * dp**2 + delta_q * dq**2
    shortfall = required - decrease
    violations = int(np.sum(shortfall > tol))
    return {
        "checked": int(dp.size),
        "violations": violations,
        "fraction": violations / dp.size,
        "worst_shortfall": float(shortfall.max()),
        "delta_p": float(delta_p),
        "delta_q": float(delta_q),
        "tol": tol,
    }


def _pgd_block(x0, grad_fn, step, tol, max_iters):
    """Fixed-step projected gradient descent on one block.

    Returns (x, last_projected_grad_norm, n_steps); the final norm is the
    natural first-order residual at exit.
    """
    x = x0
    pg = math.inf
    steps = 0
    for _ in range(max_iters):
        cand = project_neglog(x - step * grad_fn(x))
        pg = float(np.linalg.norm(cand - x)) / step
        if pg <= tol:
            break
        x = cand
        steps += 1
    return x, pg, steps


@dataclass
class AdmmState:
    p: np.ndarray
    nu: np.ndarray
    q: np.ndarray


def init_admm_state(joint_x: JointPmf, config: AdmmConfig) -> AdmmState:
    enc = encoder_from_random(config.z_card, joint_x.cards, config.seed)
    p0 = enc.neglog.reshape(joint_x.cards + (config.z_card,)).copy()
    return AdmmState(p=p0, nu=np.zeros_like(p0), q=p0.copy())


def admm_step(joint_x: JointPmf, state: AdmmState, config: AdmmConfig) -> AdmmState:
    """One splitting iteration: p block, exact dual ascent, q block."""
    ctx = _PairContext(joint_x, config.z_card)
    new, _, _ = _admm_iterate(ctx, state, config)
    return new


def _admm_iterate(
    ctx: _PairContext, state: AdmmState, config: AdmmConfig
) -> tuple[AdmmState, float, float]:
    gamma, c = config.gamma, config.c
    q_old, nu_old = state.q, state.nu

    def grad_p(p):
        return _f_gradient(ctx, p, gamma) + nu_old + c * (p - q_old)

    p_new, pg_p, _ = _pgd_block(
        state.p, grad_p, config.step_size, config.inner_tol, config.inner_max_iters
    )
    nu_new = nu_old + c * (p_new - q_old)

    def grad_q(q):
        return _g_gradient(ctx, q, gamma) - nu_new - c * (p_new - q)

    q_new, pg_q, _ = _pgd_block(
        state.q, grad_q, config.step_size, config.inner_tol, config.inner_max_iters
    )
    return AdmmState(p=p_new, nu=nu_new, q=q_new), pg_p, pg_q


def _downsample(values: np.ndarray, stride: int) -> list[float]:
    n = values.shape[0]
    idx = list(range(0, n, stride))
    if idx and idx[-1] != n - 1:
        idx.append(n - 1)
    return [float(values[i]) for i in idx]


def _encoder_metrics(encoder: Encoder, joint_x: JointPmf, gamma: float) -> dict:
    point = evaluation.plane_point(encoder, joint_x)
    return {
        "joint_mi_bits": point.joint_mi_bits,
        "sum_view_mi_bits": point.sum_view_mi_bits,
        "residual_cmi_bits": point.residual_cmi_bits,
        "marginal_mi_bits": mutual_information(joint_x, (0,), (1,), base="bits"),
        "objective_nats": lagrangian_gamma(encoder, joint_x, gamma),
    }


_TRAJ_STRIDE = 100


def solve_admm(joint_x: JointPmf, config: AdmmConfig) -> RunRecord:
    """Run the splitting solver from a seeded random start.

    Converges when the squared consensus residual ||p - q||^2 drops below
    ``primal_tol``; hitting ``max_iters`` first flags the run as diverged.
    The returned record keeps the final encoder (from q), plane metrics,
    a strided trajectory, and the decrease-check report.
    """
    ctx = _PairContext(joint_x, config.z_card)
    state = init_admm_state(joint_x, config)

    n_max = config.max_iters
    lag = np.empty(n_max + 1)
    dp = np.empty(n_max)
    dq = np.empty(n_max)
    res = np.empty(n_max)
    lag[0] = augmented_lagrangian(
        joint_x, state.p, state.q, state.nu, config.gamma, config.c
    )

    converged = False
    k = 0
    grad_norms = (math.inf, math.inf)
    for k in range(1, n_max + 1):
        new, pg_p, pg_q = _admm_iterate(ctx, state, config)
        grad_norms = (pg_p, pg_q)
        dp[k - 1] = np.linalg.norm(new.p - state.p)
        dq[k - 1] = np.linalg.norm(new.q - state.q)
        diff = new.p - new.q
        res[k - 1] = float(np.sum(diff * diff))
        lag[k] = (
            _f_value(ctx, new.p, config.gamma)
            + _g_value(ctx, new.q, config.gamma)
            + float(np.sum(new.nu * diff))
            + 0.5 * config.c * res[k - 1]
        )
        state = new
        if res[k - 1] <= config.primal_tol:
            converged = True
            break

    iters = k
    encoder = Encoder(
        z_card=config.z_card,
        x_cards=joint_x.cards,
        neglog=state.q.reshape(-1, config.z_card),
    )
    constants = estimate_convexity_constants(joint_x, config.gamma)
    delta_p, delta_q = decrease_coefficients(constants, config.c)
    decrease = sufficient_decrease_check(
        lag[: iters + 1], dp[:iters], dq[:iters], delta_p, delta_q
    )
    decrease["constants"] = constants.to_dict()

    metrics = _encoder_metrics(encoder, joint_x, config.gamma)
    metrics["augmented_nats"] = float(lag[iters])
    metrics["primal_residual_sq"] = float(res[iters - 1])

    return RunRecord(
        solver="admm",
        config=config.to_dict(),
        converged=converged,
        iterations=iters,
        metrics=metrics,
        trajectory={
            "lagrangian": _downsample(lag[: iters + 1], _TRAJ_STRIDE),
            "p_step": _downsample(dp[:iters], _TRAJ_STRIDE),
            "q_step": _downsample(dq[:iters], _TRAJ_STRIDE),
            "primal_residual_sq": _downsample(res[:iters], _TRAJ_STRIDE),
        },
        trajectory_stride=_TRAJ_STRIDE,
        sufficient_decrease=decrease,
        encoder=encoder,
        diagnostics={
            "final_p_grad_norm": float(grad_norms[0]),
            "final_q_grad_norm": float(grad_norms[1]),
        },
    )


def solve_baseline(joint_x: JointPmf, config: AdmmConfig) -> RunRecord:
    """Plain projected gradient descent on the unsplit objective.

    Shares the config and record schema with the splitting solver; the
    penalty and inner-loop fields are ignored.  Converges when the
    parameter change per iteration drops below ``primal_tol``.
    """
    ctx = _PairContext(joint_x, config.z_card)
    enc0 = encoder_from_random(config.z_card, joint_x.cards, config.seed)
    q = enc0.neglog.reshape(ctx.shape()).copy()

    n_max = config.max_iters
    lag = np.empty(n_max + 1)
    dq = np.empty(n_max)
    lag[0] = _f_value(ctx, q, config.gamma) + _g_value(ctx, q, config.gamma)

    converged = False
    k = 0
    for k in range(1, n_max + 1):
        grad = _f_gradient(ctx, q, config.gamma) + _g_gradient(ctx, q, config.gamma)
        q_new = project_neglog(q - config.step_size * grad)
        dq[k - 1] = np.linalg.norm(q_new - q)
        lag[k] = _f_value(ctx, q_new, config.gamma) + _g_value(ctx, q_new, config.gamma)
        q = q_new
        if dq[k - 1] <= config.primal_tol:
            converged = True
            break

    iters = k
    encoder = Encoder(
        z_card=config.z_card,
        x_cards=joint_x.cards,
        neglog=q.reshape(-1, config.z_card),
    )
    metrics = _encoder_metrics(encoder, joint_x, config.gamma)
    metrics["final_step_norm"] = float(dq[iters - 1])

    return RunRecord(
        solver="baseline",
        config=config.to_dict(),
        converged=converged,
        iterations=iters,
        metrics=metrics,
        trajectory={
            "lagrangian": _downsample(lag[: iters + 1], _TRAJ_STRIDE),
            "q_step": _downsample(dq[:iters], _TRAJ_STRIDE),
        },
        trajectory_stride=_TRAJ_STRIDE,
        sufficient_decrease=None,
        encoder=encoder,
        diagnostics={},
    )
