"""Exact best responses to a frozen mean field.

Each population faces a finite-horizon discounted control problem whose
stage costs are convex quadratics in its flows and whose inventory dynamics
are linear, with the mean-field path (mispricing, congestion, backlogs,
volatility) treated as exogenous. The minimizer is therefore affine in
inventory and the value function quadratic; backward induction computes both
exactly.

A primary-channel flow is par-conversion arbitrage: one unit of redemption
flow acquires a coin at the prevailing secondary price 1 + m_t and converts
it at par (a mint into a premium is the mirror trade), so it is
inventory-neutral and earns ``-m_t`` per unit, against the routing fee
``tau_c(L_t)`` charged on routed volume and the quadratic capacity cost
``kappa_P``. The optimum is a per-step soft threshold: no flow while the
mispricing sits inside the fee band, redemption when the discount exceeds
the fee, minting when the premium does. This makes primary-rail friction
the binding constraint on recovery speed during a discount.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import KERNELS
from .meanfield import MeanFieldPath
from .params import AgentParams, ModelParams

__all__ = [
    "AffinePolicy",
    "ValueQuadratic",
    "StageCostView",
    "stage_costs",
    "stage_cost_arrays",
    "tau_of_backlog",
    "best_response",
    "evaluate_policy",
    "zero_policy",
]


def _ro(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    if out is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class AffinePolicy:
    """Affine-in-inventory control law per time step.

    Secondary flow at venue s: ``a_s(q) = sec_intercept[t, s] +
    sec_slope[t, s] * q``; primary flow at channel c analogously. Retail
    policies have zero-length primary components.
    """

    sec_intercept: np.ndarray  # (T, S)
    sec_slope: np.ndarray      # (T, S)
    prim_intercept: np.ndarray  # (T, C); C = 0 for retail
    prim_slope: np.ndarray      # (T, C)

    def __post_init__(self):
        for name in ("sec_intercept", "sec_slope", "prim_intercept", "prim_slope"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    @property
    def horizon(self) -> int:
        return self.sec_intercept.shape[0]

    def controls_at(self, t: int, q: float) -> tuple[np.ndarray, np.ndarray]:
        """(secondary flows, primary flows) at time t for inventory q."""
        a = self.sec_intercept[t] + self.sec_slope[t] * q
        r = self.prim_intercept[t] + self.prim_slope[t] * q
        return a, r


@dataclass(frozen=True)
class ValueQuadratic:
    """Value function V_t(q) = p_t q^2 + s_t q + k_t, with V_T = 0."""

    p: np.ndarray  # (T+1,), nonnegative (value convex in inventory)
    s: np.ndarray  # (T+1,)
    k: np.ndarray  # (T+1,)

    def __post_init__(self):
        for name in ("p", "s", "k"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    def at(self, t: int, q: float) -> float:
        return float(self.p[t] * q * q + self.s[t] * q + self.k[t])


@dataclass(frozen=True)
class StageCostView:
    """Effective per-period cost coefficients at one time step."""

    kappa_sec: np.ndarray   # (S,) volatility-scaled secondary frictions
    eta: float              # volatility-scaled inventory aversion
    lin_sec: np.ndarray     # (S,) linear secondary cost: m_t + xi * phi_{s,t}
    kappa_prim: np.ndarray  # (C,) primary frictions (unscaled)
    prim_pnl: np.ndarray    # (C,) signed conversion profit term: m_t
    prim_fee: np.ndarray    # (C,) routing fee on volume: tau_c(L_t)


def tau_of_backlog(params: ModelParams, backlog: np.ndarray) -> np.ndarray:
    """Backlog-dependent routing fee tau_c(L) = tau0_c + theta_c * L_c."""
    mk = params.market
    return mk.tau0 + mk.theta * np.asarray(backlog, dtype=float)


def stage_cost_arrays(params: ModelParams, mf: MeanFieldPath, agent: str):
    """Full (T, ...) effective-coefficient arrays for one population.

    Returns (kap, eta, lin_sec, kap_p, prim_pnl, prim_fee) ready for the
    kernels.
    """
    ap: AgentParams = params.agent(agent)
    T = mf.horizon
    if ap.kappa0.size != mf.sec_flow.shape[1]:
        raise ValueError(
            f"{agent} kappa0 has {ap.kappa0.size} venues but the mean field "
            f"has {mf.sec_flow.shape[1]}")
    if ap.has_primary and ap.kappa_p.size != mf.prim_flow.shape[1]:
        raise ValueError(
            f"{agent} kappa_p has {ap.kappa_p.size} channels but the mean "
            f"field has {mf.prim_flow.shape[1]}")
    sig = mf.sigma[:T]  # sigma_t at decision times
    kap = np.ascontiguousarray(np.outer(1.0 + ap.vol_sens_exec * sig, ap.kappa0))
    eta = np.ascontiguousarray(ap.eta0 * (1.0 + ap.vol_sens_inv * sig))
    lin_sec = np.ascontiguousarray(mf.m[:T, None] + ap.xi * mf.sec_flow)
    if ap.has_primary:
        kap_p = np.ascontiguousarray(ap.kappa_p)
        prim_pnl = np.ascontiguousarray(np.repeat(mf.m[:T, None],
                                                  kap_p.size, axis=1))
        prim_fee = np.ascontiguousarray(
            params.market.tau0[None, :]
            + params.market.theta[None, :] * mf.backlog[:T])
    else:
        kap_p = np.zeros(0)
        prim_pnl = np.zeros((T, 0))
        prim_fee = np.zeros((T, 0))
    return kap, eta, lin_sec, kap_p, prim_pnl, prim_fee


def stage_costs(params: ModelParams, mf: MeanFieldPath, t: int,
                agent: str) -> StageCostView:
    """Effective cost coefficients for one population at time t.

    Volatility scaling: ``kappa_{i,s,t} = kappa_{i,s,0} (1 + c_i sigma_t)``
    and ``eta_{i,t} = eta_{i,0} (1 + d_i sigma_t)``.
    """
    if not (0 <= t < mf.horizon):
        raise IndexError(f"time index {t} outside horizon {mf.horizon}")
    kap, eta, lin_sec, kap_p, prim_pnl, prim_fee = stage_cost_arrays(
        params, mf, agent)
    return StageCostView(
        kappa_sec=kap[t].copy(),
        eta=float(eta[t]),
        lin_sec=lin_sec[t].copy(),
        kappa_prim=kap_p.copy(),
        prim_pnl=prim_pnl[t].copy(),
        prim_fee=prim_fee[t].copy(),
    )


def best_response(params: ModelParams, mf: MeanFieldPath,
                  agent: str) -> tuple[AffinePolicy, ValueQuadratic]:
    """Exact minimizer of the horizon-T discounted objective against ``mf``.

    The mean-field path, the congestion terms, and the backlogs are held
    exogenous; terminal value is zero. At each step the secondary
    first-order conditions share one shadow-price term
    ``gamma * (2 p_{t+1} (q + A) + s_{t+1})``, so they reduce to a single
    scalar linear equation in the total secondary trade A; the primary
    channels solve an inventory-free soft-threshold condition per step.
    """
    kap, eta, lin_sec, kap_p, prim_pnl, prim_fee = stage_cost_arrays(
        params, mf, agent)
    sec_int, sec_slope, prim_int, prim_slope, p, s, k = KERNELS.solve_policy_backward(
        params.sim.discount, kap, eta, lin_sec, kap_p, prim_pnl, prim_fee
    )
    policy = AffinePolicy(sec_int, sec_slope, prim_int, prim_slope)
    value = ValueQuadratic(p, s, k)
    return policy, value


def evaluate_policy(params: ModelParams, mf: MeanFieldPath,
                    policy: AffinePolicy, agent: str, q0: float = 0.0) -> float:
    """Discounted cost of ``policy`` along its deterministic inventory path,
    against the frozen mean field."""
    if policy.horizon != mf.horizon:
        raise ValueError(
            f"policy horizon {policy.horizon} != mean-field horizon {mf.horizon}"
        )
    kap, eta, lin_sec, kap_p, prim_pnl, prim_fee = stage_cost_arrays(
        params, mf, agent)
    return float(KERNELS.policy_cost(
        params.sim.discount, kap, eta, lin_sec, kap_p, prim_pnl, prim_fee,
        np.ascontiguousarray(policy.sec_intercept),
        np.ascontiguousarray(policy.sec_slope),
        np.ascontiguousarray(policy.prim_intercept),
        np.ascontiguousarray(policy.prim_slope),
        float(q0),
    ))


def zero_policy(params: ModelParams, agent: str) -> AffinePolicy:
    """All-zero control law (used to initialize the equilibrium iteration)."""
    T = params.sim.horizon
    S = params.market.n_venues
    C = params.market.n_channels if params.agent(agent).has_primary else 0
    return AffinePolicy(
        sec_intercept=np.zeros((T, S)),
        sec_slope=np.zeros((T, S)),
        prim_intercept=np.zeros((T, C)),
        prim_slope=np.zeros((T, C)),
    )
