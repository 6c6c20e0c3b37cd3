"""Forward market dynamics: flow aggregation, price impact, backlogs, GARCH.

The rollout is a pure function of (params, policies, shocks, initial state):
many rollouts may run concurrently without shared state. Heavy lifting is
delegated to the kernel backend; the single-step helpers here are the
readable reference used by the step-level tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .backend import KERNELS
from .lq import AffinePolicy
from .meanfield import MeanFieldPath, ShockStream
from .params import GarchParams, MarketParams, ModelParams

__all__ = [
    "MarketState",
    "RolloutResult",
    "garch_step",
    "scale_impacts",
    "softmax_route",
    "step_mean_field",
    "rollout",
    "write_trace_csv",
    "FMT",
]

FMT = "%.17g"  # numeric CSV format: exact float64 round-trip


def garch_step(g: GarchParams, prev_sigma2: float, prev_eps: float) -> float:
    """Next conditional variance: omega + alpha*eps^2 + beta*sigma^2."""
    if prev_sigma2 < 0:
        raise ValueError("variance must be nonnegative")
    return g.omega + g.alpha * prev_eps * prev_eps + g.beta * prev_sigma2


def scale_impacts(market: MarketParams, sigma: float) -> np.ndarray:
    """Volatility-scaled venue impacts lambda_{s,t} = lambda_{s,0}(1 + a_s sigma)."""
    if sigma < 0:
        raise ValueError("volatility must be nonnegative")
    return market.lambda0 * (1.0 + market.impact_vol_sens * sigma)


def softmax_route(weights: np.ndarray, effective_costs: np.ndarray,
                  temperature: float) -> np.ndarray:
    """Cost-sensitive venue allocation, sums to 1.

    allocation_s = w_s exp(-temperature*cost_s) / sum_u w_u exp(-temperature*cost_u),
    computed with max-subtraction (equivalently, subtracting the minimum
    cost) for numerical stability.
    """
    w = np.asarray(weights, dtype=float)
    costs = np.asarray(effective_costs, dtype=float)
    if temperature <= 0:
        raise ValueError("softmax temperature must be strictly positive")
    if not np.any(w > 0):
        raise ValueError("venue weights are all zero")
    z = w * np.exp(-temperature * (costs - costs.min()))
    return z / z.sum()


@dataclass(frozen=True)
class MarketState:
    """Instantaneous market state used by the single-step update."""

    m: float
    backlog: np.ndarray   # (C,)
    sigma: float
    q_retail: float
    q_arb: float


@dataclass(frozen=True)
class StepResult:
    state: MarketState
    sec_flow: np.ndarray   # (S,) phi_t
    prim_flow: np.ndarray  # (C,) psi_t
    controls_retail: np.ndarray
    controls_arb: np.ndarray
    controls_prim: np.ndarray
    eps: float


def step_mean_field(params: ModelParams, state: MarketState,
                    policies: tuple[AffinePolicy, AffinePolicy], t: int,
                    eps: float, routing: str = "foc") -> StepResult:
    """One forward step of the mean field under the given type policies.

    Representative controls are evaluated at the type-level inventories,
    aggregated with the population shares, and pushed through the price,
    backlog, and GARCH updates. Primary flows move the price and the backlog
    but, being par round trips, not the arbitrageur inventory.
    """
    mk = params.market
    pol_r, pol_a = policies
    a_R, _ = pol_r.controls_at(t, state.q_retail)
    a_A, r = pol_a.controls_at(t, state.q_arb)

    a_R = a_R.copy()
    a_A = a_A.copy()
    if routing == "softmax":
        lam = scale_impacts(mk, state.sigma)
        for ap, a in ((params.retail, a_R), (params.arb, a_A)):
            eff = lam + ap.kappa0 * (1.0 + ap.vol_sens_exec * state.sigma)
            alloc = softmax_route(mk.venue_weights, eff, ap.routing_temperature)
            a[:] = a.sum() * alloc
    elif routing != "foc":
        raise ValueError(f"unknown routing mode: {routing!r}")

    pi_R = params.retail.share
    pi_A = params.arb.share
    phi = pi_R * a_R + pi_A * a_A
    psi = pi_A * r

    lam_t = scale_impacts(mk, state.sigma)
    m_next = state.m + float(lam_t @ phi) + float(mk.gamma_c @ psi) + eps
    backlog_next = (1.0 - mk.delta) * state.backlog + psi
    sig2_next = garch_step(params.garch, state.sigma ** 2, eps)

    if not np.isfinite(m_next):
        raise FloatingPointError(f"non-finite mispricing update at t={t}")

    return StepResult(
        state=MarketState(
            m=m_next,
            backlog=backlog_next,
            sigma=float(np.sqrt(sig2_next)),
            q_retail=state.q_retail + float(a_R.sum()),
            q_arb=state.q_arb + float(a_A.sum()),
        ),
        sec_flow=phi,
        prim_flow=psi,
        controls_retail=a_R,
        controls_arb=a_A,
        controls_prim=r,
        eps=eps,
    )


@dataclass(frozen=True)
class RolloutResult:
    """Mean-field path plus the representative controls that generated it."""

    path: MeanFieldPath
    controls_retail: np.ndarray  # (T, S)
    controls_arb: np.ndarray     # (T, S)
    controls_prim: np.ndarray    # (T, C)
    inv_retail: np.ndarray       # (T+1,)
    inv_arb: np.ndarray          # (T+1,)


def rollout(params: ModelParams, policies: tuple[AffinePolicy, AffinePolicy],
            shocks: ShockStream, routing: str = "foc",
            m0: float | None = None, backlog0: np.ndarray | None = None,
            sigma0: float | None = None, q_retail0: float = 0.0,
            q_arb0: float = 0.0) -> RolloutResult:
    """Full forward simulation from the initial state.

    Defaults to the episode start (m_0 from the config, zero backlogs and
    inventories, sigma_0 from the GARCH block); explicit initial-state
    arguments support continuing a simulation from a previous endpoint.
    In zero-noise mode eps_t = 0 while sigma_t still follows its recursion.
    """
    pol_r, pol_a = policies
    mk = params.market
    if routing not in ("foc", "softmax"):
        raise ValueError(f"unknown routing mode: {routing!r}")
    zero_noise = params.sim.shock_mode == "zero-noise"
    T = params.sim.horizon
    if pol_r.horizon != T or pol_a.horizon != T or shocks.draws.shape[0] != T:
        raise ValueError("policies and shocks must cover the full horizon")

    m, L, phi, psi, sigma, aR, aA, r, qR, qA = KERNELS.simulate_forward(
        float(params.sim.m0 if m0 is None else m0),
        np.ascontiguousarray(np.zeros(mk.n_channels) if backlog0 is None
                             else np.asarray(backlog0, dtype=float)),
        float(params.garch.sigma0 if sigma0 is None else sigma0),
        float(q_retail0), float(q_arb0),
        mk.lambda0, mk.gamma_c, mk.delta, mk.impact_vol_sens,
        params.garch.omega, params.garch.alpha, params.garch.beta,
        params.retail.share, params.arb.share,
        np.ascontiguousarray(pol_r.sec_intercept),
        np.ascontiguousarray(pol_r.sec_slope),
        np.ascontiguousarray(pol_a.sec_intercept),
        np.ascontiguousarray(pol_a.sec_slope),
        np.ascontiguousarray(pol_a.prim_intercept),
        np.ascontiguousarray(pol_a.prim_slope),
        shocks.draws, zero_noise,
        routing == "softmax", mk.venue_weights,
        params.retail.kappa0, params.retail.vol_sens_exec,
        params.retail.routing_temperature,
        params.arb.kappa0, params.arb.vol_sens_exec,
        params.arb.routing_temperature,
    )
    return RolloutResult(
        path=MeanFieldPath(m=m, backlog=L, sec_flow=phi, prim_flow=psi, sigma=sigma),
        controls_retail=aR,
        controls_arb=aA,
        controls_prim=r,
        inv_retail=qR,
        inv_arb=qA,
    )


def write_trace_csv(out_path, result: RolloutResult) -> None:
    """One row per time step: states at t plus the flows decided at t.

    The final row (t = T) carries the terminal states with empty flow
    columns. Numbers are written with 17 significant digits.
    """
    path = result.path
    T = path.horizon
    S = path.sec_flow.shape[1]
    C = path.prim_flow.shape[1]
    header = (["t", "m", "sigma"]
              + [f"L_{c + 1}" for c in range(C)]
              + [f"phi_{s + 1}" for s in range(S)]
              + [f"psi_{c + 1}" for c in range(C)]
              + [f"a_R_{s + 1}" for s in range(S)]
              + [f"a_A_{s + 1}" for s in range(S)]
              + [f"r_{c + 1}" for c in range(C)])

    def g(x: float) -> str:
        return FMT % x

    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(T + 1):
            row = [str(t), g(path.m[t]), g(path.sigma[t])]
            row += [g(v) for v in path.backlog[t]]
            if t < T:
                row += [g(v) for v in path.sec_flow[t]]
                row += [g(v) for v in path.prim_flow[t]]
                row += [g(v) for v in result.controls_retail[t]]
                row += [g(v) for v in result.controls_arb[t]]
                row += [g(v) for v in result.controls_prim[t]]
            else:
                row += [""] * (2 * S + 2 * C + S + C)
            w.writerow(row)
