"""Model parameter types and validation.

Every symbol of the market model lives here as an immutable value object:
market structure (venues, channels, impact coefficients), the two agent
populations (retail and arbitrageur cost structures), the GARCH volatility
block, and simulation control. Invariant checking is report-based via
:func:`validate`, so callers (CLI, calibration) get field-addressed messages
instead of exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

__all__ = [
    "MarketParams",
    "AgentParams",
    "GarchParams",
    "SimConfig",
    "ModelParams",
    "Violation",
    "ValidationReport",
    "validate",
    "baseline_params",
]

SHOCK_MODES = ("zero-noise", "seeded-noise")


def _vec(x) -> np.ndarray:
    """Copy input into a read-only float64 vector."""
    arr = np.array(x, dtype=float).reshape(-1).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MarketParams:
    """Market microstructure: venues, channels, impacts, backlog processing.

    Price-impact units are dollars per unit of aggregate flow; routing costs
    are dollars per unit flow; flows themselves are notional units normalized
    by market size (impact coefficients absorb the scale).
    """

    n_venues: int
    n_channels: int
    lambda0: np.ndarray        # baseline secondary price impact, length S
    gamma_c: np.ndarray        # primary price impact coupling, length C
    venue_weights: np.ndarray  # nonnegative, sums to 1, length S
    delta: np.ndarray          # backlog processing rates in [0, 1], length C
    tau0: np.ndarray           # baseline primary routing cost, length C
    theta: np.ndarray          # backlog-cost slope, length C
    impact_vol_sens: np.ndarray  # per-venue impact volatility sensitivity, length S

    def __post_init__(self):
        for name in ("lambda0", "gamma_c", "venue_weights", "delta", "tau0",
                     "theta", "impact_vol_sens"):
            object.__setattr__(self, name, _vec(getattr(self, name)))


@dataclass(frozen=True)
class AgentParams:
    """Cost structure of one agent population.

    ``kappa_p`` is non-empty only for the arbitrageur type: retail traders
    have no primary-market access.
    """

    share: float               # population fraction
    kappa0: np.ndarray         # baseline secondary execution friction, length S
    eta0: float                # baseline inventory aversion
    xi: float                  # congestion coefficient
    kappa_p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    vol_sens_exec: float = 0.0   # execution-friction volatility sensitivity
    vol_sens_inv: float = 0.0    # inventory-aversion volatility sensitivity
    routing_temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kappa0", _vec(self.kappa0))
        object.__setattr__(self, "kappa_p", _vec(self.kappa_p))

    @property
    def has_primary(self) -> bool:
        return self.kappa_p.size > 0


@dataclass(frozen=True)
class GarchParams:
    """GARCH(1,1) block for the exogenous price-shock variance."""

    omega: float
    alpha: float
    beta: float
    sigma0: float


@dataclass(frozen=True)
class SimConfig:
    """Simulation and equilibrium-solver control."""

    horizon: int = 40
    discount: float = 0.97
    m0: float = -0.01
    dt: float = 1.0            # hours per step
    seed: int = 0
    shock_mode: str = "zero-noise"
    damping: float = 1.0       # fixed-point damping weight in (0, 1]
    max_iters: int = 50
    tol_exploit: float = 1e-2
    tol_meanfield: float = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector for one simulation or calibration run."""

    market: MarketParams
    retail: AgentParams
    arb: AgentParams
    garch: GarchParams
    sim: SimConfig

    def agent(self, tag: str) -> AgentParams:
        """Look up a population by type tag ('retail' or 'arb')."""
        if tag == "retail":
            return self.retail
        if tag == "arb":
            return self.arb
        raise KeyError(f"unknown agent type tag: {tag!r}")


@dataclass(frozen=True)
class Violation:
    field_path: str
    message: str

    def __str__(self) -> str:
        return f"{self.field_path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


class _Collector:
    def __init__(self):
        self.items: list[Violation] = []

    def check(self, cond: bool, path: str, message: str) -> None:
        if not cond:
            self.items.append(Violation(path, message))


def _validate_market(m: MarketParams, out: _Collector) -> None:
    out.check(m.n_venues >= 1, "market.n_venues", "must be a positive integer")
    out.check(m.n_channels >= 0, "market.n_channels", "must be nonnegative")
    lengths = {
        "lambda0": (m.lambda0, m.n_venues),
        "venue_weights": (m.venue_weights, m.n_venues),
        "impact_vol_sens": (m.impact_vol_sens, m.n_venues),
        "gamma_c": (m.gamma_c, m.n_channels),
        "delta": (m.delta, m.n_channels),
        "tau0": (m.tau0, m.n_channels),
        "theta": (m.theta, m.n_channels),
    }
    for name, (vec, want) in lengths.items():
        out.check(vec.size == want, f"market.{name}",
                  f"length {vec.size} inconsistent with declared count {want}")
        out.check(bool(np.all(np.isfinite(vec))), f"market.{name}",
                  "entries must be finite")
        out.check(bool(np.all(vec >= 0)), f"market.{name}",
                  "entries must be nonnegative")
    out.check(bool(np.all(m.delta <= 1.0)), "market.delta",
              "processing rates must lie in [0, 1]")
    if m.venue_weights.size:
        out.check(abs(float(m.venue_weights.sum()) - 1.0) <= 1e-12,
                  "market.venue_weights", "weights must sum to 1 within 1e-12")


def _validate_agent(a: AgentParams, tag: str, market: MarketParams,
                    out: _Collector) -> None:
    pre = tag
    out.check(0.0 <= a.share <= 1.0, f"{pre}.share", "share must lie in [0, 1]")
    out.check(a.kappa0.size == market.n_venues, f"{pre}.kappa0",
              f"length {a.kappa0.size} inconsistent with n_venues {market.n_venues}")
    out.check(bool(np.all(np.isfinite(a.kappa0)) and np.all(a.kappa0 > 0)),
              f"{pre}.kappa0", "execution frictions must be finite and strictly positive")
    out.check(np.isfinite(a.eta0) and a.eta0 >= 0, f"{pre}.eta0",
              "inventory aversion must be finite and nonnegative")
    out.check(np.isfinite(a.xi) and a.xi >= 0, f"{pre}.xi",
              "congestion coefficient must be finite and nonnegative")
    out.check(a.routing_temperature > 0, f"{pre}.routing_temperature",
              "softmax temperature must be strictly positive")
    out.check(a.vol_sens_exec >= 0 and a.vol_sens_inv >= 0,
              f"{pre}.vol_sens", "volatility sensitivities must be nonnegative")
    if tag == "retail":
        out.check(a.kappa_p.size == 0, "retail.kappa_p",
                  "retail type must have empty primary frictions")
    else:
        out.check(a.kappa_p.size == market.n_channels, f"{pre}.kappa_p",
                  f"length {a.kappa_p.size} inconsistent with n_channels "
                  f"{market.n_channels}")
        out.check(bool(np.all(np.isfinite(a.kappa_p)) and np.all(a.kappa_p > 0)),
                  f"{pre}.kappa_p",
                  "primary frictions must be finite and strictly positive")


def _validate_garch(g: GarchParams, out: _Collector) -> None:
    out.check(g.omega >= 0, "garch.omega", "omega must be nonnegative")
    out.check(g.alpha >= 0, "garch.alpha", "alpha must be nonnegative")
    out.check(g.beta >= 0, "garch.beta", "beta must be nonnegative")
    out.check(g.sigma0 >= 0, "garch.sigma0", "initial volatility must be nonnegative")
    out.check(g.alpha + g.beta < 1.0, "garch.alpha+beta",
              f"alpha+beta = {g.alpha + g.beta:g} >= 1 (variance not stationary)")
    if g.sigma0 == 0.0:
        out.check(g.omega > 0, "garch.omega",
                  "omega must be positive when sigma0 = 0")


def _validate_sim(s: SimConfig, out: _Collector) -> None:
    out.check(s.horizon >= 1, "sim.horizon", "horizon must be >= 1")
    out.check(0.0 < s.discount < 1.0, "sim.discount",
              "discount must lie strictly inside (0, 1)")
    out.check(s.dt > 0, "sim.dt", "time step must be positive")
    out.check(s.shock_mode in SHOCK_MODES, "sim.shock_mode",
              f"must be one of {SHOCK_MODES}")
    out.check(0.0 < s.damping <= 1.0, "sim.damping", "damping must lie in (0, 1]")
    out.check(s.max_iters >= 1, "sim.max_iters", "max_iters must be >= 1")
    out.check(s.tol_exploit > 0, "sim.tol_exploit", "tolerance must be positive")
    out.check(s.tol_meanfield > 0, "sim.tol_meanfield", "tolerance must be positive")


def validate(params: ModelParams) -> ValidationReport:
    """Check every type invariant; return an empty report iff all hold.

    Pure: identical input always yields an identical report.
    """
    out = _Collector()
    _validate_market(params.market, out)
    _validate_agent(params.retail, "retail", params.market, out)
    _validate_agent(params.arb, "arb", params.market, out)
    _validate_garch(params.garch, out)
    _validate_sim(params.sim, out)
    out.check(abs(params.retail.share + params.arb.share - 1.0) <= 1e-12,
              "retail.share+arb.share", "population shares must sum to 1 within 1e-12")
    return ValidationReport(tuple(out.items))


def baseline_params(seed: int = 1) -> ModelParams:
    """Baseline de-peg episode calibration (3 venues, 2 primary channels).

    Market-structure, agent-cost, and simulation-control values follow the
    published baseline calibration; the GARCH block, volatility
    sensitivities, backlog costs, and solver controls are package defaults
    for a stressed episode (documented in configs/baseline.toml).
    """
    market = MarketParams(
        n_venues=3,
        n_channels=2,
        lambda0=[1.6, 1.8, 2.5],
        gamma_c=[2.0, 1.4],
        venue_weights=[0.5, 0.35, 0.15],
        delta=[0.5, 0.4],
        tau0=[0.0035, 0.001],
        theta=[0.5, 0.3],
        impact_vol_sens=[0.2, 0.2, 0.2],
    )
    retail = AgentParams(
        share=0.85,
        kappa0=[2.0, 3.0, 4.0],
        eta0=0.15,
        xi=0.5,
        kappa_p=[],
        vol_sens_exec=250.0,
        vol_sens_inv=60.0,
        routing_temperature=4.0,
    )
    arb = AgentParams(
        share=0.15,
        kappa0=[1.2, 1.5, 2.0],
        eta0=0.20,
        xi=0.3,
        kappa_p=[0.8, 0.6],
        vol_sens_exec=150.0,
        vol_sens_inv=3.0,
        routing_temperature=4.0,
    )
    garch = GarchParams(omega=2.24e-4, alpha=0.08, beta=0.86, sigma0=0.04)
    sim = SimConfig(
        horizon=40,
        discount=0.97,
        m0=-0.01,
        dt=1.0,
        seed=seed,
        shock_mode="zero-noise",
        damping=0.36,
        max_iters=50,
        tol_exploit=1e-2,
        tol_meanfield=1e-6,
    )
    return ModelParams(market=market, retail=retail, arb=arb, garch=garch, sim=sim)


def with_sim(params: ModelParams, **changes) -> ModelParams:
    """Convenience: replace SimConfig fields on an otherwise frozen vector."""
    return replace(params, sim=replace(params.sim, **changes))
