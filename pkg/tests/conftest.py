import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pegmfg import baseline_params
from pegmfg.meanfield import MeanFieldPath
from pegmfg.params import (
    AgentParams,
    GarchParams,
    MarketParams,
    ModelParams,
    SimConfig,
)

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the test summary."""
    try:
        from test_acceptance import VERDICT_LOG
    except ImportError:
        return
    if VERDICT_LOG:
        terminalreporter.section("acceptance criteria")
        for line in VERDICT_LOG:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def baseline():
    return baseline_params(seed=20230311)


@pytest.fixture()
def flat_field():
    """Frozen mean field: constant mispricing, no flows, constant volatility."""
    def make(params: ModelParams, m: float = None, sigma: float = None):
        return MeanFieldPath.zeros(
            params.sim.horizon, params.market.n_venues, params.market.n_channels,
            m0=params.sim.m0 if m is None else m,
            sigma0=params.garch.sigma0 if sigma is None else sigma,
        )
    return make


def small_params(T=3, S=2, C=1, seed=0, m0=-0.01, gamma=0.95,
                 kappa_r=(2.0, 3.0), kappa_a=(1.2, 1.5), kappa_p=(0.8,),
                 eta_r=0.15, eta_a=0.2, xi_r=0.5, xi_a=0.3,
                 tau0=0.001, theta=0.4, sigma0=0.02,
                 c_r=1.0, d_r=1.0, c_a=0.5, d_a=0.5) -> ModelParams:
    """Small, fully explicit instance for oracle comparisons."""
    lam = [1.6, 1.8, 2.5][:S]
    gc = [2.0, 1.4][:C]
    w = {1: [1.0], 2: [0.6, 0.4], 3: [0.5, 0.35, 0.15]}[S]
    kappa_r = tuple(kappa_r)[:S]
    kappa_a = tuple(kappa_a)[:S]
    kappa_p = tuple(kappa_p)[:C]
    market = MarketParams(
        n_venues=S, n_channels=C,
        lambda0=lam, gamma_c=gc, venue_weights=w,
        delta=[0.5] * C, tau0=[tau0] * C, theta=[theta] * C,
        impact_vol_sens=[0.2] * S,
    )
    retail = AgentParams(share=0.85, kappa0=list(kappa_r), eta0=eta_r, xi=xi_r,
                         kappa_p=[], vol_sens_exec=c_r, vol_sens_inv=d_r,
                         routing_temperature=2.0)
    arb = AgentParams(share=0.15, kappa0=list(kappa_a), eta0=eta_a, xi=xi_a,
                      kappa_p=list(kappa_p), vol_sens_exec=c_a, vol_sens_inv=d_a,
                      routing_temperature=2.0)
    garch = GarchParams(omega=1e-5, alpha=0.1, beta=0.8, sigma0=sigma0)
    sim = SimConfig(horizon=T, discount=gamma, m0=m0, dt=1.0, seed=seed,
                    shock_mode="zero-noise", damping=0.4, max_iters=60,
                    tol_exploit=1e-2, tol_meanfield=1e-6)
    return ModelParams(market=market, retail=retail, arb=arb, garch=garch,
                       sim=sim)


def random_small_params(rng: np.random.Generator) -> ModelParams:
    """Randomized small instance with coefficients at baseline-like scales."""
    T = int(rng.integers(1, 5))
    S = int(rng.integers(1, 3))
    C = int(rng.integers(0, 2))
    return small_params(
        T=T, S=S, C=C,
        m0=float(rng.uniform(-0.02, -0.002)),
        gamma=float(rng.uniform(0.9, 0.99)),
        kappa_r=tuple(rng.uniform(1.0, 5.0, S)),
        kappa_a=tuple(rng.uniform(0.8, 3.0, S)),
        kappa_p=tuple(rng.uniform(0.4, 2.0, C)),
        eta_r=float(rng.uniform(0.05, 0.3)),
        eta_a=float(rng.uniform(0.05, 0.3)),
        xi_r=float(rng.uniform(0.0, 0.8)),
        xi_a=float(rng.uniform(0.0, 0.5)),
        tau0=float(rng.uniform(0.0, 0.002)),
        theta=float(rng.uniform(0.0, 1.0)),
        sigma0=float(rng.uniform(0.0, 0.05)),
        c_r=float(rng.uniform(0.0, 5.0)),
        d_r=float(rng.uniform(0.0, 5.0)),
        c_a=float(rng.uniform(0.0, 3.0)),
        d_a=float(rng.uniform(0.0, 3.0)),
    )


def random_field(params: ModelParams, rng: np.random.Generator) -> MeanFieldPath:
    """Random frozen mean field with plausible magnitudes."""
    T = params.sim.horizon
    S = params.market.n_venues
    C = params.market.n_channels
    return MeanFieldPath(
        m=rng.uniform(-0.02, 0.005, T + 1),
        backlog=rng.uniform(0.0, 0.01, (T + 1, C)),
        sec_flow=rng.uniform(-0.005, 0.01, (T, S)),
        prim_flow=rng.uniform(-0.002, 0.01, (T, C)),
        sigma=rng.uniform(0.0, 0.08, T + 1),
    )
