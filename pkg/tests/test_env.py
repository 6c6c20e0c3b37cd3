"""Forward dynamics: GARCH, impact scaling, routing, stepping, rollout."""

import csv
from dataclasses import replace

import numpy as np
import pytest

from pegmfg.env import (
    MarketState,
    garch_step,
    rollout,
    scale_impacts,
    softmax_route,
    step_mean_field,
    write_trace_csv,
)
from pegmfg.lq import AffinePolicy, best_response, zero_policy
from pegmfg.meanfield import ShockStream
from pegmfg.mfe import solve_mfe
from pegmfg.params import GarchParams, with_sim

from conftest import small_params


class TestGarchStep:
    def test_constant_variance_degenerate(self):
        g = GarchParams(omega=0.1, alpha=0.0, beta=0.0, sigma0=0.0)
        assert garch_step(g, 123.0, -4.0) == pytest.approx(0.1, abs=1e-18)

    def test_pure_persistence(self):
        g = GarchParams(omega=0.0, alpha=0.0, beta=1.0, sigma0=0.2)
        assert garch_step(g, 0.04, 0.0) == pytest.approx(0.04, abs=1e-18)

    def test_hand_arithmetic(self):
        g = GarchParams(omega=0.01, alpha=0.1, beta=0.8, sigma0=0.0)
        assert garch_step(g, 0.05, 0.2) == pytest.approx(0.054, abs=1e-15)

    def test_negative_variance_rejected(self):
        g = GarchParams(omega=0.01, alpha=0.1, beta=0.8, sigma0=0.0)
        with pytest.raises(ValueError):
            garch_step(g, -1e-9, 0.0)


class TestScaleImpacts:
    def test_zero_volatility_identity(self):
        p = small_params(S=2)
        assert np.allclose(scale_impacts(p.market, 0.0), p.market.lambda0)

    def test_single_component(self):
        p = small_params(S=2)
        mk = replace(p.market, lambda0=np.array([1.6, 1.8]),
                     impact_vol_sens=np.array([0.5, 0.5]))
        assert scale_impacts(mk, 1.0)[0] == pytest.approx(2.4, abs=1e-15)

    def test_componentwise_baseline(self):
        p = small_params(S=3 if False else 2)
        mk = replace(p.market, lambda0=np.array([1.6, 1.8, 2.5]),
                     impact_vol_sens=np.array([0.2, 0.2, 0.2]),
                     venue_weights=np.array([0.5, 0.35, 0.15]))
        out = scale_impacts(mk, 0.5)
        assert np.allclose(out, [1.76, 1.98, 2.75], atol=1e-12)


class TestSoftmaxRoute:
    def test_symmetry(self):
        out = softmax_route(np.ones(3) / 3, np.ones(3), 2.0)
        assert np.allclose(out, 1 / 3)
        assert out.sum() == pytest.approx(1.0, abs=1e-15)

    def test_temperature_washout(self):
        w = np.array([0.5, 0.3, 0.2])
        out = softmax_route(w, np.array([5.0, 1.0, 3.0]), 1e-12)
        assert np.allclose(out, w, atol=1e-9)

    def test_closed_form_two_venues(self):
        out = softmax_route(np.array([0.5, 0.5]), np.array([1.0, 2.0]), 1.0)
        z = np.exp(-1.0) + np.exp(-2.0)
        assert np.allclose(out, [np.exp(-1.0) / z, np.exp(-2.0) / z], atol=1e-12)

    def test_all_zero_weights(self):
        with pytest.raises(ValueError):
            softmax_route(np.zeros(2), np.ones(2), 1.0)

    def test_extreme_costs_stable(self):
        out = softmax_route(np.array([0.5, 0.5]), np.array([1e6, -1e6]), 10.0)
        assert np.isfinite(out).all() and out.sum() == pytest.approx(1.0)


def constant_policy(T, sec, prim):
    sec = np.tile(np.asarray(sec, dtype=float), (T, 1))
    prim = np.tile(np.asarray(prim, dtype=float).reshape(1, -1), (T, 1))
    return AffinePolicy(sec, np.zeros_like(sec), prim, np.zeros_like(prim))


class TestStepMeanField:
    def test_zero_policies_decay_backlog_only(self):
        p = small_params(T=3, S=2, C=1)
        state = MarketState(m=-0.01, backlog=np.array([0.4]), sigma=0.0,
                            q_retail=0.0, q_arb=0.0)
        res = step_mean_field(p, state,
                              (zero_policy(p, "retail"), zero_policy(p, "arb")),
                              t=0, eps=0.0)
        assert res.state.m == -0.01
        assert res.state.backlog[0] == pytest.approx((1 - 0.5) * 0.4, abs=1e-15)

    def test_full_processing_rate(self):
        p = small_params(T=3, S=2, C=1)
        p = replace(p, market=replace(p.market, delta=np.array([1.0])))
        pol_a = constant_policy(3, [0.0, 0.0], [0.04])
        state = MarketState(m=-0.01, backlog=np.array([7.7]), sigma=0.0,
                            q_retail=0.0, q_arb=0.0)
        res = step_mean_field(p, state, (zero_policy(p, "retail"), pol_a),
                              t=0, eps=0.0)
        assert res.state.backlog[0] == pytest.approx(0.15 * 0.04, abs=1e-15)

    def test_hand_arithmetic_price_update(self):
        # S=1, C=1, lambda=2, gamma_c=1, shares 0.5/0.5, zero volatility
        p = small_params(T=2, S=1, C=1, sigma0=0.0)
        market = replace(p.market, lambda0=np.array([2.0]),
                         gamma_c=np.array([1.0]),
                         impact_vol_sens=np.array([0.0]))
        p = replace(p,
                    market=market,
                    retail=replace(p.retail, share=0.5, kappa0=[2.0]),
                    arb=replace(p.arb, share=0.5, kappa0=[1.2]))
        pol_r = constant_policy(2, [0.01], [])
        pol_r = AffinePolicy(pol_r.sec_intercept, pol_r.sec_slope,
                             np.zeros((2, 0)), np.zeros((2, 0)))
        pol_a = constant_policy(2, [0.02], [0.04])
        state = MarketState(m=-0.01, backlog=np.zeros(1), sigma=0.0,
                            q_retail=0.0, q_arb=0.0)
        res = step_mean_field(p, state, (pol_r, pol_a), t=0, eps=0.0)
        assert res.state.m == pytest.approx(0.04, abs=1e-15)
        assert res.sec_flow[0] == pytest.approx(0.015, abs=1e-16)
        assert res.prim_flow[0] == pytest.approx(0.02, abs=1e-16)


class TestRollout:
    def test_zero_policies_flat_path(self):
        p = small_params(T=5)
        shocks = ShockStream.zeros(5)
        res = rollout(p, (zero_policy(p, "retail"), zero_policy(p, "arb")), shocks)
        assert np.all(res.path.m == p.sim.m0)
        assert np.all(res.path.sec_flow == 0.0)
        assert np.all(res.path.prim_flow == 0.0)

    def test_same_seed_bit_identical(self, baseline):
        p = with_sim(baseline, shock_mode="seeded-noise", seed=99)
        pol = (zero_policy(p, "retail"), zero_policy(p, "arb"))
        shocks = ShockStream.for_mode("seeded-noise", 99, p.sim.horizon)
        shocks2 = ShockStream.for_mode("seeded-noise", 99, p.sim.horizon)
        assert np.array_equal(shocks.draws, shocks2.draws)
        a = rollout(p, pol, shocks)
        b = rollout(p, pol, shocks2)
        assert np.array_equal(a.path.m, b.path.m)
        assert np.array_equal(a.path.sigma, b.path.sigma)

    def test_flow_aggregation_identity(self, baseline):
        eq = solve_mfe(baseline)
        roll = eq.consistency_rollout
        pi_r = baseline.retail.share
        pi_a = baseline.arb.share
        phi = pi_r * roll.controls_retail + pi_a * roll.controls_arb
        psi = pi_a * roll.controls_prim
        assert np.abs(roll.path.sec_flow - phi).max() < 1e-12
        assert np.abs(roll.path.prim_flow - psi).max() < 1e-12

    def test_price_update_conservation(self, baseline):
        eq = solve_mfe(baseline)
        path = eq.consistency_rollout.path
        mk = baseline.market
        for t in range(path.horizon):
            lam = mk.lambda0 * (1.0 + mk.impact_vol_sens * path.sigma[t])
            rebuilt = (path.m[t] + float(lam @ path.sec_flow[t])
                       + float(mk.gamma_c @ path.prim_flow[t]))
            assert abs(path.m[t + 1] - rebuilt) < 1e-12  # eps = 0 in zero-noise

    def test_backlog_recursion_identity(self, baseline):
        eq = solve_mfe(baseline)
        path = eq.consistency_rollout.path
        d = baseline.market.delta
        for t in range(path.horizon):
            expect = (1.0 - d) * path.backlog[t] + path.prim_flow[t]
            assert np.abs(path.backlog[t + 1] - expect).max() < 1e-15

    def test_garch_stationary_monotone_under_zero_noise(self):
        p = small_params(T=30, sigma0=0.1)
        g = p.garch
        var_inf = g.omega / (1.0 - g.beta)
        shocks = ShockStream.zeros(30)
        res = rollout(p, (zero_policy(p, "retail"), zero_policy(p, "arb")), shocks)
        var = res.path.sigma ** 2
        gaps = np.abs(var - var_inf)
        assert np.all(np.diff(gaps) <= 1e-18)

    def test_zero_noise_volatility_recursion(self):
        p = small_params(T=6, sigma0=0.05)
        res = rollout(p, (zero_policy(p, "retail"), zero_policy(p, "arb")),
                      ShockStream.zeros(6))
        sig2 = p.garch.sigma0 ** 2
        for t in range(6):
            sig2 = p.garch.omega + p.garch.beta * sig2
            assert res.path.sigma[t + 1] == pytest.approx(np.sqrt(sig2), abs=1e-15)

    def test_step_matches_rollout(self, baseline):
        pol_r, _ = best_response(baseline, solve_mfe(baseline).mean_field, "retail")
        pol_a, _ = best_response(baseline, solve_mfe(baseline).mean_field, "arb")
        shocks = ShockStream.zeros(baseline.sim.horizon)
        roll = rollout(baseline, (pol_r, pol_a), shocks)
        state = MarketState(m=baseline.sim.m0,
                            backlog=np.zeros(baseline.market.n_channels),
                            sigma=baseline.garch.sigma0,
                            q_retail=0.0, q_arb=0.0)
        for t in range(4):
            res = step_mean_field(baseline, state, (pol_r, pol_a), t, eps=0.0)
            assert res.state.m == pytest.approx(roll.path.m[t + 1], abs=1e-12)
            assert np.allclose(res.sec_flow, roll.path.sec_flow[t], atol=1e-14)
            state = res.state

    def test_softmax_routing_mode_reallocates(self, baseline):
        pol_r, _ = best_response(baseline, solve_mfe(baseline).mean_field, "retail")
        pol_a, _ = best_response(baseline, solve_mfe(baseline).mean_field, "arb")
        shocks = ShockStream.zeros(baseline.sim.horizon)
        foc = rollout(baseline, (pol_r, pol_a), shocks, routing="foc")
        sm = rollout(baseline, (pol_r, pol_a), shocks, routing="softmax")
        # totals per population are preserved at t=0; the split differs
        assert sm.controls_retail[0].sum() == pytest.approx(
            foc.controls_retail[0].sum(), rel=1e-12)
        assert not np.allclose(sm.controls_retail[0], foc.controls_retail[0])

    def test_unknown_routing_mode(self, baseline):
        with pytest.raises(ValueError):
            rollout(baseline, (zero_policy(baseline, "retail"),
                               zero_policy(baseline, "arb")),
                    ShockStream.zeros(baseline.sim.horizon), routing="bogus")


class TestTraceCsv:
    def test_trace_round_trip(self, tmp_path, baseline):
        eq = solve_mfe(baseline)
        out = tmp_path / "trace.csv"
        write_trace_csv(out, eq.consistency_rollout)
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        T = baseline.sim.horizon
        assert len(rows) == T + 1
        flows = [r for r in rows if r["phi_1"] != ""]
        assert len(flows) == T
        m = np.array([float(r["m"]) for r in rows])
        assert np.array_equal(m, eq.consistency_rollout.path.m)
        phi1 = np.array([float(r["phi_1"]) for r in flows])
        assert np.array_equal(phi1, eq.consistency_rollout.path.sec_flow[:, 0])
