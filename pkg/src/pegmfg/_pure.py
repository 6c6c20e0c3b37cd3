"""Pure-Python kernels: LQ backward induction, forward rollout, policy cost.

These are the hot inner loops of the package. A compiled Cython twin lives in
``pegmfg._kernels``; :mod:`pegmfg.backend` picks whichever is importable.
Both implementations perform the same floating-point operations in the same
order, so results agree bit-for-bit.

All kernels take plain float64 numpy arrays (no model objects) and return
fresh arrays.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "pure"


def solve_policy_backward(gamma, kap, eta, lin_sec, kap_p, prim_pnl, prim_fee):
    """Exact best response to a frozen mean field by backward induction.

    Secondary flows enter the inventory transition; the value function stays
    quadratic, V_t(q) = p_t q^2 + s_t q + k_t with V_T = 0, and the
    secondary first-order conditions share one shadow-price term, so each
    step reduces to a single scalar linear equation in the total secondary
    trade. Primary flows are inventory-neutral par round trips whose routing
    fee applies to routed volume, so their optimum is a per-step
    soft-threshold independent of inventory:

        r_c = -(pnl + fee)/kap_p  if pnl < -fee   (redeem into a discount)
        r_c = -(pnl - fee)/kap_p  if pnl > +fee   (mint into a premium)
        r_c = 0                   otherwise       (fee dead zone)

    contributing only constants to the value recursion.

    Parameters
    ----------
    gamma : float discount factor
    kap : (T, S) volatility-scaled secondary frictions
    eta : (T,) volatility-scaled inventory aversion
    lin_sec : (T, S) linear secondary cost per venue (mispricing + congestion)
    kap_p : (C,) primary frictions (C = 0 for retail)
    prim_pnl : (T, C) signed per-unit conversion profit term (the mispricing)
    prim_fee : (T, C) nonnegative routing fee per unit volume, tau_c(L_t)

    Returns
    -------
    sec_int, sec_slope : (T, S) affine policy coefficients, a = int + slope*q
    prim_int, prim_slope : (T, C); primary slopes are identically zero
    p, s, k : (T+1,) value-function coefficients
    """
    T, S = kap.shape
    C = kap_p.shape[0]
    sec_int = np.zeros((T, S))
    sec_slope = np.zeros((T, S))
    prim_int = np.zeros((T, C))
    prim_slope = np.zeros((T, C))
    p = np.zeros(T + 1)
    s = np.zeros(T + 1)
    k = np.zeros(T + 1)

    for t in range(T - 1, -1, -1):
        pn = p[t + 1]
        sn = s[t + 1]
        kn = k[t + 1]

        H = 0.0
        B = 0.0
        for j in range(S):
            H += 1.0 / kap[t, j]
            B += lin_sec[t, j] / kap[t, j]

        D = 1.0 + 2.0 * gamma * pn * H
        if not (D > 0.0) or not math.isfinite(D):
            raise FloatingPointError(
                f"singular scalar reduction at t={t}: D={D!r} "
                "(requires strictly positive frictions and convex value)"
            )
        u1 = -(2.0 * gamma * pn * H) / D
        u0 = -(B + gamma * H * sn) / D
        g1 = 2.0 * gamma * pn * (1.0 + u1)
        g0 = gamma * (2.0 * pn * u0 + sn)

        A0 = 0.0  # total secondary trade, recomputed from the coefficients
        A1 = 0.0
        for j in range(S):
            b = -g1 / kap[t, j]
            a = -(lin_sec[t, j] + g0) / kap[t, j]
            sec_slope[t, j] = b
            sec_int[t, j] = a
            A0 += a
            A1 += b

        one_A1 = 1.0 + A1
        pt = 0.5 * eta[t] + gamma * pn * one_A1 * one_A1
        st = gamma * (2.0 * pn * one_A1 * A0 + sn * one_A1)
        kt = gamma * (pn * A0 * A0 + sn * A0 + kn)
        for j in range(S):
            b = sec_slope[t, j]
            a = sec_int[t, j]
            pt += 0.5 * kap[t, j] * b * b
            st += lin_sec[t, j] * b + kap[t, j] * a * b
            kt += lin_sec[t, j] * a + 0.5 * kap[t, j] * a * a
        for c in range(C):
            pnl = prim_pnl[t, c]
            fee = prim_fee[t, c]
            if pnl < -fee:
                rc = -(pnl + fee) / kap_p[c]
            elif pnl > fee:
                rc = -(pnl - fee) / kap_p[c]
            else:
                rc = 0.0
            prim_slope[t, c] = 0.0
            prim_int[t, c] = rc
            kt += pnl * rc + fee * abs(rc) + 0.5 * kap_p[c] * rc * rc

        if not (math.isfinite(pt) and math.isfinite(st) and math.isfinite(kt)):
            raise FloatingPointError(
                f"non-finite value coefficients at t={t} (ill-posed parameters)"
            )
        p[t] = pt
        s[t] = st
        k[t] = kt

    return sec_int, sec_slope, prim_int, prim_slope, p, s, k


def _softmax_alloc(weights, costs, temperature, out):
    """Stable softmax allocation: w_s * exp(-temperature*cost_s), normalized."""
    S = weights.shape[0]
    lo = costs[0]
    for j in range(1, S):
        if costs[j] < lo:
            lo = costs[j]
    tot = 0.0
    for j in range(S):
        e = weights[j] * math.exp(-temperature * (costs[j] - lo))
        out[j] = e
        tot += e
    for j in range(S):
        out[j] /= tot


def simulate_forward(
    m0, L0, sigma0, qR0, qA0,
    lambda0, gamma_c, delta, impact_vol_sens,
    omega, alpha, beta,
    pi_R, pi_A,
    R_int, R_slope, A_int, A_slope, P_int, P_slope,
    Z, zero_noise,
    softmax_routing, venue_weights,
    kapR0, cR, betaR, kapA0, cA, betaA,
):
    """Roll the mean field forward under fixed affine policies.

    Per step: evaluate both populations' controls at their representative
    inventories, optionally reallocate each population's total secondary flow
    across venues by softmax of effective venue costs, aggregate flows with
    the population shares, then update mispricing (volatility-scaled impact),
    backlogs, inventories, and the GARCH variance. Primary flows move the
    price and the backlog but, being par round trips, not the arbitrageur
    inventory.

    Returns (m, L, phi, psi, sigma, aR, aA, r, qR, qA); states have T+1
    entries, flows and controls T.
    """
    T, S = R_int.shape
    C = P_int.shape[1]

    m = np.zeros(T + 1)
    L = np.zeros((T + 1, C))
    phi = np.zeros((T, S))
    psi = np.zeros((T, C))
    sigma = np.zeros(T + 1)
    aR = np.zeros((T, S))
    aA = np.zeros((T, S))
    r = np.zeros((T, C))
    qR = np.zeros(T + 1)
    qA = np.zeros(T + 1)

    m[0] = m0
    for c in range(C):
        L[0, c] = L0[c]
    qR[0] = qR0
    qA[0] = qA0
    sig2 = sigma0 * sigma0
    sigma[0] = sigma0

    scratch_cost = np.zeros(S)
    scratch_alloc = np.zeros(S)

    for t in range(T):
        sig = sigma[t]

        for j in range(S):
            aR[t, j] = R_int[t, j] + R_slope[t, j] * qR[t]
            aA[t, j] = A_int[t, j] + A_slope[t, j] * qA[t]
        for c in range(C):
            r[t, c] = P_int[t, c] + P_slope[t, c] * qA[t]

        if softmax_routing:
            totR = 0.0
            totA = 0.0
            for j in range(S):
                totR += aR[t, j]
                totA += aA[t, j]
            for j in range(S):
                scratch_cost[j] = (lambda0[j] * (1.0 + impact_vol_sens[j] * sig)
                                   + kapR0[j] * (1.0 + cR * sig))
            _softmax_alloc(venue_weights, scratch_cost, betaR, scratch_alloc)
            for j in range(S):
                aR[t, j] = totR * scratch_alloc[j]
            for j in range(S):
                scratch_cost[j] = (lambda0[j] * (1.0 + impact_vol_sens[j] * sig)
                                   + kapA0[j] * (1.0 + cA * sig))
            _softmax_alloc(venue_weights, scratch_cost, betaA, scratch_alloc)
            for j in range(S):
                aA[t, j] = totA * scratch_alloc[j]

        eps = 0.0 if zero_noise else sig * Z[t]

        m_next = m[t]
        sumR = 0.0
        sumA = 0.0
        for j in range(S):
            f = pi_R * aR[t, j] + pi_A * aA[t, j]
            phi[t, j] = f
            lam = lambda0[j] * (1.0 + impact_vol_sens[j] * sig)
            m_next += lam * f
            sumR += aR[t, j]
            sumA += aA[t, j]
        for c in range(C):
            g = pi_A * r[t, c]
            psi[t, c] = g
            m_next += gamma_c[c] * g
            L[t + 1, c] = (1.0 - delta[c]) * L[t, c] + g
        m_next += eps

        m[t + 1] = m_next
        qR[t + 1] = qR[t] + sumR
        qA[t + 1] = qA[t] + sumA

        sig2 = omega + alpha * eps * eps + beta * sig2
        sigma[t + 1] = math.sqrt(sig2)

        if not (math.isfinite(m_next) and math.isfinite(qA[t + 1])):
            raise FloatingPointError(
                f"non-finite mean-field update at t={t} (explosive parameters)"
            )

    return m, L, phi, psi, sigma, aR, aA, r, qR, qA


def policy_cost(gamma, kap, eta, lin_sec, kap_p, prim_pnl, prim_fee,
                sec_int, sec_slope, prim_int, prim_slope, q0):
    """Discounted cost of an affine policy along its deterministic path,
    with the mean field frozen."""
    T, S = kap.shape
    C = kap_p.shape[0]
    q = q0
    disc = 1.0
    total = 0.0
    for t in range(T):
        stage = 0.5 * eta[t] * q * q
        du = 0.0
        for j in range(S):
            a = sec_int[t, j] + sec_slope[t, j] * q
            stage += lin_sec[t, j] * a + 0.5 * kap[t, j] * a * a
            du += a
        for c in range(C):
            rc = prim_int[t, c] + prim_slope[t, c] * q
            stage += (prim_pnl[t, c] * rc + prim_fee[t, c] * abs(rc)
                      + 0.5 * kap_p[c] * rc * rc)
        total += disc * stage
        q += du
        disc *= gamma
    return total
