# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: LQ backward induction, forward rollout, policy cost.

Twin of pegmfg._pure: same floating-point operations in the same order, so
both backends produce bit-identical results. See _pure.py for the
documented contracts.
"""

from libc.math cimport exp, fabs, isfinite, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"


def solve_policy_backward(double gamma,
                          const double[:, ::1] kap, const double[::1] eta,
                          const double[:, ::1] lin_sec,
                          const double[::1] kap_p,
                          const double[:, ::1] prim_pnl,
                          const double[:, ::1] prim_fee):
    cdef Py_ssize_t T = kap.shape[0]
    cdef Py_ssize_t S = kap.shape[1]
    cdef Py_ssize_t C = kap_p.shape[0]

    sec_int_arr = np.zeros((T, S))
    sec_slope_arr = np.zeros((T, S))
    prim_int_arr = np.zeros((T, max(C, 0)))
    prim_slope_arr = np.zeros((T, max(C, 0)))
    p_arr = np.zeros(T + 1)
    s_arr = np.zeros(T + 1)
    k_arr = np.zeros(T + 1)

    cdef double[:, ::1] sec_int = sec_int_arr
    cdef double[:, ::1] sec_slope = sec_slope_arr
    cdef double[:, ::1] prim_int = prim_int_arr
    cdef double[:, ::1] prim_slope = prim_slope_arr
    cdef double[::1] p = p_arr
    cdef double[::1] s = s_arr
    cdef double[::1] k = k_arr

    cdef Py_ssize_t t, j, c
    cdef double pn, sn, kn, H, B, D, u1, u0, g1, g0
    cdef double A0, A1, a, b, one_A1, pt, st, kt, pnl, fee, rc

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
        if not (D > 0.0) or not isfinite(D):
            raise FloatingPointError(
                f"singular scalar reduction at t={t}: D={D!r} "
                "(requires strictly positive frictions and convex value)"
            )
        u1 = -(2.0 * gamma * pn * H) / D
        u0 = -(B + gamma * H * sn) / D
        g1 = 2.0 * gamma * pn * (1.0 + u1)
        g0 = gamma * (2.0 * pn * u0 + sn)

        A0 = 0.0
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
            kt += pnl * rc + fee * fabs(rc) + 0.5 * kap_p[c] * rc * rc

        if not (isfinite(pt) and isfinite(st) and isfinite(kt)):
            raise FloatingPointError(
                f"non-finite value coefficients at t={t} (ill-posed parameters)"
            )
        p[t] = pt
        s[t] = st
        k[t] = kt

    return (sec_int_arr, sec_slope_arr, prim_int_arr, prim_slope_arr,
            p_arr, s_arr, k_arr)


cdef void _softmax_alloc(const double[::1] weights, const double[::1] costs,
                         double temperature, double[::1] out) noexcept:
    cdef Py_ssize_t S = weights.shape[0]
    cdef Py_ssize_t j
    cdef double lo = costs[0]
    cdef double tot = 0.0
    cdef double e
    for j in range(1, S):
        if costs[j] < lo:
            lo = costs[j]
    for j in range(S):
        e = weights[j] * exp(-temperature * (costs[j] - lo))
        out[j] = e
        tot += e
    for j in range(S):
        out[j] /= tot


def simulate_forward(double m0, const double[::1] L0, double sigma0,
                     double qR0, double qA0,
                     const double[::1] lambda0, const double[::1] gamma_c,
                     const double[::1] delta,
                     const double[::1] impact_vol_sens,
                     double omega, double alpha, double beta,
                     double pi_R, double pi_A,
                     const double[:, ::1] R_int, const double[:, ::1] R_slope,
                     const double[:, ::1] A_int, const double[:, ::1] A_slope,
                     const double[:, ::1] P_int, const double[:, ::1] P_slope,
                     const double[::1] Z, bint zero_noise,
                     bint softmax_routing, const double[::1] venue_weights,
                     const double[::1] kapR0, double cR, double betaR,
                     const double[::1] kapA0, double cA, double betaA):
    cdef Py_ssize_t T = R_int.shape[0]
    cdef Py_ssize_t S = R_int.shape[1]
    cdef Py_ssize_t C = P_int.shape[1]

    m_arr = np.zeros(T + 1)
    L_arr = np.zeros((T + 1, C))
    phi_arr = np.zeros((T, S))
    psi_arr = np.zeros((T, C))
    sigma_arr = np.zeros(T + 1)
    aR_arr = np.zeros((T, S))
    aA_arr = np.zeros((T, S))
    r_arr = np.zeros((T, C))
    qR_arr = np.zeros(T + 1)
    qA_arr = np.zeros(T + 1)
    cost_arr = np.zeros(S)
    alloc_arr = np.zeros(S)

    cdef double[::1] m = m_arr
    cdef double[:, ::1] L = L_arr
    cdef double[:, ::1] phi = phi_arr
    cdef double[:, ::1] psi = psi_arr
    cdef double[::1] sigma = sigma_arr
    cdef double[:, ::1] aR = aR_arr
    cdef double[:, ::1] aA = aA_arr
    cdef double[:, ::1] r = r_arr
    cdef double[::1] qR = qR_arr
    cdef double[::1] qA = qA_arr
    cdef double[::1] scratch_cost = cost_arr
    cdef double[::1] scratch_alloc = alloc_arr

    cdef Py_ssize_t t, j, c
    cdef double sig, sig2, eps, m_next, sumR, sumA, f, g, lam
    cdef double totR, totA

    m[0] = m0
    for c in range(C):
        L[0, c] = L0[c]
    qR[0] = qR0
    qA[0] = qA0
    sig2 = sigma0 * sigma0
    sigma[0] = sigma0

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
        sigma[t + 1] = sqrt(sig2)

        if not (isfinite(m_next) and isfinite(qA[t + 1])):
            raise FloatingPointError(
                f"non-finite mean-field update at t={t} (explosive parameters)"
            )

    return (m_arr, L_arr, phi_arr, psi_arr, sigma_arr,
            aR_arr, aA_arr, r_arr, qR_arr, qA_arr)


def policy_cost(double gamma,
                const double[:, ::1] kap, const double[::1] eta,
                const double[:, ::1] lin_sec,
                const double[::1] kap_p,
                const double[:, ::1] prim_pnl,
                const double[:, ::1] prim_fee,
                const double[:, ::1] sec_int, const double[:, ::1] sec_slope,
                const double[:, ::1] prim_int,
                const double[:, ::1] prim_slope,
                double q0):
    cdef Py_ssize_t T = kap.shape[0]
    cdef Py_ssize_t S = kap.shape[1]
    cdef Py_ssize_t C = kap_p.shape[0]
    cdef Py_ssize_t t, j, c
    cdef double q = q0
    cdef double disc = 1.0
    cdef double total = 0.0
    cdef double stage, du, a, rc

    for t in range(T):
        stage = 0.5 * eta[t] * q * q
        du = 0.0
        for j in range(S):
            a = sec_int[t, j] + sec_slope[t, j] * q
            stage += lin_sec[t, j] * a + 0.5 * kap[t, j] * a * a
            du += a
        for c in range(C):
            rc = prim_int[t, c] + prim_slope[t, c] * q
            stage += (prim_pnl[t, c] * rc + prim_fee[t, c] * fabs(rc)
                      + 0.5 * kap_p[c] * rc * rc)
        total += disc * stage
        q += du
        disc *= gamma
    return total
