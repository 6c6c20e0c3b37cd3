"""Benchmark the compiled kernels against the pure-Python fallback.

Times the three hot kernels on baseline-sized problems and a full
equilibrium solve with each backend, and checks that both produce
bit-identical results.

Run:  python benchmarks/bench_kernels.py [repeats]
"""

import sys
import time

import numpy as np

import pegmfg.env as env_mod
import pegmfg.lq as lq_mod
from pegmfg import baseline_params
from pegmfg.backend import available_backends
from pegmfg.lq import stage_cost_arrays, zero_policy
from pegmfg.meanfield import MeanFieldPath, ShockStream
from pegmfg.mfe import solve_mfe


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; run `pip install -e .` first")

    params = baseline_params(seed=20230311)
    T = params.sim.horizon
    mf = MeanFieldPath.zeros(T, params.market.n_venues,
                             params.market.n_channels,
                             m0=params.sim.m0, sigma0=params.garch.sigma0)
    arrays = stage_cost_arrays(params, mf, "arb")
    shocks = ShockStream.zeros(T)
    policies = (zero_policy(params, "retail"), zero_policy(params, "arb"))

    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends)
          + f"{'speedup':>10}")
    rows = {}
    for name, mod in backends.items():
        t_bwd, out_bwd = timeit(
            lambda m=mod: m.solve_policy_backward(params.sim.discount, *arrays),
            repeats)
        rows.setdefault("backward_induction", {})[name] = (t_bwd, out_bwd)

        def run_fwd(m=mod):
            saved = env_mod.KERNELS
            env_mod.KERNELS = m
            try:
                return env_mod.rollout(params, policies, shocks)
            finally:
                env_mod.KERNELS = saved
        rows.setdefault("forward_rollout", {})[name] = timeit(run_fwd, repeats)

        pol, _ = lq_mod.best_response(params, mf, "arb")
        t_cost, out_cost = timeit(
            lambda m=mod: m.policy_cost(
                params.sim.discount, *arrays,
                np.ascontiguousarray(pol.sec_intercept),
                np.ascontiguousarray(pol.sec_slope),
                np.ascontiguousarray(pol.prim_intercept),
                np.ascontiguousarray(pol.prim_slope), 0.0),
            repeats)
        rows.setdefault("policy_cost", {})[name] = (t_cost, out_cost)

        def run_solve(m=mod):
            saved_env, saved_lq = env_mod.KERNELS, lq_mod.KERNELS
            env_mod.KERNELS = lq_mod.KERNELS = m
            try:
                return solve_mfe(params)
            finally:
                env_mod.KERNELS, lq_mod.KERNELS = saved_env, saved_lq
        rows.setdefault("solve_mfe (full)", {})[name] = timeit(
            run_solve, max(3, repeats // 50))

    for label, per_backend in rows.items():
        times = {n: t for n, (t, _) in per_backend.items()}
        line = f"{label:<22}" + "".join(
            f"{times[n] * 1e6:>10.1f}us" for n in per_backend)
        if len(times) == 2:
            line += f"{times['pure'] / times['cython']:>9.1f}x"
        print(line)

    if len(backends) == 2:
        a = rows["backward_induction"]["pure"][1]
        b = rows["backward_induction"]["cython"][1]
        identical = all(np.array_equal(x, y) for x, y in zip(a, b))
        ma = rows["solve_mfe (full)"]["pure"][1].mean_field.m
        mb = rows["solve_mfe (full)"]["cython"][1].mean_field.m
        identical = identical and np.array_equal(ma, mb)
        print(f"\nbit-identical results across backends: {identical}")


if __name__ == "__main__":
    main()
