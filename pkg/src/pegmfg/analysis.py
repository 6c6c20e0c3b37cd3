"""Post-equilibrium metrics: AR(1) half-life, flow decomposition, sweeps."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config_io import set_param
from .mfe import solve_mfe
from .meanfield import MeanFieldPath
from .params import ModelParams

__all__ = [
    "HalfLifeEstimate",
    "FlowDecomposition",
    "SweepGrid",
    "ar1_half_life",
    "decompose_flows",
    "sweep",
    "write_sweep_csv",
    "write_decomposition_csv",
]


@dataclass(frozen=True)
class HalfLifeEstimate:
    """AR(1) fit m_t = rho * m_{t-1} + eps_t and its implied half-life.

    ``half_life`` is in series-native steps and populated only when
    0 < rho < 1; ``half_life_hours`` additionally applies the step length
    when one was supplied.
    """

    rho: float
    half_life: float | None
    n_obs: int
    valid: bool
    half_life_hours: float | None = None


def ar1_half_life(series, dt: float | None = None) -> HalfLifeEstimate:
    """Least-squares AR(1) coefficient without intercept and HL = ln2/(-ln rho).

    The regression has no intercept because mispricing is mean-zero around
    the peg by construction.
    """
    m = np.asarray(series, dtype=float)
    if m.size < 3:
        raise ValueError("series too short for an AR(1) fit (need >= 3 points)")
    num = float(np.dot(m[1:], m[:-1]))
    den = float(np.dot(m[:-1], m[:-1]))
    n_obs = m.size - 1
    if den <= 0.0 or not np.isfinite(den) or not np.isfinite(num):
        return HalfLifeEstimate(rho=float("nan"), half_life=None,
                                n_obs=n_obs, valid=False)
    rho = num / den
    if not (0.0 < rho < 1.0):
        return HalfLifeEstimate(rho=rho, half_life=None, n_obs=n_obs, valid=False)
    hl = float(np.log(2.0) / (-np.log(rho)))
    return HalfLifeEstimate(
        rho=rho, half_life=hl, n_obs=n_obs, valid=True,
        half_life_hours=None if dt is None else hl * dt,
    )


@dataclass(frozen=True)
class FlowDecomposition:
    """Integrated peg-reverting flow by channel, signs preserved.

    Negative totals indicate peg-adverse flow. Per-step series already
    include the step length, so they sum to the reported totals.
    """

    primary_total: float
    secondary_total: float
    per_step_primary: np.ndarray   # (T,)
    per_step_secondary: np.ndarray  # (T,)


def decompose_flows(mf: MeanFieldPath, dt: float) -> FlowDecomposition:
    """Integrate aggregate primary and secondary flow over the horizon."""
    per_prim = mf.prim_flow.sum(axis=1) * dt
    per_sec = mf.sec_flow.sum(axis=1) * dt
    return FlowDecomposition(
        primary_total=float(per_prim.sum()),
        secondary_total=float(per_sec.sum()),
        per_step_primary=per_prim,
        per_step_secondary=per_sec,
    )


@dataclass(frozen=True)
class SweepGrid:
    """Half-life (or non-recovery marker) per two-axis parameter cell.

    ``half_life[i, j]`` is NaN exactly where ``recovered[i, j]`` is False
    (equilibrium failed to converge, or the fitted rho fell outside (0, 1)).
    """

    axis1_name: str
    axis1_values: np.ndarray
    axis2_name: str
    axis2_values: np.ndarray
    half_life: np.ndarray   # (n1, n2)
    converged: np.ndarray   # (n1, n2) bool
    recovered: np.ndarray   # (n1, n2) bool


def _sweep_cell(args) -> tuple[int, int, float, bool, bool]:
    params, axis1_name, v1, axis2_name, v2, i, j, routing = args
    cell = set_param(params, axis1_name, v1)
    cell = set_param(cell, axis2_name, v2)
    cell = replace(cell, sim=replace(cell.sim, shock_mode="zero-noise"))
    eq = solve_mfe(cell, routing=routing)
    est = ar1_half_life(eq.mean_field.m)
    ok = eq.converged and est.valid
    return (i, j, est.half_life if ok else float("nan"), eq.converged, ok)


def sweep(params: ModelParams, axis1: tuple[str, np.ndarray],
          axis2: tuple[str, np.ndarray], metric: str = "half_life",
          routing: str = "foc", workers: int = 1) -> SweepGrid:
    """Half-life of the equilibrium mispricing path over a parameter grid.

    Each cell solves the equilibrium at the modified parameters in
    zero-noise mode with the config seed. Cells are independent; results are
    gathered by cell index, so the grid is identical for any worker count.
    Share axes (retail.share / arb.share) renormalize the complementary
    population share.
    """
    if metric != "half_life":
        raise ValueError(f"unsupported sweep metric: {metric!r}")
    name1, grid1 = axis1
    name2, grid2 = axis2
    grid1 = np.asarray(grid1, dtype=float)
    grid2 = np.asarray(grid2, dtype=float)
    # fail fast on unknown parameter names
    set_param(set_param(params, name1, float(grid1[0])), name2, float(grid2[0]))

    jobs = [
        (params, name1, float(v1), name2, float(v2), i, j, routing)
        for i, v1 in enumerate(grid1)
        for j, v2 in enumerate(grid2)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]

    hl = np.full((grid1.size, grid2.size), np.nan)
    conv = np.zeros((grid1.size, grid2.size), dtype=bool)
    rec = np.zeros((grid1.size, grid2.size), dtype=bool)
    for i, j, value, converged, recovered in results:
        hl[i, j] = value
        conv[i, j] = converged
        rec[i, j] = recovered
    return SweepGrid(
        axis1_name=name1, axis1_values=grid1,
        axis2_name=name2, axis2_values=grid2,
        half_life=hl, converged=conv, recovered=rec,
    )


def write_sweep_csv(out_path, grid: SweepGrid) -> None:
    """Plot-ready grid table; the empty half_life field marks non-recovery."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis1_value", "axis2_value", "half_life", "converged"])
        for i, v1 in enumerate(grid.axis1_values):
            for j, v2 in enumerate(grid.axis2_values):
                hl = "%.17g" % grid.half_life[i, j] if grid.recovered[i, j] else ""
                w.writerow(["%.17g" % v1, "%.17g" % v2, hl,
                            "true" if grid.converged[i, j] else "false"])


def write_decomposition_csv(out_path, decomp: FlowDecomposition) -> None:
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "primary_flow", "secondary_flow",
                    "cumulative_primary", "cumulative_secondary"])
        cp = 0.0
        cs = 0.0
        for t in range(decomp.per_step_primary.size):
            cp += decomp.per_step_primary[t]
            cs += decomp.per_step_secondary[t]
            w.writerow([t] + ["%.17g" % v for v in (
                decomp.per_step_primary[t], decomp.per_step_secondary[t], cp, cs)])
