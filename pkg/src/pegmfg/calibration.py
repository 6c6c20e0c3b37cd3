"""Regime segmentation and global calibration by differential evolution.

The calibration objective is the mean squared error between the model's
zero-noise equilibrium mispricing path and an observed series, minimized
over a bounded box of free parameters with DE/rand/1/bin. Candidates whose
equilibrium fails to converge receive a large finite penalty so the
population steers away without breaking the optimizer.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config_io import set_param
from .klines import ObservedSeries
from .mfe import solve_mfe
from .params import ModelParams, validate

__all__ = [
    "NoEventError",
    "RegimeSegmentation",
    "CalibrationSpec",
    "CalibrationResult",
    "OutOfSampleResult",
    "segment_regimes",
    "price_loss",
    "calibrate",
    "out_of_sample_eval",
    "default_free_parameters",
    "write_calibration_report",
    "PENALTY_LOSS",
]

log = logging.getLogger("pegmfg.calibration")

PENALTY_LOSS = 1e6


class NoEventError(ValueError):
    """The observed series never crosses the de-peg threshold."""


@dataclass(frozen=True)
class RegimeSegmentation:
    """Partition of an event window into De-peg / Recovery / Stable phases.

    Ranges are inclusive (start, end) index pairs into the observed series;
    ``stable`` is None when the series never settles back inside the band.
    The trough index attains the minimum mispricing of the window.
    """

    depeg: tuple[int, int]
    recovery: tuple[int, int] | None
    stable: tuple[int, int] | None
    trough: int
    depeg_threshold: float
    stable_band: float
    stable_run: int

    def phases(self):
        out = [("depeg", self.depeg)]
        if self.recovery is not None:
            out.append(("recovery", self.recovery))
        if self.stable is not None:
            out.append(("stable", self.stable))
        return out


def segment_regimes(series: ObservedSeries, depeg_threshold: float = 0.005,
                    stable_band: float = 0.001,
                    stable_run: int = 60) -> RegimeSegmentation:
    """Split a mispricing series into De-peg, Recovery, and Stable phases.

    The De-peg phase opens at the first bar below -depeg_threshold and
    closes at the window's global minimum; Recovery runs until the first bar
    opening a ``stable_run``-long streak inside +-stable_band; Stable is the
    remainder (possibly empty, which is reported, not fatal).
    """
    m = series.mispricing
    n = m.size
    if n < stable_run + 2:
        raise ValueError(
            f"series length {n} too short to segment (need >= {stable_run + 2})"
        )
    below = np.nonzero(m < -depeg_threshold)[0]
    if below.size == 0:
        raise NoEventError(
            f"no event found: series never drops below -{depeg_threshold:g}"
        )
    start = int(below[0])
    trough = start + int(np.argmin(m[start:]))

    repeg = None
    inside = np.abs(m) <= stable_band
    run = 0
    # scan backward so `run` counts the streak length starting at each index
    streak = np.zeros(n, dtype=int)
    for i in range(n - 1, trough, -1):
        run = run + 1 if inside[i] else 0
        streak[i] = run
    for i in range(trough + 1, n):
        if streak[i] >= stable_run:
            repeg = i
            break

    if repeg is None:
        recovery = (trough + 1, n - 1) if trough + 1 <= n - 1 else None
        stable = None
    else:
        recovery = (trough + 1, repeg)
        stable = (repeg + 1, n - 1) if repeg + 1 <= n - 1 else None
    return RegimeSegmentation(
        depeg=(start, trough), recovery=recovery, stable=stable, trough=trough,
        depeg_threshold=depeg_threshold, stable_band=stable_band,
        stable_run=stable_run,
    )


def _model_mispricing(params: ModelParams, routing: str = "foc"):
    """Zero-noise equilibrium path for fitting; None when not converged."""
    frozen = replace(params, sim=replace(params.sim, shock_mode="zero-noise"))
    try:
        eq = solve_mfe(frozen, routing=routing)
    except FloatingPointError:
        return None
    if not eq.converged:
        return None
    return eq.mean_field.m


def price_loss(params: ModelParams, observed: ObservedSeries,
               routing: str = "foc", fit_window: int | None = None) -> float:
    """Price-path MSE of the zero-noise equilibrium at ``params``.

    The observed series must already be at the model step; lengths are
    matched by truncating to the shorter. ``fit_window`` additionally caps
    the number of leading observed bars entering the loss (train-only
    fitting). Non-convergent parameter sets return the penalty loss 1e6
    (logged) so DE steers away from them.
    """
    m = _model_mispricing(params, routing)
    if m is None:
        log.debug("price_loss: non-convergent equilibrium, penalty %g applied",
                  PENALTY_LOSS)
        return PENALTY_LOSS
    obs = observed.mispricing
    L = min(m.size - 1, obs.size - 1)
    if fit_window is not None:
        L = min(L, fit_window - 1)
    if L < 1:
        raise ValueError("need at least two observations to compute the loss")
    diff = m[1:L + 1] - obs[1:L + 1]
    return float(np.mean(diff * diff))


@dataclass(frozen=True)
class CalibrationSpec:
    """Free-parameter box plus DE controls over a fixed parameter skeleton."""

    base_params: ModelParams
    free_parameters: tuple[tuple[str, float, float], ...]  # (address, lo, hi)
    de_population: int | None = None   # default max(15, 10*dim)
    de_mutation: float = 0.8
    de_crossover: float = 0.9
    de_generations: int = 100
    de_seed: int = 0
    loss_tolerance: float = 0.0
    fit_window: int | None = None  # leading observed bars entering the loss

    def population_size(self) -> int:
        dim = len(self.free_parameters)
        if self.de_population is not None:
            return self.de_population
        return max(15, 10 * dim)

    def check(self) -> None:
        for name, lo, hi in self.free_parameters:
            if not lo < hi:
                raise ValueError(f"free parameter {name!r}: bounds [{lo}, {hi}] "
                                 "must satisfy lo < hi")
        if self.free_parameters and self.population_size() < 4:
            raise ValueError("DE population must be >= 4 for rand/1 mutation")
        report = validate(self.base_params)
        if not report.ok:
            raise ValueError(f"invalid fixed-parameter skeleton:\n{report}")


@dataclass(frozen=True)
class CalibrationResult:
    theta_star: ModelParams
    loss: float
    loss_history: tuple[float, ...]  # best loss per generation
    evaluations: int
    fitted_values: tuple[float, ...]


def _apply_vector(base: ModelParams, free, vec) -> ModelParams:
    params = base
    for (name, _, _), value in zip(free, vec):
        params = set_param(params, name, float(value))
    return params


def _loss_of_vector(args) -> float:
    base, free, vec, observed, routing, fit_window = args
    return price_loss(_apply_vector(base, free, vec), observed, routing,
                      fit_window)


def default_free_parameters(params: ModelParams,
                            scale: tuple[float, float] = (0.1, 10.0)):
    """Per-regime free set: primary frictions, both secondary friction
    vectors, venue impacts, and the GARCH block, bounded at scale times the
    baseline values."""
    lo_s, hi_s = scale
    free: list[tuple[str, float, float]] = []
    for c in range(params.market.n_channels):
        v = float(params.arb.kappa_p[c])
        free.append((f"arb.kappa_p[{c}]", v * lo_s, v * hi_s))
    for s in range(params.market.n_venues):
        v = float(params.retail.kappa0[s])
        free.append((f"retail.kappa0[{s}]", v * lo_s, v * hi_s))
        v = float(params.arb.kappa0[s])
        free.append((f"arb.kappa0[{s}]", v * lo_s, v * hi_s))
        v = float(params.market.lambda0[s])
        free.append((f"market.lambda0[{s}]", v * lo_s, v * hi_s))
    g = params.garch
    free.append(("garch.omega", g.omega * lo_s, g.omega * hi_s))
    free.append(("garch.alpha", 0.0, min(0.5, g.alpha * hi_s)))
    free.append(("garch.beta", 0.0, 0.98))
    return tuple(free)


def calibrate(spec: CalibrationSpec, observed: ObservedSeries,
              routing: str = "foc", workers: int = 1) -> CalibrationResult:
    """DE/rand/1/bin over the free-parameter box.

    Population initialized uniformly inside the bounds from ``de_seed``;
    mutation v = x_a + F (x_b - x_c) with distinct a, b, c; binomial
    crossover at rate CR with one forced coordinate; proposals clipped to
    the bounds; greedy selection on the price loss. Deterministic for a
    fixed seed regardless of worker count (all random draws happen up
    front each generation, and selection compares by index).
    """
    spec.check()
    free = spec.free_parameters
    dim = len(free)
    if dim == 0:
        loss = price_loss(spec.base_params, observed, routing, spec.fit_window)
        return CalibrationResult(spec.base_params, loss, (loss,), 1, ())

    lo = np.array([b[1] for b in free])
    hi = np.array([b[2] for b in free])
    npop = spec.population_size()
    rng = np.random.Generator(np.random.PCG64(spec.de_seed))
    pop = lo + rng.random((npop, dim)) * (hi - lo)

    def evaluate(vectors) -> np.ndarray:
        jobs = [(spec.base_params, free, vec, observed, routing,
                 spec.fit_window) for vec in vectors]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return np.array(list(pool.map(_loss_of_vector, jobs)))
        return np.array([_loss_of_vector(j) for j in jobs])

    losses = evaluate(pop)
    evaluations = npop
    history = [float(losses.min())]
    penalties = int((losses >= PENALTY_LOSS).sum())

    for _ in range(spec.de_generations):
        if history[-1] <= spec.loss_tolerance:
            break
        trials = np.empty_like(pop)
        for i in range(npop):
            a, b, c = _distinct_indices(rng, npop, i)
            v = pop[a] + spec.de_mutation * (pop[b] - pop[c])
            cross = rng.random(dim) < spec.de_crossover
            cross[rng.integers(dim)] = True
            trial = np.where(cross, v, pop[i])
            trials[i] = np.clip(trial, lo, hi)
        trial_losses = evaluate(trials)
        evaluations += npop
        penalties += int((trial_losses >= PENALTY_LOSS).sum())
        better = trial_losses < losses
        pop[better] = trials[better]
        losses[better] = trial_losses[better]
        history.append(float(losses.min()))

    if penalties:
        log.warning("calibrate: %d of %d candidate evaluations hit the "
                    "non-convergence penalty", penalties, evaluations)
    best = int(np.argmin(losses))
    theta = _apply_vector(spec.base_params, free, pop[best])
    return CalibrationResult(
        theta_star=theta,
        loss=float(losses[best]),
        loss_history=tuple(history),
        evaluations=evaluations,
        fitted_values=tuple(float(x) for x in pop[best]),
    )


def _distinct_indices(rng, npop: int, skip: int) -> tuple[int, int, int]:
    picked: list[int] = []
    while len(picked) < 3:
        j = int(rng.integers(npop))
        if j != skip and j not in picked:
            picked.append(j)
    return picked[0], picked[1], picked[2]


@dataclass(frozen=True)
class OutOfSampleResult:
    split: float
    train_rmse: float
    test_rmse: float
    train_mae: float
    test_mae: float
    result: CalibrationResult


def out_of_sample_eval(spec: CalibrationSpec, observed: ObservedSeries,
                       split: float, routing: str = "foc",
                       workers: int = 1) -> OutOfSampleResult:
    """Calibrate on the first floor(split*n) bars, then continue the fitted
    model over the held-out remainder from the end-of-training state."""
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    n = len(observed)
    n_train = int(math.floor(split * n))
    n_test = n - n_train
    if n_train < 3 or n_test < 1:
        raise ValueError(f"split {split} leaves too few bars "
                         f"(train={n_train}, test={n_test})")

    # fit at the full-series horizon with the loss restricted to the train
    # window: end-of-horizon effects then line up with the continuation
    base = replace(spec.base_params, sim=replace(
        spec.base_params.sim,
        horizon=n - 1,
        m0=float(observed.mispricing[0]),
        shock_mode="zero-noise",
    ))
    fit = calibrate(replace(spec, base_params=base, fit_window=n_train),
                    observed, routing, workers)

    eq_train = solve_mfe(fit.theta_star, routing=routing)
    m_train = eq_train.mean_field.m
    train_err = m_train[1:n_train] - observed.mispricing[1:n_train]

    end = eq_train.consistency_rollout
    theta_test = replace(fit.theta_star, sim=replace(
        fit.theta_star.sim, horizon=n_test))
    eq_test = solve_mfe(
        theta_test, routing=routing,
        m0=float(m_train[n_train - 1]),
        backlog0=eq_train.mean_field.backlog[n_train - 1],
        sigma0=float(eq_train.mean_field.sigma[n_train - 1]),
        q_retail0=float(end.inv_retail[n_train - 1]),
        q_arb0=float(end.inv_arb[n_train - 1]),
    )
    m_test = eq_test.mean_field.m  # m_test[j] aligns with bar n_train-1+j
    test_err = m_test[1:] - observed.mispricing[n_train:]

    return OutOfSampleResult(
        split=split,
        train_rmse=float(np.sqrt(np.mean(train_err ** 2))),
        test_rmse=float(np.sqrt(np.mean(test_err ** 2))),
        train_mae=float(np.mean(np.abs(train_err))),
        test_mae=float(np.mean(np.abs(test_err))),
        result=fit,
    )


def write_calibration_report(out_path, segmentation: RegimeSegmentation,
                             series: ObservedSeries,
                             results: dict) -> None:
    """Structured JSON report: regime windows plus the per-regime fits."""
    doc = {
        "segmentation": {
            "depeg_threshold": segmentation.depeg_threshold,
            "stable_band": segmentation.stable_band,
            "stable_run": segmentation.stable_run,
            "trough_index": segmentation.trough,
            "phases": {
                name: {
                    "start_index": int(rng_[0]),
                    "end_index": int(rng_[1]),
                    "start_timestamp_ms": int(series.timestamps[rng_[0]]),
                    "end_timestamp_ms": int(series.timestamps[rng_[1]]),
                }
                for name, rng_ in segmentation.phases()
            },
        },
        "regimes": {
            name: {
                "free_parameters": [
                    {"name": pname, "lo": lo, "hi": hi, "fitted": fitted}
                    for (pname, lo, hi), fitted in zip(
                        info["free"], info["result"].fitted_values)
                ],
                "loss": info["result"].loss,
                "rmse": math.sqrt(info["result"].loss),
                "evaluations": info["result"].evaluations,
                "loss_history": list(info["result"].loss_history),
            }
            for name, info in results.items()
        },
    }
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
