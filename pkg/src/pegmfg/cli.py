"""Command-line entry point: simulate | calibrate | analyze | sweep.

Every run writes a manifest (resolved parameters, seed, input digests,
output list, wall time) next to its outputs; re-running with the manifest's
parameters reproduces the outputs bit-exactly. Exit codes: 0 success,
1 usage/validation error, 2 ran-but-did-not-converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ar1_half_life,
    decompose_flows,
    sweep,
    write_decomposition_csv,
    write_sweep_csv,
)
from .calibration import (
    CalibrationSpec,
    NoEventError,
    calibrate,
    default_free_parameters,
    out_of_sample_eval,
    segment_regimes,
    write_calibration_report,
)
from .config_io import (
    apply_overrides,
    load_params,
    params_to_dict,
    parse_axis_spec,
)
from .klines import parse_klines, to_mispricing
from .meanfield import MeanFieldPath
from .mfe import solve_mfe, write_diagnostics_csv
from .env import write_trace_csv
from .params import validate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get("PEGMFG_OUTDIR", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, params, inputs, outputs,
                    wall: float, extra: dict | None = None) -> Path:
    doc = {
        "command": command,
        "tool_version": __version__,
        "seed": params.sim.seed if params is not None else None,
        "parameters": params_to_dict(params) if params is not None else None,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_time_seconds": wall,
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path


def _load_validated(config: str, overrides) -> tuple:
    """Returns (params, None) or (None, error message)."""
    try:
        params = load_params(config)
        params = apply_overrides(params, overrides or [])
    except (OSError, ValueError, KeyError) as exc:
        return None, str(exc)
    report = validate(params)
    if not report.ok:
        return None, f"invalid configuration:\n{report}"
    return params, None


def cmd_simulate(args) -> int:
    params, err = _load_validated(args.config, args.override)
    if err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    try:
        eq = solve_mfe(params, routing=args.routing)
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    trace = out / "trace.csv"
    diag = out / "diagnostics.csv"
    write_trace_csv(trace, eq.consistency_rollout)
    write_diagnostics_csv(diag, eq.diagnostics)
    _write_manifest(out, "simulate", params, [args.config], [trace, diag],
                    time.perf_counter() - t0,
                    {"converged": eq.converged, "iterations": eq.iterations,
                     "routing": args.routing,
                     "final_max_exploit": eq.final_max_exploit,
                     "final_mf_distance": eq.final_mf_distance})
    print(f"converged={eq.converged} iterations={eq.iterations} "
          f"max_exploit={eq.final_max_exploit:.3g} "
          f"mf_distance={eq.final_mf_distance:.3g}")
    return EXIT_OK if eq.converged else EXIT_NOT_CONVERGED


def _free_specs(args, base):
    if args.free:
        free = []
        for spec in args.free:
            name, lo, hi = spec.split(":")
            free.append((name, float(lo), float(hi)))
        return tuple(free)
    return default_free_parameters(base)


def cmd_calibrate(args) -> int:
    params, err = _load_validated(args.config, args.override)
    if err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.out)
    t0 = time.perf_counter()

    try:
        parsed = parse_klines(args.data, has_header=args.header)
        step_ms = int(round(params.sim.dt * 3_600_000))
        series = to_mispricing(parsed.records, resample_ms=step_ms)
        segmentation = segment_regimes(
            series, depeg_threshold=args.depeg_threshold,
            stable_band=args.stable_band, stable_run=args.stable_run)
    except NoEventError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    outputs = []
    results = {}
    fit_rows = []
    for name, (i0, i1) in segmentation.phases():
        seg_len = i1 - i0 + 1
        if seg_len < 3:
            continue
        seg = type(series)(
            timestamps=series.timestamps[i0:i1 + 1],
            mispricing=series.mispricing[i0:i1 + 1],
            resolution_ms=series.resolution_ms,
        )
        base = replace(params, sim=replace(
            params.sim, horizon=seg_len - 1,
            m0=float(seg.mispricing[0]), shock_mode="zero-noise"))
        spec = CalibrationSpec(
            base_params=base,
            free_parameters=_free_specs(args, base),
            de_population=args.population,
            de_generations=args.generations,
            de_seed=args.de_seed,
        )
        fit = calibrate(spec, seg, workers=args.workers)
        results[name] = {"free": spec.free_parameters, "result": fit}
        eq = solve_mfe(fit.theta_star)
        for j in range(seg_len):
            model_m = eq.mean_field.m[j] if j < eq.mean_field.m.size else ""
            fit_rows.append([name, int(seg.timestamps[j]),
                             "%.17g" % seg.mispricing[j],
                             "%.17g" % model_m if model_m != "" else ""])

    report = out / "calibration_report.json"
    write_calibration_report(report, segmentation, series, results)
    outputs.append(report)

    fitted_csv = out / "fitted_vs_observed.csv"
    with open(fitted_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "timestamp_ms", "observed_m", "model_m"])
        w.writerows(fit_rows)
    outputs.append(fitted_csv)

    if args.splits:
        oos_csv = out / "out_of_sample.csv"
        with open(oos_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["split", "train_rmse", "test_rmse",
                        "train_mae", "test_mae"])
            for split in args.splits:
                base = replace(params, sim=replace(params.sim,
                                                   shock_mode="zero-noise"))
                spec = CalibrationSpec(
                    base_params=base,
                    free_parameters=_free_specs(args, base),
                    de_population=args.population,
                    de_generations=args.generations,
                    de_seed=args.de_seed,
                )
                res = out_of_sample_eval(spec, series, split,
                                         workers=args.workers)
                w.writerow(["%.17g" % split] + ["%.17g" % v for v in (
                    res.train_rmse, res.test_rmse, res.train_mae, res.test_mae)])
        outputs.append(oos_csv)

    _write_manifest(out, "calibrate", params, [args.config, args.data],
                    outputs, time.perf_counter() - t0,
                    {"de_seed": args.de_seed})
    print(f"calibrated {len(results)} regimes -> {report}")
    return EXIT_OK


def _read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    m = np.array([float(r["m"]) for r in rows])
    phi_cols = sorted(c for c in rows[0] if c.startswith("phi_"))
    psi_cols = sorted(c for c in rows[0] if c.startswith("psi_"))
    flows_rows = [r for r in rows if r[phi_cols[0]] != ""]
    phi = np.array([[float(r[c]) for c in phi_cols] for r in flows_rows])
    psi = np.array([[float(r[c]) for c in psi_cols] for r in flows_rows])
    return m, phi, psi


def cmd_analyze(args) -> int:
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    try:
        if args.trace:
            m, phi, psi = _read_trace(args.trace)
            source = args.trace
        else:
            parsed = parse_klines(args.data, has_header=args.header)
            series = to_mispricing(parsed.records)
            m, phi, psi = series.mispricing, None, None
            source = args.data
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    outputs = []
    status = EXIT_OK
    if args.mode == "halflife":
        est = ar1_half_life(m, dt=args.dt)
        doc = {"rho": est.rho, "half_life_steps": est.half_life,
               "half_life_hours": est.half_life_hours,
               "n_obs": est.n_obs, "valid": est.valid}
        path = out / "halflife.json"
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        outputs.append(path)
        print(f"rho={est.rho:.6g} half_life="
              f"{est.half_life if est.valid else 'invalid'}")
        if not est.valid and args.strict:
            status = EXIT_USAGE
    else:
        if phi is None:
            print("error: decompose mode needs --trace with flow columns",
                  file=sys.stderr)
            return EXIT_USAGE
        T = phi.shape[0]
        mf = MeanFieldPath(
            m=m[:T + 1],
            backlog=np.zeros((T + 1, psi.shape[1])),
            sec_flow=phi, prim_flow=psi,
            sigma=np.zeros(T + 1),
        )
        decomp = decompose_flows(mf, dt=args.dt)
        path = out / "decomposition.csv"
        write_decomposition_csv(path, decomp)
        outputs.append(path)
        print(f"primary_total={decomp.primary_total:.6g} "
              f"secondary_total={decomp.secondary_total:.6g}")

    _write_manifest(out, "analyze", None, [source], outputs,
                    time.perf_counter() - t0, {"mode": args.mode})
    return status


def cmd_sweep(args) -> int:
    params, err = _load_validated(args.config, args.override)
    if err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    try:
        axis1 = parse_axis_spec(args.axis1)
        axis2 = parse_axis_spec(args.axis2) if args.axis2 else ("lambda_scale",
                                                                np.array([1.0]))
        grid = sweep(params, axis1, axis2, workers=args.workers)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = out / "sweep.csv"
    write_sweep_csv(path, grid)
    _write_manifest(out, "sweep", params, [args.config], [path],
                    time.perf_counter() - t0,
                    {"axis1": args.axis1, "axis2": args.axis2,
                     "workers": args.workers})
    n_cells = grid.half_life.size
    n_rec = int(grid.recovered.sum())
    print(f"swept {n_cells} cells ({n_rec} recovered) -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pegmfg",
        description="Stablecoin de-peg mean-field game simulator and "
                    "calibration toolkit",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="solve one equilibrium and export traces")
    sim.add_argument("--config", required=True)
    sim.add_argument("--override", action="append", metavar="NAME=VALUE",
                     help="dotted-path parameter override, repeatable")
    sim.add_argument("--routing", choices=["foc", "softmax"], default="foc")
    sim.add_argument("--out", help="output directory (default $PEGMFG_OUTDIR or ./out)")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="segment an observed series and fit "
                                           "per-regime parameters")
    cal.add_argument("--config", required=True)
    cal.add_argument("--data", required=True, help="kline CSV file")
    cal.add_argument("--header", action="store_true",
                     help="first data row is a header")
    cal.add_argument("--override", action="append", metavar="NAME=VALUE")
    cal.add_argument("--depeg-threshold", type=float, default=0.005)
    cal.add_argument("--stable-band", type=float, default=0.001)
    cal.add_argument("--stable-run", type=int, default=60)
    cal.add_argument("--free", action="append", metavar="NAME:LO:HI",
                     help="free parameter with bounds, repeatable "
                          "(default: standard friction/impact/GARCH set)")
    cal.add_argument("--population", type=int, default=None)
    cal.add_argument("--generations", type=int, default=100)
    cal.add_argument("--de-seed", type=int, default=0)
    cal.add_argument("--splits", type=lambda s: [float(x) for x in s.split(",")],
                     default=None, help="comma-separated train fractions for "
                                        "an out-of-sample table")
    cal.add_argument("--workers", type=int, default=1)
    cal.add_argument("--out")
    cal.set_defaults(func=cmd_calibrate)

    ana = sub.add_parser("analyze", help="half-life or flow decomposition of a "
                                         "trace or data file")
    src = ana.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="trace.csv from `pegmfg simulate`")
    src.add_argument("--data", help="kline CSV file")
    ana.add_argument("--header", action="store_true")
    ana.add_argument("--mode", choices=["halflife", "decompose"],
                     default="halflife")
    ana.add_argument("--dt", type=float, default=1.0,
                     help="hours per step for unit conversion/integration")
    ana.add_argument("--strict", action="store_true",
                     help="exit 1 when the AR(1) fit is invalid")
    ana.add_argument("--out")
    ana.set_defaults(func=cmd_analyze)

    sw = sub.add_parser("sweep", help="two-axis half-life sensitivity grid")
    sw.add_argument("--config", required=True)
    sw.add_argument("--override", action="append", metavar="NAME=VALUE")
    sw.add_argument("--axis1", required=True, metavar="NAME:LO:HI:N")
    sw.add_argument("--axis2", metavar="NAME:LO:HI:N")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
