"""End-to-end command-line runs: exit codes, outputs, manifests, determinism."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pegmfg.cli import main

CONFIG = Path(__file__).parent.parent / "configs" / "baseline.toml"
HOUR_MS = 3_600_000


def kline_row(t0, i, close, step_ms=HOUR_MS):
    o, c = close, close
    return f"{t0 + i * step_ms},{o},{max(o, c)},{min(o, c)},{c},1.0"


def write_klines(path, closes, step_ms=HOUR_MS):
    t0 = 1_678_000_000_000
    path.write_text("\n".join(
        kline_row(t0, i, c, step_ms) for i, c in enumerate(closes)) + "\n")


@pytest.fixture()
def v_shape_file(tmp_path):
    down = [1.0 - 0.001 * t for t in range(10)]
    up = [0.99 + 0.001 * k for k in range(11)]
    closes = down + up + [1.0] * 30
    f = tmp_path / "klines.csv"
    write_klines(f, closes)
    return f


class TestSimulate:
    def test_baseline_run(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["simulate", "--config", str(CONFIG), "--out", str(out)])
        assert rc == 0
        with open(out / "trace.csv") as fh:
            rows = list(csv.DictReader(fh))
        flows = [r for r in rows if r["phi_1"] != ""]
        assert len(flows) == 40
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["converged"] is True
        assert set(map(Path, manifest["outputs"])) == {
            out / "trace.csv", out / "diagnostics.csv"}

    def test_invalid_discount_names_field(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(CONFIG),
                   "--override", "sim.discount=1.2",
                   "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "discount" in capsys.readouterr().err

    def test_forced_non_convergence_exits_2_with_outputs(self, tmp_path):
        out = tmp_path / "run"
        rc = main(["simulate", "--config", str(CONFIG),
                   "--override", "sim.max_iters=1", "--out", str(out)])
        assert rc == 2
        assert (out / "trace.csv").exists()
        assert (out / "diagnostics.csv").exists()

    def test_reproducible_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(CONFIG), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(CONFIG), "--out", str(out2)]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "diagnostics.csv").read_bytes() == \
            (out2 / "diagnostics.csv").read_bytes()


class TestCalibrateCmd:
    def test_v_shape_three_regimes(self, tmp_path, v_shape_file):
        out = tmp_path / "cal"
        rc = main(["calibrate", "--config", str(CONFIG),
                   "--data", str(v_shape_file),
                   "--stable-run", "5",
                   "--free", "market.lambda0[0]:0.8:3.2",
                   "--population", "6", "--generations", "3",
                   "--de-seed", "1", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "calibration_report.json").read_text())
        assert set(report["segmentation"]["phases"]) == {"depeg", "recovery",
                                                         "stable"}
        assert set(report["regimes"]) <= {"depeg", "recovery", "stable"}
        for info in report["regimes"].values():
            assert info["loss"] >= 0.0
        assert (out / "fitted_vs_observed.csv").exists()

    def test_flat_file_no_event(self, tmp_path, capsys):
        f = tmp_path / "flat.csv"
        write_klines(f, [1.0] * 80)
        rc = main(["calibrate", "--config", str(CONFIG), "--data", str(f),
                   "--stable-run", "5", "--out", str(tmp_path / "cal")])
        assert rc == 1
        assert "no event found" in capsys.readouterr().err

    def test_out_of_sample_table(self, tmp_path, v_shape_file):
        out = tmp_path / "cal"
        rc = main(["calibrate", "--config", str(CONFIG),
                   "--data", str(v_shape_file),
                   "--stable-run", "5",
                   "--free", "market.lambda0[0]:0.8:3.2",
                   "--population", "6", "--generations", "2",
                   "--splits", "0.7,0.8,0.9", "--out", str(out)])
        assert rc == 0
        with open(out / "out_of_sample.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["split"]) for r in rows] == [0.7, 0.8, 0.9]
        assert all(float(r["test_rmse"]) >= 0 for r in rows)


class TestAnalyzeCmd:
    def test_halflife_of_geometric_fixture(self, tmp_path):
        f = tmp_path / "geo.csv"
        write_klines(f, list(1.0 - 0.01 * 0.5 ** np.arange(40)))
        out = tmp_path / "an"
        rc = main(["analyze", "--data", str(f), "--mode", "halflife",
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "halflife.json").read_text())
        assert doc["valid"] is True
        assert doc["half_life_steps"] == pytest.approx(1.0, abs=1e-9)

    def test_random_walk_strict_mode(self, tmp_path):
        gen = np.random.Generator(np.random.PCG64(8))
        closes = list(1.0 + 0.005 * np.cumsum(gen.standard_normal(300)))
        f = tmp_path / "rw.csv"
        write_klines(f, closes)
        rc = main(["analyze", "--data", str(f), "--mode", "halflife",
                   "--strict", "--out", str(tmp_path / "an")])
        doc = json.loads((tmp_path / "an" / "halflife.json").read_text())
        if not doc["valid"]:
            assert rc == 1
        else:
            assert rc == 0

    def test_decompose_from_trace(self, tmp_path):
        run = tmp_path / "run"
        assert main(["simulate", "--config", str(CONFIG), "--out", str(run)]) == 0
        out = tmp_path / "an"
        rc = main(["analyze", "--trace", str(run / "trace.csv"),
                   "--mode", "decompose", "--out", str(out)])
        assert rc == 0
        with open(out / "decomposition.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 40
        # cumulative columns equal running sums of the per-step columns
        cp = np.cumsum([float(r["primary_flow"]) for r in rows])
        assert cp[-1] == pytest.approx(float(rows[-1]["cumulative_primary"]),
                                       rel=1e-12)


class TestSweepCmd:
    def test_grid_cardinality(self, tmp_path):
        out = tmp_path / "sw"
        rc = main(["sweep", "--config", str(CONFIG),
                   "--override", "sim.max_iters=120", "--override",
                   "sim.damping=0.2",
                   "--axis1", "arb.kappa_p[0]:1:25:13",
                   "--axis2", "retail.kappa0[0]:1:9:5",
                   "--out", str(out)])
        assert rc == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 65

    def test_worker_count_invariance(self, tmp_path):
        outs = []
        for name, workers in (("w1", "1"), ("w2", "2")):
            out = tmp_path / name
            rc = main(["sweep", "--config", str(CONFIG),
                       "--override", "sim.max_iters=120",
                       "--override", "sim.damping=0.2",
                       "--axis1", "arb.kappa_p:2:8:2",
                       "--workers", workers, "--out", str(out)])
            assert rc == 0
            outs.append((out / "sweep.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_parameter_name(self, tmp_path, capsys):
        rc = main(["sweep", "--config", str(CONFIG),
                   "--axis1", "market.bogus:1:2:2",
                   "--out", str(tmp_path / "sw")])
        assert rc == 1
