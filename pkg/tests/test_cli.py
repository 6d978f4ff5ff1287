import json
import hashlib

import numpy as np
import pytest

from tiltshift.cli import ConfigError, group_shift_direction, main, run
from tiltshift.dataset import Dataset
from tiltshift.geometry import (
    ConstraintSpec,
    GelbrichConstraint,
    single_exposure_direction,
)
from tiltshift.nuisance import ConditionalExposureModel
from tiltshift.simbench import DGPSpec, generate


RIDGE = {"kind": "ridge", "lam": 1e-3}


def write_demo_csv(tmp_path, n=300, seed=0):
    data, _ = generate(DGPSpec(n=n, p=3, q=2), seed=seed)
    path = tmp_path / "demo.csv"
    header = ["x0", "x1", "x2", "w0", "w1", "y"]
    rows = [",".join(format(v, ".10g") for v in np.concatenate([x, w, [y]]))
            for x, w, y in zip(data.X, data.W, data.Y)]
    path.write_text(",".join(header) + "\n" + "\n".join(rows) + "\n")
    return path


def base_config(tmp_path, out_name="out"):
    csv = write_demo_csv(tmp_path)
    return {
        "data": {"path": str(csv), "covariates": ["x0", "x1", "x2"],
                 "exposures": ["w0", "w1"], "outcome": "y"},
        "seed": 11,
        "n_folds": 2,
        "draws": 120,
        "path": "ratio_regression",
        "learners": {"outcome": RIDGE, "exposure_mean": RIDGE,
                     "nu": RIDGE, "eta": RIDGE},
        "gelbrich_targets": [0.1, 0.2],
        "constraint": {"mc_draws": 4000, "fd_step": 1e-3},
        "out": str(tmp_path / out_name),
    }


def read_csv_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config:")
    json.loads(lines[0].removeprefix("# config:"))  # embedded config re-parses
    header = lines[1].split(",")
    return header, [line.split(",") for line in lines[2:]]


class TestEstimateCommand:
    def test_curve_has_zero_row_and_reparses(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "estimate"}
        files = run(config)
        names = {f.name for f in files}
        assert "estimate_curve.csv" in names and "run_manifest.json" in names
        header, rows = read_csv_rows(tmp_path / "out" / "estimate_curve.csv")
        zero = [r for r in rows if float(r[header.index("gelbrich_target")]) == 0.0]
        assert len(zero) == 1
        assert float(zero[0][header.index("theta_hat")]) == 0.0
        targets = sorted(float(r[header.index("gelbrich_target")]) for r in rows)
        assert targets == [0.0, 0.1, 0.2]
        reports = json.loads((tmp_path / "out" / "estimate_reports.json").read_text())
        assert len(reports["reports"]) == 3

    def test_figures_written(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "estimate"}
        files = run(config)
        assert any(f.suffix == ".png" for f in files)

    def test_no_figures_flag(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "estimate",
                  "figures": False}
        files = run(config)
        assert not any(f.suffix == ".png" for f in files)

    def test_single_exposure_mode(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "estimate",
                  "delta": {"mode": "single", "index": 1},
                  "gelbrich_targets": [0.15]}
        run(config)
        header, rows = read_csv_rows(tmp_path / "out" / "estimate_curve.csv")
        assert rows[0][header.index("label")] == "single:w1"


class TestOptimizeCommand:
    def test_winner_dominates_single_paths(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "optimize",
                  "gelbrich_targets": [0.15],
                  "optimize": {"n_starts": 4, "max_iter": 40, "grad_tol": 1e-4,
                               "objective_draws": 120, "compare_paths": True}}
        run(config)
        header, rows = read_csv_rows(tmp_path / "out" / "optimize_path_comparison.csv")
        by_label = {r[header.index("label")]: float(r[header.index("objective")])
                    for r in rows}
        bfgs = by_label.pop("bfgs")
        assert all(bfgs <= v + 1e-8 for v in by_label.values())
        sheader, srows = read_csv_rows(tmp_path / "out" / "optimize_starts.csv")
        assert len(srows) == 4


class TestSensitivityCommand:
    def test_bounds_table_and_contours(self, tmp_path):
        config = {**base_config(tmp_path), "subcommand": "sensitivity",
                  "gelbrich_targets": [0.1, 0.2],
                  "sensitivity": {"eta_y_sq": 0.1, "eta_alpha_sq": 0.1,
                                  "benchmark": True, "contour": True,
                                  "k_y": 1.0, "k_d": 1.0}}
        files = run(config)
        header, rows = read_csv_rows(tmp_path / "out" / "sensitivity_bounds.csv")
        for r in rows:
            lo = float(r[header.index("ci_lo")])
            hi = float(r[header.index("ci_hi")])
            tl = float(r[header.index("theta_lo")])
            th_ = float(r[header.index("theta_hi")])
            est = float(r[header.index("theta_hat")])
            assert lo <= tl <= est <= th_ <= hi
        bheader, brows = read_csv_rows(tmp_path / "out" / "sensitivity_benchmarks.csv")
        assert len(brows) == 3  # one row per covariate


class TestSimulateCommand:
    def test_smoke_writes_seven_row_table(self, tmp_path):
        config = {
            "subcommand": "simulate",
            "seed": 5,
            "n_folds": 2,
            "learners": {"outcome": RIDGE, "exposure_mean": RIDGE,
                         "nu": RIDGE, "eta": RIDGE},
            "simulate": {"reps": 2, "n": 200, "draws": 60,
                         "pipelines": list(__import__("tiltshift.simbench",
                                                      fromlist=["PIPELINES"]).PIPELINES),
                         "designs": ["gaussian/linear"],
                         "truth_draws": 50_000},
            "threads": 1,
            "out": str(tmp_path / "sim"),
        }
        files = run(config)
        header, rows = read_csv_rows(tmp_path / "sim" / "simulate_metrics.csv")
        assert len(rows) == 7
        text = (tmp_path / "sim" / "simulate_metrics.txt").read_text()
        assert "pipeline" in text


class TestDeterminism:
    def test_estimate_byte_identical(self, tmp_path):
        cfg1 = {**base_config(tmp_path, "run1"), "subcommand": "estimate"}
        cfg2 = {**base_config(tmp_path, "run2"), "subcommand": "estimate"}
        cfg2["out"] = str(tmp_path / "run2")
        files1 = sorted(run(cfg1), key=lambda f: f.name)
        files2 = sorted(run(cfg2), key=lambda f: f.name)
        for f1, f2 in zip(files1, files2):
            assert f1.name == f2.name
            b1, b2 = f1.read_bytes(), f2.read_bytes()
            if f1.suffix == ".png":
                assert b1 == b2
            else:
                # config echoes differ only in the out path
                assert b1.replace(b"run1", b"runX") == b2.replace(b"run2", b"runX")


class TestMainEntry:
    def test_missing_config_file_exit_2(self, capsys):
        assert main(["estimate", "--config", "/nonexistent.json"]) == 2

    def test_bad_data_path_exit_2(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"data": {"path": "/no/such.csv",
                                            "covariates": ["a"],
                                            "exposures": ["b"],
                                            "outcome": "y"}}))
        assert main(["estimate", "--config", str(cfg)]) == 2

    def test_runtime_error_exit_3(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("x,w,y\n1,2,3\n1,2,3\n1,2,3\n")  # constant columns
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "data": {"path": str(csv), "covariates": ["x"], "exposures": ["w"],
                     "outcome": "y"},
            "out": str(tmp_path / "o"),
        }))
        assert main(["estimate", "--config", str(cfg)]) == 3

    def test_happy_path_exit_0(self, tmp_path):
        config = {**base_config(tmp_path), "gelbrich_targets": [0.1]}
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        assert main(["estimate", "--config", str(cfg), "--no-figures"]) == 0

    def test_flag_overrides_config_seed(self, tmp_path):
        config = {**base_config(tmp_path), "gelbrich_targets": [0.1]}
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        assert main(["estimate", "--config", str(cfg), "--seed", "77",
                     "--no-figures"]) == 0
        manifest = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
        assert manifest["config"]["seed"] == 77


class TestGroupShiftDirection:
    @pytest.fixture(scope="class")
    def gaussian_constraint(self):
        rng = np.random.default_rng(0)
        n, p, q = 400, 3, 3
        B = rng.normal(size=(p, q)) * 0.4
        Sigma = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])
        X = rng.normal(size=(n, p))
        mean_fns = [(lambda j: (lambda Z: np.atleast_2d(Z) @ B[:, j]))(j)
                    for j in range(q)]
        model = ConditionalExposureModel.from_gaussian(mean_fns, Sigma)
        spec = ConstraintSpec(c=0.25, mc_draws=150_000, seed=3)
        con = GelbrichConstraint(model, X, spec)
        return con, Sigma

    def test_singleton_matches_single_exposure_direction(self, gaussian_constraint):
        con, Sigma = gaussian_constraint
        c = 0.2
        got = group_shift_direction([1], con, c)
        expected = single_exposure_direction(con._baseline.cov, 1, c)
        np.testing.assert_allclose(got, expected, atol=1e-4 * (1 + np.abs(expected).max()))

    def test_full_group_equal_mean_shift(self, gaussian_constraint):
        con, Sigma = gaussian_constraint
        c = 0.2
        got = group_shift_direction([0, 1, 2], con, c)
        shift = con.mean_shift(got)
        assert np.ptp(shift) < 1e-3 * c
        direction = np.linalg.solve(con._baseline.cov, np.ones(3))
        cos = got @ direction / np.linalg.norm(got) / np.linalg.norm(direction)
        assert cos > 0.999

    def test_outside_group_means_fixed(self, gaussian_constraint):
        con, _ = gaussian_constraint
        c = 0.2
        got = group_shift_direction([0, 2], con, c)
        shift = con.mean_shift(got)
        assert abs(shift[1]) < 1e-3 * c
        assert abs(con.value(got) - c * c) < 1e-5 * c * c
        assert shift[0] == pytest.approx(shift[2], abs=1e-3 * c)
