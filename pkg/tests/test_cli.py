"""End-to-end tests for the ``lodens`` command-line interface.

Most cases drive ``lodens.cli.main`` in-process (fast, same code path as
the console script); one class runs the installed entry point in a real
subprocess to pin argv handling and exit codes at the OS level.
"""

import csv
import json
import subprocess
import sys

import pytest

from lodens.cli import main


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def estimate_config(tmp_path, sample_text="0\n0\n", **overrides):
    sample = tmp_path / "sample.csv"
    sample.write_text(sample_text, encoding="utf-8")
    cfg = {
        "sample_file": str(sample),
        "kernel": {"name": "triangular"},
        "point": 0.0,
        "estimator": {"density_sup_bound": 2.0, "threshold_const": 4.0},
    }
    cfg.update(overrides)
    return cfg


def read_csv_report(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    header_meta = [ln for ln in lines if ln.startswith("# ")]
    table = list(csv.reader(ln for ln in lines if not ln.startswith("# ")))
    return header_meta, table[0], table[1:]


class TestEstimateCommand:
    def test_two_zero_rows_hand_value(self, tmp_path, capsys):
        # two observations at the origin, sup bound 2, threshold 4: the
        # widest bandwidth wins and the estimate is exactly 1
        cfg = estimate_config(tmp_path)
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "[estimate] value=1.0" in out
        assert "grid_rows=3" in out and "admissible=3" in out
        assert "fallback=False" in out
        assert "[done] ok" in out

    def test_writes_json_payload(self, tmp_path):
        cfg = estimate_config(tmp_path)
        out_dir = tmp_path / "out"
        rc = main(["estimate", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        assert rc == 0
        payload = json.loads((out_dir / "estimate.json").read_text(encoding="utf-8"))
        assert payload["estimate"] == 1.0
        assert payload["chosen_level"] == [0]
        assert payload["bandwidth"] == [1.0]
        assert payload["fallback"] is False
        assert payload["config"] == cfg  # verbatim echo
        assert payload["version"]

    def test_single_observation_rejected(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path, sample_text="0\n")
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "n >= 2" in capsys.readouterr().err

    def test_empty_sample_rejected(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path, sample_text="")
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "n >= 2" in capsys.readouterr().err

    def test_non_numeric_sample_rejected(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path, sample_text="a,b\nc,d\n")
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "not numeric CSV" in capsys.readouterr().err

    def test_dimension_mismatch_rejected(self, tmp_path, capsys):
        # two-column sample against a one-axis kernel
        cfg = estimate_config(tmp_path, sample_text="0,0\n0.1,0.2\n")
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "2 column(s)" in err and "1 axes" in err

    def test_point_length_mismatch_rejected(self, tmp_path, capsys):
        # two-axis kernel and sample, scalar evaluation point
        cfg = estimate_config(
            tmp_path,
            sample_text="0,0\n0.1,0.2\n",
            kernel={"name": "triangular", "dims": 2},
            point=0.0,
        )
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2

    def test_non_adaptive_kind_rejected(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path)
        cfg["estimator"] = {**cfg["estimator"], "kind": "classical"}
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "adaptive" in capsys.readouterr().err


class TestConfigValidation:
    def test_unknown_top_level_key(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path)
        cfg["bogus"] = 1
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "bogus" in err and "allowed" in err

    def test_unknown_estimator_key(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path)
        cfg["estimator"] = {**cfg["estimator"], "bandwith": 0.1}
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "bandwith" in capsys.readouterr().err

    def test_missing_n_list_names_field(self, tmp_path, capsys):
        cfg = {
            "seed": 1,
            "density": {"name": "triangular"},
            "kernel": {"name": "triangular"},
            "estimator": {"density_sup_bound": 1.2},
            "points": [0.0],
            "replicates": 2,
        }
        rc = main(["risk-sim", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "n_list" in capsys.readouterr().err

    def test_missing_density_sup_bound(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path, estimator={"threshold_const": 4.0})
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "density_sup_bound" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        rc = main(["estimate", "--config", str(bad)])
        assert rc == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["estimate", "--config", str(tmp_path / "absent.json")])
        assert rc == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_non_object_config(self, tmp_path, capsys):
        bad = tmp_path / "list.json"
        bad.write_text("[1, 2]", encoding="utf-8")
        rc = main(["estimate", "--config", str(bad)])
        assert rc == 2
        assert "JSON object" in capsys.readouterr().err

    def test_unknown_kernel_name(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path, kernel={"name": "gaussian"})
        rc = main(["estimate", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "gaussian" in capsys.readouterr().err

    def test_margin_exponent_out_of_range(self, tmp_path, capsys):
        # a beta-Hölder density cannot satisfy the margin condition with
        # beta * gamma > 1; the message explains the constraint
        cfg = {
            "seed": 1,
            "density": {"name": "margin_family", "beta": 2.0, "gamma": 0.9},
            "kernel": {"name": "triangular"},
            "estimator": {"density_sup_bound": 1.2},
            "points": [0.0],
            "n_list": [16, 32],
            "replicates": 2,
        }
        rc = main(["risk-sim", "--config", write_config(tmp_path, cfg)])
        assert rc == 2
        assert "beta * gamma > 1" in capsys.readouterr().err

    def test_output_dir_collision_is_runtime_failure(self, tmp_path, capsys):
        cfg = estimate_config(tmp_path)
        blocker = tmp_path / "blocked"
        blocker.write_text("", encoding="utf-8")
        rc = main(["estimate", "--config", write_config(tmp_path, cfg), "--output-dir", str(blocker)])
        assert rc == 3
        assert "unexpected failure" in capsys.readouterr().err


class TestRiskSimCommand:
    def base_config(self):
        return {
            "seed": 7,
            "density": {"name": "triangular"},
            "kernel": {"name": "triangular"},
            "estimator": {"density_sup_bound": 1.2},
            "points": [0.0],
            "n_list": [16, 32, 64],
            "replicates": 2,
        }

    def test_truth_estimator_has_zero_risk(self, tmp_path, capsys):
        cfg = self.base_config()
        cfg["estimator"] = {**cfg["estimator"], "kind": "truth"}
        out_dir = tmp_path / "out"
        with pytest.warns(UserWarning):
            rc = main(["risk-sim", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        assert rc == 0
        _, header, rows = read_csv_report(out_dir / "risk_sim.csv")
        err_col = header.index("mean_abs_err")
        norm_col = header.index("normalized_risk")
        assert rows and all(float(r[err_col]) == 0.0 for r in rows)
        assert all(float(r[norm_col]) == 0.0 for r in rows)

    def test_output_files_and_provenance(self, tmp_path, capsys):
        cfg = self.base_config()
        out_dir = tmp_path / "out"
        rc = main(["risk-sim", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "[fit]" in out
        meta, header, rows = read_csv_report(out_dir / "risk_sim.csv")
        assert [m.split("=")[0] for m in meta] == ["# version", "# kind", "# seed"]
        assert "# seed=7" in meta
        assert header == [
            "experiment_id", "n", "t", "replicates",
            "mean_abs_err", "normalized_risk", "stderr",
        ]
        assert len(rows) == 3
        assert all(r[0].startswith("risk/adaptive/") for r in rows)

        payload = json.loads((out_dir / "risk_sim_summary.json").read_text(encoding="utf-8"))
        assert payload["config"] == cfg  # round-trip echo
        assert payload["master_seed"] == 7
        assert payload["version"]

        tsv = (out_dir / "risk_sim_plot.tsv").read_text(encoding="utf-8").splitlines()
        assert tsv[0].startswith("# version=")
        assert tsv[1] == "t\tlog_n\tlog_mean_abs_err"
        assert len(tsv) == 2 + len(rows)

    def test_threads_flag_is_deterministic(self, tmp_path):
        cfg = self.base_config()
        blobs = []
        for threads, tag in ((1, "a"), (2, "b")):
            out_dir = tmp_path / tag
            rc = main([
                "risk-sim", "--config", write_config(tmp_path, cfg, f"{tag}.json"),
                "--output-dir", str(out_dir), "--threads", str(threads),
            ])
            assert rc == 0
            blobs.append((out_dir / "risk_sim.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestSupportSimCommand:
    def test_small_run_writes_report(self, tmp_path, capsys):
        cfg = {
            "seed": 2026,
            "density": {"name": "triangular"},
            "kernel": {"name": "triangular"},
            "estimator": {"density_sup_bound": 1.2},
            "n_list": [32, 64, 128],
            "replicates": 2,
            "box": [[-2.0, 2.0]],
            "resolution": 128,
            "offset_const": 0.3,
        }
        out_dir = tmp_path / "out"
        rc = main(["support-sim", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        assert rc == 0
        _, header, rows = read_csv_report(out_dir / "support_sim.csv")
        assert len(rows) == 3
        t_col = header.index("t")
        err_col = header.index("mean_abs_err")
        assert all(r[t_col] == "support" for r in rows)
        # symmetric-difference risks are genuine set measures, not degenerate
        assert all(0.0 < float(r[err_col]) < 4.0 for r in rows)


class TestSupereffSimCommand:
    def test_two_model_report(self, tmp_path, capsys):
        cfg = {
            "seed": 11,
            "kernel": {"name": "triangular"},
            "n_list": [32, 64, 128],
            "replicates": 2,
            "smooth_index": 2.0,
            "rough_index": 0.5,
        }
        out_dir = tmp_path / "out"
        rc = main(["supereff-sim", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        assert rc == 0
        _, header, rows = read_csv_report(out_dir / "supereff_sim.csv")
        assert len(rows) == 6  # two models x three sample sizes
        ids = {r[0] for r in rows}
        assert len(ids) == 2 and all(i.startswith("supereff/") for i in ids)


class TestCalibrateCommand:
    def test_scan_reports_winner(self, tmp_path, capsys):
        cfg = {
            "seed": 5,
            "density": {"name": "triangular"},
            "kernel": {"name": "triangular"},
            "estimator": {"density_sup_bound": 1.2},
            "point": 0.9,
            "n_list": [16, 32, 64],
            "replicates": 2,
            "candidates": [1.0, 4.0],
        }
        out_dir = tmp_path / "out"
        rc = main(["calibrate", "--config", write_config(tmp_path, cfg), "--output-dir", str(out_dir)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "[winner] threshold_const=" in out
        payload = json.loads((out_dir / "calibrate_summary.json").read_text(encoding="utf-8"))
        assert payload["extras"]["winner_threshold_const"] in (1.0, 4.0)
        assert len(payload["rows"]) == 6  # two candidates x three sizes


class TestInstalledEntryPoint:
    """The console script, exercised as a real subprocess."""

    def run(self, *argv):
        return subprocess.run(
            [sys.executable, "-m", "lodens.cli", *argv],
            capture_output=True, text=True, timeout=120,
        )

    def test_estimate_smoke(self, tmp_path):
        cfg = estimate_config(tmp_path)
        proc = self.run("estimate", "--config", write_config(tmp_path, cfg))
        assert proc.returncode == 0
        assert proc.stdout.startswith("[version] lodens ")
        assert "[estimate] value=1.0" in proc.stdout
        assert proc.stdout.rstrip().endswith("[done] ok")

    def test_unknown_command_exits_2(self, tmp_path):
        proc = self.run("frobnicate", "--config", "x.json")
        assert proc.returncode == 2

    def test_missing_config_flag_exits_2(self):
        proc = self.run("estimate")
        assert proc.returncode == 2

    def test_validation_failure_exits_2(self, tmp_path):
        cfg = estimate_config(tmp_path, sample_text="0\n")
        proc = self.run("estimate", "--config", write_config(tmp_path, cfg))
        assert proc.returncode == 2
        assert "[error]" in proc.stderr
