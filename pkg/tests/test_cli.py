import json

import numpy as np
import pytest

from oversketch import accuracy
from oversketch.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main


def read(path):
    return path.read_bytes()


class TestMultiplyCommand:
    def test_blocked_exact_error_column(self, tmp_path):
        out = tmp_path / "run"
        code = main([
            "multiply", "--scheme", "blocked", "--m", "16", "--n", "16", "--l", "16",
            "--b", "4", "--family", "random", "--seed", "3", "--out", str(out),
        ])
        assert code == EXIT_OK
        rows = (out / "summary.csv").read_text().splitlines()
        header = rows[0].split(",")
        values = rows[1].split(",")
        summary = dict(zip(header, values))
        assert float(summary["error_vs_oracle"]) < 1e-10
        assert summary["cost_divergences"] == ""
        assert (out / "trace.csv").exists() and (out / "waves.json").exists()

    def test_oversketch_ramp_run_writes_result(self, tmp_path):
        out = tmp_path / "run"
        code = main([
            "multiply", "--scheme", "oversketch", "--m", "32", "--n", "192",
            "--l", "32", "--b", "8", "--N", "10", "--e", "2", "--seed", "5",
            "--save-result", "--out", str(out),
        ])
        assert code == EXIT_OK
        from oversketch import load_matrix, ramp_matrix

        product = load_matrix(out / "result.bin")
        a = ramp_matrix(32, 192)
        exact = a @ a.T
        assert np.linalg.norm(product - exact) / np.linalg.norm(exact) < 0.5

    def test_zero_chunk_is_usage_error(self, tmp_path):
        code = main([
            "multiply", "--scheme", "naive", "--m", "8", "--n", "8", "--l", "8",
            "--a", "0", "--out", str(tmp_path),
        ])
        assert code == EXIT_USAGE

    def test_ramp_family_needs_square_output(self, tmp_path):
        code = main([
            "multiply", "--scheme", "naive", "--m", "8", "--n", "8", "--l", "4",
            "--a", "2", "--out", str(tmp_path),
        ])
        assert code == EXIT_USAGE


class TestErrorSweep:
    def test_monotone_trend_and_schema(self, tmp_path):
        out = tmp_path / "sweep"
        code = main([
            "error-sweep", "--m", "32", "--n", "192", "--l", "32", "--b", "8",
            "--z-blocks", "12", "--e-max", "4", "--seeds", "6", "--seed", "2",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = (out / "error_sweep.csv").read_text().splitlines()
        assert lines[0] == "e,keep,mean_error,std_error,seeds"
        means = [float(line.split(",")[2]) for line in lines[1:]]
        assert len(means) == 5
        # statistical trend: last clearly above first
        assert means[-1] > means[0]

    def test_single_seed_warns(self, tmp_path):
        with pytest.warns(UserWarning, match="single-seed"):
            code = main([
                "error-sweep", "--m", "16", "--n", "96", "--l", "16", "--b", "8",
                "--z-blocks", "6", "--e-max", "0", "--seeds", "1", "--out",
                str(tmp_path / "s"),
            ])
        assert code == EXIT_OK

    def test_e0_row_matches_multiply_error(self, tmp_path):
        sweep_out = tmp_path / "sweep"
        mult_out = tmp_path / "mult"
        main([
            "error-sweep", "--m", "16", "--n", "96", "--l", "16", "--b", "8",
            "--z-blocks", "6", "--e-max", "0", "--seeds", "1", "--seed", "9",
            "--out", str(sweep_out),
        ])
        main([
            "multiply", "--scheme", "oversketch", "--m", "16", "--n", "96",
            "--l", "16", "--b", "8", "--N", "6", "--e", "0", "--seed", "9",
            "--out", str(mult_out),
        ])
        sweep_err = float(
            (sweep_out / "error_sweep.csv").read_text().splitlines()[1].split(",")[2]
        )
        summary = (mult_out / "summary.csv").read_text().splitlines()
        mult_err = float(dict(
            zip(summary[0].split(","), summary[1].split(","))
        )["error_vs_oracle"])
        assert sweep_err == pytest.approx(mult_err, rel=1e-12)


class TestCostCompare:
    def test_trends_and_flags(self, tmp_path):
        out = tmp_path / "cc"
        code = main([
            "cost-compare", "--n-range", "2048:16384:4", "--memory", "1000000",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        rows = [
            line.split(",")
            for line in (out / "cost_compare.csv").read_text().splitlines()[1:]
        ]
        by_scheme = {}
        for n, scheme, workers, dollars, _, feasible in rows:
            assert feasible == "1"
            by_scheme.setdefault(scheme, []).append((int(n), float(dollars), int(workers)))
        for (n, naive_d, _), (_, blocked_d, _) in zip(
            by_scheme["naive"], by_scheme["blocked"]
        ):
            assert blocked_d < naive_d
        for (_, _, over_w), (_, _, coded_w) in zip(
            by_scheme["oversketch"], by_scheme["coded"]
        ):
            assert over_w < coded_w

    def test_infeasible_rows_flagged(self, tmp_path):
        out = tmp_path / "cc"
        code = main([
            "cost-compare", "--n-range", "4096:4096:1", "--memory", "100",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        rows = (out / "cost_compare.csv").read_text().splitlines()[1:]
        assert any(row.endswith(",0") for row in rows)


class TestLpCommand:
    def test_small_run_schema(self, tmp_path):
        out = tmp_path / "lp"
        code = main([
            "lp", "--b", "4", "--n", "80", "--m", "12", "--z-blocks", "8",
            "--e-set", "0,1", "--iterations", "5", "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = (out / "lp_iterations.csv").read_text().splitlines()
        assert lines[0].startswith("e,iteration,tau,objective,pct_error")
        tags = {line.split(",")[0] for line in lines[1:]}
        assert tags == {"exact", "0", "1"}

    def test_zero_iterations_header_only(self, tmp_path):
        out = tmp_path / "lp"
        code = main([
            "lp", "--b", "4", "--n", "40", "--m", "8", "--z-blocks", "6",
            "--e-set", "0", "--iterations", "0", "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = (out / "lp_iterations.csv").read_text().splitlines()
        assert len(lines) == 1

    def test_instance_file_round_trip(self, tmp_path):
        from oversketch.lp import make_lp_instance, save_problem

        problem, _ = make_lp_instance(40, 8, seed=3)
        save_problem(tmp_path / "inst.txt", problem)
        out = tmp_path / "lp"
        code = main([
            "lp", "--instance", str(tmp_path / "inst.txt"), "--z-blocks", "5",
            "--b", "8", "--e-set", "0", "--iterations", "3", "--out", str(out),
        ])
        assert code == EXIT_OK


class TestVerifyCommand:
    def test_scaled_down_suites_pass(self, tmp_path):
        code = main([
            "verify", "--trials-scale", "0.2", "--seed", "0",
            "--out", str(tmp_path), "--format", "json",
        ])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "verify.json").read_text())
        assert all(row["passed"] for row in report)

    def test_failure_exit_code(self, tmp_path, monkeypatch):
        # cli resolves run_suites through the accuracy module object
        monkeypatch.setattr(
            accuracy, "run_suites",
            lambda seed=0, trials_scale=1.0: [
                accuracy.SuiteResult("forced", False, "forced failure")
            ],
        )
        code = main(["verify", "--out", str(tmp_path)])
        assert code == EXIT_VERIFY

    def test_low_trials_warns(self, tmp_path):
        with pytest.warns(UserWarning, match="statistical power"):
            main([
                "verify", "--trials-scale", "0.00005", "--out", str(tmp_path),
            ])


class TestConfigAndDeterminism:
    def test_config_file_supplies_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"m": 16, "n": 96, "l": 16, "b": 8, "seed": 4}))
        out = tmp_path / "sweep"
        code = main([
            "error-sweep", "--config", str(cfg), "--z-blocks", "6", "--e-max", "1",
            "--seeds", "2", "--out", str(out),
        ])
        assert code == EXIT_OK
        assert (out / "error_sweep.csv").exists()

    @pytest.mark.parametrize("argv", [
        ["multiply", "--scheme", "blocked", "--m", "12", "--n", "12", "--l", "12",
         "--b", "4", "--family", "random", "--seed", "11"],
        ["error-sweep", "--m", "16", "--n", "96", "--l", "16", "--b", "8",
         "--z-blocks", "6", "--e-max", "2", "--seeds", "3", "--seed", "11"],
        ["cost-compare", "--n-range", "2048:8192:3", "--memory", "500000"],
        ["lp", "--b", "4", "--n", "40", "--m", "8", "--z-blocks", "6",
         "--e-set", "0,1", "--iterations", "4", "--seed", "11"],
    ])
    def test_byte_identical_reruns(self, tmp_path, argv):
        out1, out2 = tmp_path / "one", tmp_path / "two"
        assert main(argv + ["--out", str(out1)]) == EXIT_OK
        assert main(argv + ["--out", str(out2)]) == EXIT_OK
        files1 = sorted(p.name for p in out1.iterdir())
        files2 = sorted(p.name for p in out2.iterdir())
        assert files1 == files2
        for name in files1:
            assert read(out1 / name) == read(out2 / name), name
