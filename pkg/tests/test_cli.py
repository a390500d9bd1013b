import subprocess
import sys

from breakwatch.cli import dispatch


def make_stack_file(tmp_path, name="stack.bts", m=60, n_obs=200, seed=0):
    path = tmp_path / name
    code = dispatch(
        [
            "generate",
            "--m", str(m),
            "--N", str(n_obs),
            "--freq", "23",
            "--noise-std", "0.02",
            "--break-mag", "0.5",
            "--seed", str(seed),
            "--out", str(path),
        ]
    )
    assert code == 0
    return path


class TestGenerateAndMonitor:
    def test_happy_path(self, tmp_path, capsys):
        stack_path = make_stack_file(tmp_path)
        out_path = tmp_path / "breaks.csv"
        code = dispatch(
            [
                "monitor",
                "--input", str(stack_path),
                "--n", "100", "--h", "50", "--k", "3", "--freq", "23",
                "--lambda", "4.9",
                "--out", str(out_path),
            ]
        )
        assert code == 0
        captured = capsys.readouterr()
        assert "lambda: 4.9" in captured.out
        assert "breaks:" in captured.out
        lines = out_path.read_text().splitlines()
        assert lines[0] == "pixel,valid,detected,first_break,max_abs_mo"
        assert len(lines) == 61

    def test_naive_backend_flag(self, tmp_path, capsys):
        stack_path = make_stack_file(tmp_path, m=20)
        out_path = tmp_path / "naive.csv"
        code = dispatch(
            [
                "monitor", "--input", str(stack_path), "--lambda", "4.9",
                "--backend", "naive", "--out", str(out_path),
            ]
        )
        assert code == 0

    def test_profile_appends_phase_lines(self, tmp_path, capsys):
        stack_path = make_stack_file(tmp_path, m=20)
        code = dispatch(
            [
                "monitor", "--input", str(stack_path), "--lambda", "4.9",
                "--profile", "--out", str(tmp_path / "p.csv"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        for name in ("ingest", "model", "predictions", "residuals", "mosum",
                     "breaks", "total"):
            assert f"{name}:" in out

    def test_identical_invocations_write_identical_csvs(self, tmp_path):
        # Uses a small geometry so the automatic critical-value simulation
        # (the seeded default path) stays cheap.
        stack_path = make_stack_file(tmp_path, m=30, n_obs=40)
        args = [
            "monitor", "--input", str(stack_path),
            "--n", "20", "--h", "10", "--k", "1", "--freq", "10",
        ]
        first = tmp_path / "first.csv"
        second = tmp_path / "second.csv"
        assert dispatch(args + ["--out", str(first)]) == 0
        assert dispatch(args + ["--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()


class TestErrorPaths:
    def test_bandwidth_above_history_is_usage_error(self, tmp_path, capsys):
        stack_path = make_stack_file(tmp_path, m=5)
        code = dispatch(
            [
                "monitor", "--input", str(stack_path),
                "--h", "150", "--n", "100",
                "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == 1
        assert "h <= n" in capsys.readouterr().err

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        code = dispatch(
            [
                "monitor", "--input", str(tmp_path / "missing.bts"),
                "--lambda", "4.9", "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == 2
        assert capsys.readouterr().err

    def test_malformed_input_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.bts"
        bad.write_bytes(b"XXXX" + bytes(40))
        code = dispatch(
            ["monitor", "--input", str(bad), "--lambda", "4.9",
             "--out", str(tmp_path / "x.csv")]
        )
        assert code == 2
        assert "magic" in capsys.readouterr().err

    def test_zero_residual_batch_is_numeric_error(self, tmp_path, capsys):
        import numpy as np
        from breakwatch import SeriesStack, regular_axis, write_stack

        flat = tmp_path / "flat.bts"
        write_stack(
            SeriesStack(np.zeros((200, 3), dtype=np.float32), regular_axis(200)),
            flat,
        )
        code = dispatch(
            ["monitor", "--input", str(flat), "--lambda", "4.9",
             "--out", str(tmp_path / "x.csv")]
        )
        assert code == 3
        assert "sigma" in capsys.readouterr().err

    def test_unknown_flag_rejected(self, tmp_path, capsys):
        code = dispatch(["generate", "--m", "5", "--N", "20", "--frobnicate",
                         "--out", str(tmp_path / "x.bts")])
        assert code == 1
        assert "--frobnicate" in capsys.readouterr().err

    def test_missing_subcommand(self, capsys):
        assert dispatch([]) == 1

    def test_bad_m_list(self, tmp_path, capsys):
        code = dispatch(["bench", "--m-list", "10,oops",
                         "--out", str(tmp_path / "b.csv")])
        assert code == 1
        assert "m-list" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert dispatch(["--help"]) == 0


class TestCriticalValueCommand:
    def test_prints_lambda(self, capsys):
        code = dispatch(
            [
                "critical-value", "--alpha", "0.05", "--h-frac", "0.5",
                "--horizon", "2", "--n-sim", "30", "--reps", "1000",
                "--seed", "9",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("lambda: ")
        assert float(out.split()[1]) > 0

    def test_invalid_request_is_usage_error(self, capsys):
        code = dispatch(["critical-value", "--alpha", "2.0", "--reps", "1000"])
        assert code == 1


class TestBenchCommand:
    def test_writes_csv(self, tmp_path, capsys):
        out_path = tmp_path / "bench.csv"
        code = dispatch(
            [
                "bench", "--m-list", "200,600", "--n", "20", "--h", "10",
                "--k", "1", "--freq", "10", "--seed", "4",
                "--out", str(out_path),
            ]
        )
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert lines[0] == "m,ingest,model,predictions,residuals,mosum,breaks,total"
        assert len(lines) == 3
        assert capsys.readouterr().out.count("m=") == 2


def test_console_entry_point_runs():
    result = subprocess.run(
        [sys.executable, "-m", "breakwatch.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "generate" in result.stdout
