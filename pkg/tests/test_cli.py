"""Command-line contract: flags, files, exit codes, determinism."""

import pytest

from trifocal.cli import main
from trifocal.geometry import CLEVELAND
from trifocal.monodromy import read_start_set


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestHelp:
    @pytest.mark.parametrize("command,flags", [
        ("generate", ["--problem", "--seed", "--out", "--noise-px", "--noise-rad",
                      "--outliers", "--tracks"]),
        ("analyze", ["--problem", "--seed"]),
        ("certify", ["--problem", "--seed", "--out", "--dt0", "--max-corr-steps",
                     "--corr-tol", "--max-steps", "--threads"]),
        ("solve", ["--instance", "--start-set", "--dt0", "--corr-tol"]),
        ("ransac", ["--tracks", "--start-set", "--iters", "--threshold"]),
        ("study-noise", ["--start-set", "--out", "--trials", "--sigmas-px"]),
        ("study-outliers", ["--start-set", "--out", "--ratios"]),
        ("bench", ["--start-set", "--repeat"]),
    ])
    def test_subcommand_help_documents_flags(self, capsys, command, flags):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in flags:
            assert flag in out


class TestGenerate:
    def test_instance_determinism(self, tmp_path, capsys):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        assert run(capsys, "generate", "--problem", "chicago", "--seed", "5",
                   "--out", str(a))[0] == 0
        assert run(capsys, "generate", "--problem", "chicago", "--seed", "5",
                   "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_tracks_with_noise_and_outliers(self, tmp_path, capsys):
        out = tmp_path / "tracks.txt"
        code, stdout, _ = run(
            capsys, "generate", "--tracks", "20", "--seed", "3",
            "--noise-px", "0.5", "--noise-rad", "0.1", "--outliers", "0.25",
            "--out", str(out),
        )
        assert code == 0
        assert "20 tracks" in stdout
        assert out.exists()

    def test_noise_changes_instance(self, tmp_path, capsys):
        clean = tmp_path / "clean.txt"
        noisy = tmp_path / "noisy.txt"
        run(capsys, "generate", "--seed", "5", "--out", str(clean))
        run(capsys, "generate", "--seed", "5", "--noise-px", "0.5",
            "--out", str(noisy))
        assert clean.read_bytes() != noisy.read_bytes()


class TestAnalyze:
    def test_report(self, capsys):
        code, stdout, _ = run(capsys, "analyze", "--problem", "chicago",
                              "--seed", "1")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0] == "balance: 0"
        assert lines[1].startswith("rank-ratio:")
        assert "numerically minimal" in lines[1]


class TestCertify:
    def test_cleveland_certifies(self, tmp_path, capsys):
        out = tmp_path / "cleveland_start.txt"
        code, stdout, _ = run(
            capsys, "certify", "--problem", "cleveland", "--seed", "2",
            "--threads", "2", "--out", str(out),
        )
        assert code == 0
        assert "degree: 216 (complete)" in stdout
        loaded = read_start_set(out)
        assert loaded.kind == CLEVELAND
        assert len(loaded.solutions) == 216


class TestSolve:
    def test_solve_reports_verified_pose(self, tmp_path, capsys,
                                          chicago_start_set_file):
        inst = tmp_path / "inst.txt"
        run(capsys, "generate", "--problem", "chicago", "--seed", "8",
            "--out", str(inst))
        code, stdout, _ = run(
            capsys, "solve", "--instance", str(inst),
            "--start-set", str(chicago_start_set_file), "--threads", "2",
        )
        assert code == 0
        assert "verified" in stdout
        errs = [
            float(part.split()[0])
            for line in stdout.splitlines()
            if "vs ground truth" in line
            for part in [line.split("rot ")[1]]
        ]
        assert min(errs) < 1e-6

    def test_kind_mismatch_exit_code(self, tmp_path, capsys,
                                     chicago_start_set_file):
        inst = tmp_path / "inst.txt"
        run(capsys, "generate", "--problem", "cleveland", "--seed", "8",
            "--out", str(inst))
        code, _, err = run(
            capsys, "solve", "--instance", str(inst),
            "--start-set", str(chicago_start_set_file),
        )
        assert code == 1
        assert "invalid input" in err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "solve", "--instance", str(tmp_path / "nope.txt"),
            "--start-set", str(tmp_path / "nope2.txt"),
        )
        assert code == 1


class TestRansacCommand:
    def test_end_to_end(self, tmp_path, capsys, chicago_start_set_file):
        tracks = tmp_path / "tracks.txt"
        run(capsys, "generate", "--tracks", "15", "--seed", "4",
            "--out", str(tracks))
        code, stdout, _ = run(
            capsys, "ransac", "--tracks", str(tracks),
            "--start-set", str(chicago_start_set_file),
            "--iters", "3", "--early-exit", "0.95", "--threads", "2",
        )
        assert code == 0
        assert "inliers 15/15" in stdout


class TestBench:
    def test_reports_statistics(self, tmp_path, capsys, chicago_start_set_file):
        code, stdout, _ = run(
            capsys, "bench", "--start-set", str(chicago_start_set_file),
            "--repeat", "2", "--threads", "2",
        )
        assert code == 0
        assert "wall time ms:" in stdout
        assert "p90" in stdout


class TestStudies:
    def test_study_noise_small_grid(self, tmp_path, capsys,
                                    chicago_start_set_file):
        out = tmp_path / "noise.csv"
        code, _, _ = run(
            capsys, "study-noise", "--start-set", str(chicago_start_set_file),
            "--out", str(out), "--trials", "1", "--tracks", "10",
            "--iters", "2", "--early-exit", "0.8",
            "--sigmas-px", "0.25", "--sigmas-rad", "0.1",
            "--seed", "9", "--threads", "2",
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == ("seed,sigma_px,sigma_rad,outlier_ratio,rot_err,"
                            "transl_err,mean_reproj,n_real,n_chiral,n_verified")
        assert len(lines) == 3  # one px cell + one rad cell, 1 trial each

    def test_study_outliers_deterministic(self, tmp_path, capsys,
                                          chicago_start_set_file):
        out1 = tmp_path / "o1.csv"
        out2 = tmp_path / "o2.csv"
        for out, threads in ((out1, "1"), (out2, "2")):
            code, _, _ = run(
                capsys, "study-outliers", "--start-set", str(chicago_start_set_file),
                "--out", str(out), "--trials", "1", "--tracks", "12",
                "--iters", "2", "--early-exit", "0.5", "--ratios", "0.25",
                "--seed", "11", "--threads", threads,
            )
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
