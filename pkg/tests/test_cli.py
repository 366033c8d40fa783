"""Command-line interface: config parsing, subcommands, exit codes."""

import csv
import json

import numpy as np
import pytest

from lmgdrive.cli import main, parse_config_file
from lmgdrive.experiments import SWEEP_COLUMNS


def write_config(path, text):
    path.write_text(text)
    return str(path)


class TestConfigFile:
    def test_lists_comments_and_angles(self, tmp_path):
        cfg = parse_config_file(write_config(tmp_path / "sweep.conf", """
            # a tiny grid
            path = second_order
            N = 6, 8
            T_grid = 0.5, 2.0   # two temperatures
            tF_grid = 10.0
            q = 0.1
            theta = pi/2
            force_heom = true
        """))
        assert cfg.path == "second_order"
        assert cfg.N == [6, 8]
        assert cfg.T_grid == [0.5, 2.0]
        assert cfg.theta == [np.pi / 2]
        assert cfg.force_heom is True
        assert cfg.resolved_fidelity_kind == "F2"

    def test_unknown_key(self, tmp_path):
        path = write_config(tmp_path / "bad.conf", "pathh = first_order\n")
        with pytest.raises(ValueError, match="unknown config keys: pathh"):
            parse_config_file(path)

    def test_duplicate_key(self, tmp_path):
        path = write_config(tmp_path / "bad.conf", "q = 0.1\nq = 0.2\n")
        with pytest.raises(ValueError, match="duplicate key 'q'"):
            parse_config_file(path)

    def test_missing_equals(self, tmp_path):
        path = write_config(tmp_path / "bad.conf", "just words\n")
        with pytest.raises(ValueError, match="expected 'key = value'"):
            parse_config_file(path)

    def test_bad_boolean(self, tmp_path):
        path = write_config(tmp_path / "bad.conf", "force_heom = maybe\n")
        with pytest.raises(ValueError, match="not a boolean"):
            parse_config_file(path)


class TestSpectrumCommand:
    def test_writes_table(self, tmp_path):
        out = tmp_path / "scan.csv"
        assert main(["spectrum", "-N", "6", "--points", "51", "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["s", "lambda", "chi"]
        assert len(rows) == 52  # header + 51 samples
        assert len(rows[1]) == 3 + 7 + 1  # coordinates + E_0..E_6 + gap10

    def test_parity_columns(self, tmp_path):
        out = tmp_path / "scan.csv"
        code = main(["spectrum", "--path", "second_order", "-N", "6",
                     "--points", "21", "--parity", "--out", str(out)])
        assert code == 0
        with open(out, newline="") as fh:
            header = next(csv.reader(fh))
        assert header[-1] == "parity_6"

    def test_too_small_system_is_config_error(self, tmp_path, capsys):
        assert main(["spectrum", "-N", "1", "--out", str(tmp_path / "x.csv")]) == 2
        assert "config error" in capsys.readouterr().err


class TestDriveCommand:
    def test_unitary_drive_with_schedule(self, tmp_path, capsys):
        out = tmp_path / "traj.csv"
        sched_out = tmp_path / "sched.csv"
        code = main(["drive", "--solver", "unitary", "-N", "4", "-T", "2.0",
                     "--tF", "2.0", "-q", "0.0", "--out", str(out),
                     "--schedule-out", str(sched_out)])
        assert code == 0
        err = capsys.readouterr().err
        assert "F1 = " in err and "F2 = " in err
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:4] == ["t", "s", "lambda", "chi"]
        assert len(rows) == 122
        with open(sched_out, newline="") as fh:
            sched_rows = list(csv.reader(fh))
        assert sched_rows[0] == ["t", "s", "lambda", "chi", "u", "v"]
        assert len(sched_rows) == 513

    def test_heom_drive(self, tmp_path):
        out = tmp_path / "traj.csv"
        code = main(["drive", "--solver", "heom", "-N", "4", "-T", "3.0",
                     "--tF", "2.0", "-q", "0.3", "--n-outputs", "21",
                     "--out", str(out)])
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 22
        trace = [float(r[4]) for r in rows[1:]]
        assert np.allclose(trace, 1.0, atol=1e-6)

    def test_unstable_integrator_is_solver_error(self, tmp_path, capsys):
        with np.errstate(all="ignore"):
            code = main(["drive", "--solver", "heom", "-N", "4", "-T", "25",
                         "--tF", "5", "-q", "1.0", "--integrator", "rk4",
                         "--fixed-step", "2.0", "--out", str(tmp_path / "x.csv")])
        assert code == 3
        assert "solver error" in capsys.readouterr().err

    def test_oversized_hierarchy_is_resource_error(self, tmp_path, capsys):
        code = main(["drive", "--solver", "heom", "-N", "4", "-T", "2",
                     "--tF", "1", "-q", "0.1", "-M", "60", "-L", "8",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 4
        assert "resource cap" in capsys.readouterr().err


class TestSweepCommand:
    def test_runs_config(self, tmp_path, capsys):
        conf = write_config(tmp_path / "sweep.conf", f"""
            path = first_order
            N = 4
            T_grid = 0.5, 1.0, 2.0, 4.0, 8.0
            tF_grid = 2.0
            q = 0.0
            output_dir = {tmp_path / "out"}
        """)
        assert main(["sweep", "--config", conf]) == 0
        assert "5 records" in capsys.readouterr().err
        assert (tmp_path / "out" / "sweep.csv").exists()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        conf = write_config(tmp_path / "sweep.conf", "solver = magic\n")
        assert main(["sweep", "--config", conf]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["sweep", "--config", str(tmp_path / "nope.conf")]) == 2
        assert "config error" in capsys.readouterr().err


def synthetic_sweep_csv(path):
    """Curves with exact quadratic-in-log10(T) fidelity, vertex at T = 5/N."""
    temps = 10.0 ** np.linspace(-0.8, 1.4, 9)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for n in (6, 8, 10, 12, 14):
            peak = 2.0 / n - 0.8 / n**2
            for t in temps:
                fid = peak - 0.02 * (np.log10(t) - np.log10(5.0 / n)) ** 2
                writer.writerow([
                    "first_order", "A", "heom", n, f"{t:.17g}", "100", "0.1",
                    "0", "0", "5", "3", f"{fid:.17g}", "1e-12", "1.0",
                ])
    return str(path)


class TestFitCommand:
    def test_power_law_on_t_opt(self, tmp_path):
        records = synthetic_sweep_csv(tmp_path / "records.csv")
        out = tmp_path / "fit.json"
        code = main(["fit", "--records", records, "--model", "power",
                     "--quantity", "t_opt", "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["model"] == "power"
        assert payload["sizes"] == [6, 8, 10, 12, 14]
        b, kappa = payload["coefficients"]
        assert np.isclose(b, 5.0, rtol=1e-8)
        assert np.isclose(kappa, 1.0, atol=1e-8)
        assert payload["rms"] < 1e-9

    def test_quadratic_inverse_on_max_f(self, tmp_path):
        records = synthetic_sweep_csv(tmp_path / "records.csv")
        out = tmp_path / "fit.json"
        code = main(["fit", "--records", records, "--model", "quadratic_inverse",
                     "--quantity", "max_f", "--out", str(out)])
        assert code == 0
        b, c = json.loads(out.read_text())["coefficients"]
        assert np.isclose(b, 2.0, atol=1e-8)
        assert np.isclose(c, 0.8, atol=1e-8)

    def test_mixed_curves_exit_2(self, tmp_path, capsys):
        records = synthetic_sweep_csv(tmp_path / "records.csv")
        lines = (tmp_path / "records.csv").read_text().splitlines()
        doctored = lines[1].split(",")
        doctored[5] = "200"  # different tF: a second curve
        (tmp_path / "records.csv").write_text("\n".join(lines + [",".join(doctored)]) + "\n")
        assert main(["fit", "--records", records, "--model", "power"]) == 2
        assert "config error" in capsys.readouterr().err


class TestCompareCommand:
    def test_small_comparison(self, tmp_path):
        conf = write_config(tmp_path / "cmp.conf", """
            path = first_order
            N = 4
            T_grid = 1.0, 3.0
            tF_grid = 5.0
            q = 0.5
            theta = pi/2
            M = 3
            L = 2
            rel_tol = 1e-7
            abs_tol = 1e-9
        """)
        out = tmp_path / "cmp.csv"
        assert main(["compare", "--config", conf, "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["T", "F_heom", "F_lindblad", "abs_diff", "below_gamma_over_2pi"]
        assert len(rows) == 3
        assert [float(r[4]) for r in rows[1:]] == [1.0, 0.0]

    def test_zero_coupling_exit_2(self, tmp_path, capsys):
        conf = write_config(tmp_path / "cmp.conf", """
            N = 4
            T_grid = 1.0, 3.0
            tF_grid = 5.0
            q = 0.0
        """)
        assert main(["compare", "--config", conf, "--out", "-"]) == 2
        assert "config error" in capsys.readouterr().err


def test_missing_subcommand_exits_via_argparse():
    with pytest.raises(SystemExit):
        main([])
