import csv
import subprocess
import sys

import pytest

from v2gcosim.cli import main
from v2gcosim.output import PROFILE_COLUMNS, SUMMARY_COLUMNS


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_bounds_table_and_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bounds", "paper_sec5.scn", "--time", "0", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "0.7337" in text and "0.4586" in text
    table = rows(out)
    assert len(table) == 1 + 8 and table[0][0] == "t_s"


def test_profile(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["profile", "paper_sec5.scn", "--out", str(out)]) == 0
    table = rows(out)
    assert tuple(table[0]) == PROFILE_COLUMNS
    assert float(table[1][0]) == 0.0 and float(table[-1][0]) == pytest.approx(4.63)
    dev_end = float(table[-1][7])
    assert dev_end == pytest.approx(80.0, rel=0.1)


def test_profile_explicit_powers(tmp_path):
    out = tmp_path / "p.csv"
    powers = ",".join(["50000"] * 8)
    assert main(["profile", "paper_sec5.scn", "--powers", powers, "--out", str(out)]) == 0
    assert float(rows(out)[-1][7]) < 0  # discharge raises the voltage
    assert main(["profile", "paper_sec5.scn", "--powers", "1,2"]) == 1


def test_profile_infeasible_is_fault(tmp_path):
    powers = ",".join(["-2e6"] * 8)
    assert main(["profile", "paper_sec5.scn", f"--powers={powers}", "--out", str(tmp_path / "p.csv")]) == 2


def test_simulate_happy_path(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "paper_sec5.scn", "--mode", "multi_objective", "--out", str(out),
                 "--horizon", "900", "--plot-data"]) == 0
    for name in ("trace.csv", "voltage.csv", "bounds.csv", "plot_data.csv"):
        assert (out / name).is_file()
    assert len(rows(out / "trace.csv")) == 1 + 9000
    assert len(rows(out / "voltage.csv")) == 1 + 900


def test_sweep_writes_summary(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "paper_sec7.scn", "--param", "df1", "--values", "0.2,0.4,0.8",
                 "--out", str(out), "--workers", "1"]) == 0
    table = rows(out / "summary.csv")
    assert tuple(table[0]) == SUMMARY_COLUMNS and len(table) == 4
    rms = [float(r[2]) for r in table[1:]]
    assert rms == sorted(rms)


def test_sweep_loading_alias_and_fault(tmp_path):
    out = tmp_path / "sw.csv"
    code = main(["sweep", "paper_sec7.scn", "--param", "loading", "--values", "0.1,5.0",
                 "--out", str(out), "--workers", "1"])
    assert code == 2
    table = rows(out)
    assert table[1][0] == "loading_fraction" and table[1][-1] == "" and table[2][-1]


def test_oracle_check(capsys):
    assert main(["oracle-check", "paper_sec5.scn", "--injections", "8", "--trials", "5"]) == 0
    assert "OK" in capsys.readouterr().out
    assert main(["oracle-check", "paper_sec5.scn", "--trials", "2", "--tol", "1e-18"]) == 2


@pytest.mark.parametrize("argv", [
    [], ["frobnicate"], ["simulate"], ["simulate", "paper_sec5.scn", "--mode", "x"],
    ["sweep", "paper_sec5.scn", "--param", "df1"], ["sweep", "paper_sec5.scn", "--param", "df1", "--values", "a,b"],
    ["bounds", "paper_sec5.scn", "--bogus"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_validation_error_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text('name = "x"\n[base]\ns_base_va = 1\n')
    assert main(["bounds", str(bad)]) == 1
    assert main(["bounds", "missing.scn"]) == 1
    assert "error" in capsys.readouterr().err


def test_help_exit_0(capsys):
    assert main(["--help"]) == 0


def test_console_module():
    res = subprocess.run([sys.executable, "-m", "v2gcosim", "bounds", "paper_sec7.scn", "--time", "120"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "0.9230" in res.stdout
