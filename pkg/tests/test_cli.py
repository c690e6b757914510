import subprocess
import sys

import pytest

from fracsfde import __version__
from fracsfde.cli import RunConfig, UsageError, main, operator_checks, parse_config, read_config_file


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_hurst_out_of_range(capsys):
    assert main(["check-conditions", "--H", "0.3"]) == 2
    assert "H must be in (1/2,1)" in capsys.readouterr().err


def test_file_values_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study\nmodel = fou\nn_paths = 50\nquick = yes\nthreads = 2\n")
    c = parse_config(["convergence", "--config", str(cfg), "--n-paths", "70"])
    assert c.n_paths == 70 and c.model == "fou" and c.quick is True and c.threads == 2


def test_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n_pathz = 3\n")
    with pytest.raises(UsageError, match="n_pathz"):
        read_config_file(str(cfg))
    cfg.write_text("n_paths = many\n")
    with pytest.raises(UsageError, match="n_paths"):
        read_config_file(str(cfg))
    cfg.write_text("just words\n")
    with pytest.raises(UsageError):
        read_config_file(str(cfg))


@pytest.mark.parametrize("flags", [["--model", "nope"], ["--T", "-1"], ["--beta", "0.9"],
                                   ["--n-paths", "1"], ["--threads", "-1"], ["--M", "0"]])
def test_range_validation(flags):
    with pytest.raises(UsageError):
        parse_config(["paths"] + flags)


def test_run_config_echo():
    lines = RunConfig("paths").lines()
    assert "seed = 12345" in lines and f"version = {__version__}" in lines


def test_check_conditions_writes_report(tmp_path):
    out = tmp_path / "c"
    code = main(["check-conditions", "--tau", "0.002", "--T", "0.002", "--M", "64",
                 "--out", str(out)])
    assert code == 0
    text = (out / "conditions.txt").read_text()
    assert "passed = True" in text
    assert "command = check-conditions" in (out / "run_config.txt").read_text()
    assert main(["check-conditions", "--out", str(out)]) == 1


def test_paths_dump(tmp_path):
    assert main(["paths", "--quick", "--M", "4", "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "em_000.csv" in files and "fbm_003.csv" in files and "reference_000.csv" in files
    assert (tmp_path / "em_000.csv").read_text().startswith("t,x0\n")


def test_convergence_outputs_and_determinism(tmp_path):
    args = ["convergence", "--n-paths", "60", "--M", "32", "--estimators", "direct",
            "--functions", "cos1,cos2"]
    assert main(args + ["--threads", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--threads", "4", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "convergence.csv").read_bytes()
    assert a == (tmp_path / "b" / "convergence.csv").read_bytes()
    assert b"cos2" in a
    assert "theoretical_order" in (tmp_path / "a" / "summary.txt").read_text()


def test_unwritable_output_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["convergence", "--quick", "--out", str(blocker / "sub")]) == 3
    assert "I/O error" in capsys.readouterr().err


def test_operator_checks_quick_pass_and_fault_hook():
    assert all(ok for *_, ok in operator_checks(quick=True))
    faulty = {name: ok for name, _, _, ok in operator_checks(quick=True, fault="c_H")}
    assert not faulty["covariance H=0.75"]


def test_check_operators_quick_exit_codes(tmp_path):
    assert main(["check-operators", "--quick", "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "operators.csv").read_text().startswith("check,value,tolerance,passed")
    assert main(["check-operators", "--quick", "--fault", "c_H", "--out", str(tmp_path / "bad")]) == 1


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fracsfde.cli", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.strip() == __version__
