import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from aicsim.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main
from aicsim.output import read_trajectory_csv, trajectory_columns

DIVERGING = """\
name: bad_mrac
duration: 30.0
noise: {std_q: 0.001, std_qd: 0.01}
plant: {preset: deployment_2link}
controller:
  kind: mrac
  E01: 0
  E02: 0
  E11: 0
  E12: 0
  F01: 0
  F02: 0
  F11: 0
  F12: 0
  alpha1: 40
  alpha2: 300
  P3: 0.02
schedule: {cycle: pick_place}
"""


@pytest.fixture(scope="module")
def pick_place_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("pp")
    code = main(["-q", "run", "pick_place_aic", "--out", str(out)])
    return code, out


def test_run_bundled_preset(pick_place_run):
    code, out = pick_place_run
    assert code == EXIT_OK
    metrics = json.loads((out / "metrics.json").read_text())
    assert len(metrics["segments"]) == 5
    assert metrics["all_settled"] and not metrics["diverged"]
    assert metrics["parameter_count"] == 6
    header, data = read_trajectory_csv(out / "trajectory.csv")
    assert header == trajectory_columns(2)
    assert data.shape == (30_000, len(header))
    assert np.all(np.isnan(data[:, header.index("step_us")]))
    assert set(np.unique(data[:, header.index("setpoint")])) == {0, 1, 2, 3, 4}
    assert "q_C" in (out / "summary.txt").read_text()


def test_column_order():
    assert trajectory_columns(1) == ["t", "q_0", "qd_0", "y_q_0", "y_qd_0", "mu_0", "mu_p_0", "mu_pp_0", "u_0", "F", "setpoint", "step_us"]


def test_nine_significant_digits(pick_place_run):
    _, out = pick_place_run
    with (out / "trajectory.csv").open() as f:
        rows = list(csv.reader(f))[1:200]
    digits = [len(c.lstrip("-").split("e")[0].replace(".", "").lstrip("0")) for r in rows for c in r if c not in ("nan", "0")]
    assert max(digits) == 9


def test_seed_override_changes_only_noise_columns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["-q", "run", "pick_place_mrac", "--duration", "1", "--out", str(a)]) == 0
    assert main(["-q", "run", "pick_place_mrac", "--duration", "1", "--seed", "5", "--out", str(b)]) == 0
    ha, da = read_trajectory_csv(a / "trajectory.csv")
    hb, db = read_trajectory_csv(b / "trajectory.csv")
    assert ha == hb and da.shape == db.shape
    for name in ("t", "setpoint"):
        np.testing.assert_array_equal(da[:, ha.index(name)], db[:, hb.index(name)])
    assert not np.array_equal(da[:, ha.index("y_q_0")], db[:, hb.index("y_q_0")])


def test_missing_file(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "cfg.yaml"
    assert main(["run", str(missing)]) == EXIT_IO
    assert str(missing) in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("duration: 1\ncontroller:\n  kind: pid\nschedule: {cycle: pick_place}\n")
    assert main(["run", str(p)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 3" in err and "controller.kind" in err


def test_divergence_exit(tmp_path, capsys):
    p = tmp_path / "bad_mrac.yaml"
    p.write_text(DIVERGING)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
    assert "safety stop" in capsys.readouterr().err
    metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert metrics["diverged"] and metrics["stop_time"] > 0
    # partial log still written
    _, data = read_trajectory_csv(tmp_path / "o" / "trajectory.csv")
    assert 0 < data.shape[0] < 30_000


def test_output_dir_not_writable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["-q", "run", "pick_place_aic", "--duration", "0.1", "--out", str(blocker / "sub")]) == EXIT_IO


def test_compare_same_controller(tmp_path):
    code = main(["-q", "compare", "pick_place_aic", "pick_place_aic", "--duration", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = list(csv.reader((tmp_path / "compare.csv").open()))
    assert all(r[1] == r[2] for r in rows[1:])


def test_compare_reports_parameter_counts(tmp_path, capsys):
    code = main(["compare", "pick_place_aic", "pick_place_mrac", "--duration", "3", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = {r[0]: r[1:] for r in csv.reader((tmp_path / "compare.csv").open())}
    assert rows["tuning parameters"] == ["6", str(17 * 2)]
    assert "tuning parameters" in capsys.readouterr().out
    a = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    b = (tmp_path / "b" / "trajectory.csv").read_text().splitlines()
    # shared plant, schedule and noise: identical first sample
    assert a[1].split(",")[:9] == b[1].split(",")[:9]


def test_compare_transfer_flags_mrac(tmp_path):
    code = main(["-q", "compare", "transfer_aic", "transfer_mrac", "--out", str(tmp_path)])
    rows = {r[0]: r[1:] for r in csv.reader((tmp_path / "compare.csv").open())}
    aic_flag, mrac_flag = rows["degraded segments"]
    assert aic_flag == "-" and mrac_flag != "-"
    assert rows["diverged"][0] == "false"
    assert code in (EXIT_OK, EXIT_DIVERGED)


def test_bench_empty_list_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--dofs", ""])
    assert exc.value.code == EXIT_CONFIG
    assert "non-empty" in capsys.readouterr().err


def test_bench_writes_timing_csv(tmp_path, capsys):
    assert main(["bench", "--dofs", "2,7", "--steps", "2000", "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "timing.csv").open()))
    assert [(r["controller"], r["n"]) for r in rows] == [("aic", "2"), ("mrac", "2"), ("aic", "7"), ("mrac", "7")]
    assert all(float(r["mean_us"]) > 0 for r in rows)
    assert {r["parameter_count"] for r in rows if r["controller"] == "aic"} == {"6"}
    out = capsys.readouterr().out
    assert "host:" in out and "mean us" in out


def test_list_and_entry_point():
    res = subprocess.run([sys.executable, "-m", "aicsim.cli", "list"], capture_output=True, text=True, check=True)
    assert "pick_place_aic" in res.stdout
