"""End-to-end checks of the command-line interface.

Most tests call cli.main() in process for speed. Two run the installed
``leadlag`` script as a real subprocess to prove the console entry point
works outside the test harness.
"""

import csv
import datetime
import json
import shutil
import subprocess

import numpy as np
import pytest

from leadlag.cli import main
from leadlag.simulate import ground_truth, preset_design


def date_label(t):
    return str(datetime.date(2020, 1, 1) + datetime.timedelta(days=t))


def write_wide(path, ids, values):
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("date," + ",".join(ids) + "\n")
        for t in range(values.shape[1]):
            cells = ",".join(repr(float(v)) for v in values[:, t])
            fh.write(f"{date_label(t)},{cells}\n")
    return str(path)


def lead_panel_csv(tmp_path, t_len=60, noise=0.02):
    # A leads B by 2 and C by 4: progressively earlier slices of one driver.
    rng = np.random.Generator(np.random.Philox([901]))
    driver = rng.standard_normal(t_len + 4)
    a = driver[4:]
    b = driver[2 : 2 + t_len] + noise * rng.standard_normal(t_len)
    c = driver[:t_len] + noise * rng.standard_normal(t_len)
    return write_wide(tmp_path / "panel.csv", ["A", "B", "C"], [a, b, c])


def returns_panel_csv(tmp_path):
    rng = np.random.Generator(np.random.Philox([902]))
    values = 0.01 * rng.standard_normal((4, 80))
    return write_wide(tmp_path / "rets.csv", ["s0", "s1", "s2", "s3"], values)


def read_matrix(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    values = np.array([[float(cell) for cell in row[1:]] for row in rows[1:]])
    return ids, values


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------- console script


def test_console_script_lists_all_commands():
    exe = shutil.which("leadlag")
    assert exe is not None
    done = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for name in ("simulate", "detect", "ccf", "backtest", "rank"):
        assert name in done.stdout
    bare = subprocess.run([exe], capture_output=True, text=True)
    assert bare.returncode == 2


def test_console_script_detect_is_deterministic(tmp_path):
    data = lead_panel_csv(tmp_path)
    exe = shutil.which("leadlag")
    outs = []
    stdouts = []
    for sub in ("one", "two"):
        out = tmp_path / sub
        done = subprocess.run(
            [
                exe,
                "detect",
                "--input",
                data,
                "--q",
                "8",
                "--theta",
                "1",
                "--seed",
                "3",
                "--out-dir",
                str(out),
            ],
            capture_output=True,
            text=True,
        )
        assert done.returncode == 0, done.stderr
        outs.append(out)
        stdouts.append(done.stdout)
    for name in ("gamma.csv", "votes.csv", "multisets.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # stdout is exactly the persisted configuration document
    assert stdouts[0] == (outs[0] / "config.json").read_text()


# ------------------------------------------------------------ exit codes


def test_usage_errors_exit_2(tmp_path, capsys):
    bad_argvs = (
        [],
        ["nope"],
        ["detect", "--input", "x.csv"],  # --q is required
        ["detect", "--input", "x.csv", "--q", "5", "--method", "Bogus"],
        ["simulate", "--sigma", "1.0,abc"],
        ["backtest", "--input", "x.csv", "--q", "4", "--method", "KM_Mod,Bogus"],
    )
    for argv in bad_argvs:
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2
    capsys.readouterr()


def test_parameter_errors_exit_3(tmp_path, capsys):
    data = lead_panel_csv(tmp_path)
    rc = main(["detect", "--input", data, "--q", "500", "--out-dir", str(tmp_path / "o1")])
    assert rc == 3
    assert capsys.readouterr().err.startswith("error:")
    rc = main(
        [
            "detect",
            "--input",
            data,
            "--q",
            "8",
            "--preprocess",
            "equity",
            "--out-dir",
            str(tmp_path / "o2"),
        ]
    )
    assert rc == 3
    assert "--market-id" in capsys.readouterr().err


def test_data_errors_exit_4(tmp_path, capsys):
    rc = main(
        ["ccf", "--input", str(tmp_path / "missing.csv"), "--out-dir", str(tmp_path / "o1")]
    )
    assert rc == 4
    assert capsys.readouterr().err.startswith("error:")
    bad = tmp_path / "bad.csv"
    bad.write_text("date,A,B\nd0,1.0,oops\nd1,2.0,3.0\n")
    rc = main(["ccf", "--input", str(bad), "--out-dir", str(tmp_path / "o2")])
    assert rc == 4
    capsys.readouterr()


# -------------------------------------------------------------- simulate


def test_simulate_single_cell_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(
        [
            "simulate",
            "--k",
            "1",
            "--n",
            "6",
            "--t-len",
            "30",
            "--q",
            "10",
            "--sigma",
            "0.8",
            "--theta",
            "1",
            "--method",
            "KM_Mod",
            "--reps",
            "1",
            "--seed",
            "5",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    stdout = capsys.readouterr().out
    config = json.loads(stdout)
    assert config["command"] == "simulate"
    assert config["mse_scope"] == "estimated"
    assert (out / "config.json").read_text() == stdout
    rows = read_rows(out / "sweep.csv")
    assert len(rows) == 1
    assert rows[0]["setting"] == "k=1"
    assert rows[0]["method"] == "KM_Mod"
    float(rows[0]["mse"])
    float(rows[0]["ari"])
    ids, psi = read_matrix(out / "psi.csv")
    assert np.array_equal(psi, ground_truth(preset_design(1, 6)).psi)
    gids, gamma = read_matrix(out / "gamma.csv")
    assert gids == ids
    assert np.array_equal(gamma, -gamma.T)
    assert (out / "error_matrix.csv").exists()


def test_simulate_grid_skips_single_cell_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(
        [
            "simulate",
            "--k",
            "1",
            "--n",
            "6",
            "--t-len",
            "25",
            "--q",
            "8",
            "--sigma",
            "0.5",
            "--theta",
            "1,6",
            "--reps",
            "2",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    rows = read_rows(out / "sweep.csv")
    assert len(rows) == 4
    assert {row["theta"] for row in rows} == {"1", "6"}
    assert len({row["repetition"] for row in rows}) == 2
    assert not (out / "gamma.csv").exists()
    assert not (out / "psi.csv").exists()


# ---------------------------------------------------------------- detect


def test_detect_outputs_and_theta_filtering(tmp_path, capsys):
    data = lead_panel_csv(tmp_path)
    gammas = {}
    for theta in (1, 6):
        out = tmp_path / f"theta{theta}"
        rc = main(
            [
                "detect",
                "--input",
                data,
                "--q",
                "8",
                "--theta",
                str(theta),
                "--seed",
                "3",
                "--out-dir",
                str(out),
            ]
        )
        assert rc == 0
        stdout = capsys.readouterr().out
        config = json.loads(stdout)
        assert config["theta"] == theta
        assert (out / "config.json").read_text() == stdout
        ids, gamma = read_matrix(out / "gamma.csv")
        assert ids == ["A", "B", "C"]
        assert np.array_equal(gamma, -gamma.T)
        vids, votes = read_matrix(out / "votes.csv")
        assert vids == ids
        assert votes.min() >= 0
        assert np.array_equal(votes, np.round(votes))
        assert np.all(np.diag(votes) == 0)
        lag_rows = read_rows(out / "multisets.csv")
        assert set(lag_rows[0]) == {"i", "j", "lag", "count"}
        gammas[theta] = gamma
    assert gammas[1][0, 1] > 0  # A leads B
    assert gammas[1][0, 2] > 0  # A leads C
    # raising the threshold only silences pairs, it never changes a kept mode
    surviving = gammas[6] != 0
    assert np.array_equal(gammas[6][surviving], gammas[1][surviving])


def test_detect_preprocess_writes_dropped_sidecar(tmp_path, capsys):
    rng = np.random.Generator(np.random.Philox([903]))
    values = 0.01 * rng.standard_normal((6, 30)) + 0.02
    values[1, 1] = 0.0  # one asset of five missing on the second day: 20% > 10%
    ids = ["MKT", "a0", "a1", "a2", "a3", "a4"]
    data = write_wide(tmp_path / "eq.csv", ids, values)
    out = tmp_path / "pre"
    rc = main(
        [
            "ccf",
            "--input",
            data,
            "--preprocess",
            "equity",
            "--market-id",
            "MKT",
            "--max-lag",
            "2",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    sidecar = json.loads((out / "dropped.json").read_text())
    assert [d["date"] for d in sidecar["dropped_days"]] == [date_label(1)]
    assert sidecar["dropped_days"][0]["zero_fraction"] == pytest.approx(0.2)
    assert sidecar["dropped_assets"] == []
    out_ids, _ = read_matrix(out / "gamma_ccf.csv")
    assert out_ids == ["a0", "a1", "a2", "a3", "a4"]  # market removed


# ------------------------------------------------------------------- ccf


def test_ccf_writes_benchmark_matrix(tmp_path, capsys):
    data = lead_panel_csv(tmp_path)
    out = tmp_path / "nested" / "deep"  # --out-dir is created on demand
    rc = main(["ccf", "--input", data, "--max-lag", "5", "--out-dir", str(out)])
    assert rc == 0
    config = json.loads(capsys.readouterr().out)
    assert config["max_lag"] == 5
    ids, gamma = read_matrix(out / "gamma_ccf.csv")
    assert ids == ["A", "B", "C"]
    assert np.array_equal(gamma, -gamma.T)
    assert gamma[0, 1] > 0 and gamma[0, 2] > 0 and gamma[1, 2] > 0


# -------------------------------------------------------------- backtest


def test_backtest_single_run_outputs(tmp_path, capsys):
    data = returns_panel_csv(tmp_path)
    out = tmp_path / "bt"
    rc = main(
        [
            "backtest",
            "--input",
            data,
            "--method",
            "CCF",
            "--window-length",
            "12",
            "--q",
            "4",
            "--lookback",
            "2",
            "--horizon",
            "2",
            "--leader-fraction",
            "0.5",
            "--ccf-max-lag",
            "3",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    for side in ("laggers", "leaders"):
        rows = read_rows(out / f"pnl_{side}.csv")
        assert len(rows) == 67  # trading days 11 .. 77 inclusive
        total = sum(float(r["rescaled"]) for r in rows)
        assert float(rows[-1]["cumulative"]) == pytest.approx(total)
        payload = json.loads((out / f"report_{side}.json").read_text())
        assert payload["config"]["command"] == "backtest"
        metrics = payload["metrics"]
        assert metrics["n_days"] == 67
        for key in ("e_returns", "volatility", "sharpe", "hit_rate", "max_drawdown"):
            assert key in metrics


def test_backtest_grid_sweeps_combinations(tmp_path, capsys):
    data = returns_panel_csv(tmp_path)
    out = tmp_path / "grid"
    rc = main(
        [
            "backtest",
            "--input",
            data,
            "--grid",
            "--method",
            "CCF",
            "--window-length",
            "12",
            "--q",
            "4",
            "--lookback",
            "2,3",
            "--horizon",
            "2",
            "--leader-fraction",
            "0.5",
            "--ccf-max-lag",
            "3",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    rows = read_rows(out / "backtest_grid.csv")
    assert len(rows) == 4  # 2 lookbacks x 2 baskets
    assert {row["lookback"] for row in rows} == {"2", "3"}
    assert {row["basket"] for row in rows} == {"laggers", "leaders"}
    assert all(row["method"] == "CCF" for row in rows)
    assert "sharpe" in rows[0]


def test_backtest_lists_require_grid_flag(tmp_path, capsys):
    data = returns_panel_csv(tmp_path)
    rc = main(
        [
            "backtest",
            "--input",
            data,
            "--method",
            "CCF",
            "--window-length",
            "12",
            "--q",
            "4",
            "--lookback",
            "2,3",
            "--ccf-max-lag",
            "3",
            "--out-dir",
            str(tmp_path / "o"),
        ]
    )
    assert rc == 3
    assert "--grid" in capsys.readouterr().err


# ------------------------------------------------------------------ rank


def test_rank_orders_leaders_first(tmp_path, capsys):
    data = lead_panel_csv(tmp_path)
    out = tmp_path / "rank"
    rc = main(
        [
            "rank",
            "--input",
            data,
            "--q",
            "8",
            "--theta",
            "1",
            "--seed",
            "3",
            "--out-dir",
            str(out),
        ]
    )
    assert rc == 0
    config = json.loads(capsys.readouterr().out)
    assert config["command"] == "rank"
    rows = read_rows(out / "ranking.csv")
    assert [row["id"] for row in rows] == ["A", "B", "C"]
    assert [row["rank"] for row in rows] == ["1", "2", "3"]
    scores = [float(row["score"]) for row in rows]
    assert scores == sorted(scores, reverse=True)
    assert sum(scores) == pytest.approx(0.0, abs=1e-9)
