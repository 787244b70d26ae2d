import csv
import json
import subprocess
import sys

import pytest

from qkdcal.cli import EXIT_ERROR, EXIT_INSECURE, EXIT_OK, main
from qkdcal.config import load_config
from qkdcal.errors import ValidationError
from qkdcal.estimation import ReceiverAssumptions, TestCounts, TestSourceConfig, estimate_pipeline
from qkdcal.keyrate import KeyRateInputs, rate_constant_eta, rate_estimated_etamax


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_rate_secure_and_insecure_exit_codes(capsys):
    assert main(["rate", "--q-bar", "1", "--delta-bar", "0", "--eta-e", "1"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "formula,rate,status,secure"
    assert out[2] == "estimated,1,ok,true"
    assert main(["rate", "--q-bar", "0.4", "--delta-bar", "0", "--eta-e", "0.6"]) == EXIT_INSECURE
    assert "no_key_gain" in capsys.readouterr().out


def test_rate_jsonlines_keeps_full_precision(capsys):
    args = ["rate", "--q-bar", "0.6", "--delta-bar", "0.01", "--eta-e", "0.4", "--eta-max", "0.4"]
    assert main(args + ["--format", "jsonlines"]) == EXIT_OK
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    got = {r["formula"]: r["rate"] for r in recs}
    assert got["estimated_etamax"] == rate_estimated_etamax(KeyRateInputs(0.6, 0.01, 0.4, 0.4)).rate


def test_rate_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[rate]\nq_bar = 1\ndelta_bar = 0.02\neta_e_bar = 0.9\n")
    assert main(["rate", "--config", str(cfg)]) == EXIT_OK
    assert main(["rate", "--config", str(cfg), "--set", "rate.eta_e_bar=0.1"]) == EXIT_INSECURE


@pytest.mark.parametrize(
    "argv",
    [
        ["rate", "--q-bar", "1", "--delta-bar", "0", "--eta-e", "1", "--set", "rate.bogus=1"],
        ["rate", "--q-bar", "1", "--delta-bar", "0", "--eta-e", "1", "--set", "nosuch.key=1"],
        ["rate", "--q-bar", "1.5", "--delta-bar", "0", "--eta-e", "1"],
        ["rate", "--q-bar", "0", "--delta-bar", "0", "--eta-e", "1"],
        ["rate", "--q-bar", "1"],
        ["estimate", "--counts", "/nonexistent/counts.json"],
        ["simulate"],
        ["sweep", "--param", "q_bar", "--min", "0", "--max", "1", "--steps", "0"],
    ],
)
def test_errors_exit_one(argv, capsys):
    assert main(argv) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_config_key_in_file(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[detector]\neta_plateau = 0.5\ncolour = blue\n")
    with pytest.raises(ValidationError):
        load_config(cfg)
    assert main(["figures", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_ERROR


def test_unwritable_output_exits_one(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    argv = ["rate", "--q-bar", "1", "--delta-bar", "0", "--eta-e", "1", "--out", str(blocker / "x")]
    assert main(argv) == EXIT_ERROR


def test_figures_match_library(tmp_path):
    assert main(["figures", "--out", str(tmp_path)]) == EXIT_OK
    fig4 = read_csv(tmp_path / "fig4.csv")
    assert len(fig4) == 300
    for row in fig4:
        expected = rate_constant_eta(float(row["eta_e_bar"]), float(row["delta_bar"]))
        assert float(row["rate"]) == pytest.approx(expected, abs=1e-8)

    fig3 = read_csv(tmp_path / "fig3.csv")
    first = fig3[0]
    assert (first["q_bar"], first["delta_bar"], first["eta_e_bar"]) == ("1", "0", "0")
    assert float(first["rate"]) == 0.0 and first["status"] == "no_key_gain"

    sub = tmp_path / "fig5"
    assert main(["figures", "--which", "5", "--out", str(sub),
                 "--set", "figures.fig5_mu_min=0.1", "--set", "figures.fig5_points=5"]) == EXIT_OK
    fig5 = read_csv(sub / "fig5.csv")
    at = {(r["eta"], float(r["mu"])): r for r in fig5}
    assert float(at[("0.1", 0.1)]["eta_e"]) == pytest.approx(0.0582759978, abs=1e-8)
    assert float(at[("0.4", 0.1)]["eta_e"]) == pytest.approx(0.381646902, abs=1e-8)
    meta = json.loads((tmp_path / "fig3_meta.json").read_text())
    assert meta["harness_choice"]


def test_figures_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["figures", "--out", str(d), "--plot"]) == EXIT_OK
    for name in ("fig3.csv", "fig4.csv", "fig5.csv", "fig5.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_then_estimate_round_trip(tmp_path, capsys):
    cfg = tmp_path / "sim.ini"
    cfg.write_text(
        "[detector]\neta_plateau = 0.4\ndark_rate = 2e-5\n"
        "[source]\nkind = poisson\nmu = 0.1\np_test = 0.5\ndark_calibration_fraction = 0.05\n"
        "[attack]\nkind = honest\nloss = 0.3\n"
        "[session]\nn_gates = 50000\ntrace = true\n"
    )
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(cfg), "--seed", "3", "--out", str(out),
                 "--format", "jsonlines"]) == EXIT_OK
    payload = json.loads((out / "counts.json").read_text())
    assert payload["seed"] == 3
    assert (out / "trace.tsv").exists()
    summary = json.loads((out / "summary.jsonl").read_text())

    assert main(["estimate", "--counts", str(out / "counts.json"), "--format", "jsonlines"]) in (
        EXIT_OK,
        EXIT_INSECURE,
    )
    rep = json.loads(capsys.readouterr().out)
    direct = estimate_pipeline(
        TestCounts(**payload["counts"]),
        TestSourceConfig(kind="poisson", mu=0.1, p_test=0.5, dark_calibration_fraction=0.05),
        ReceiverAssumptions(),
    )
    assert rep["eta_e_bar"] == direct.inputs.eta_e_bar == summary["eta_e_bar"]
    assert rep["q_bar"] == direct.inputs.q_bar

    again = tmp_path / "again"
    main(["simulate", "--config", str(cfg), "--seed", "3", "--out", str(again),
          "--format", "jsonlines"])
    assert (again / "counts.json").read_bytes() == (out / "counts.json").read_bytes()
    assert (again / "trace.tsv").read_bytes() == (out / "trace.tsv").read_bytes()


def test_simulate_blinding_reports_attack(tmp_path):
    out = tmp_path / "blind"
    argv = ["simulate", "--out", str(out), "--set", "attack.kind=blinding",
            "--set", "attack.blind_fraction=1", "--set", "session.n_gates=20000",
            "--set", "session.nominal_eta=1"]
    assert main(argv) == EXIT_OK
    rows = {r["key"]: r["value"] for r in read_csv(out / "summary.csv")}
    assert rows["secure"] == "false"
    assert rows["eve_known_fraction"] == "1"
    assert float(rows["naive_rate"]) > 0.9


def test_sweep(capsys):
    assert main(["sweep", "--param", "eta_e_bar", "--min", "0", "--max", "1", "--steps", "11",
                 "--q-bar", "0.9", "--delta-bar", "0.01"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 12
    assert lines[0].startswith("q_bar,delta_bar,eta_e_bar")
    assert lines[-1].split(",")[5] == "ok"


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "qkdcal", "rate", "--q-bar", "1", "--delta-bar", "0.2",
         "--eta-e", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == EXIT_INSECURE
    assert "estimated" in proc.stdout
