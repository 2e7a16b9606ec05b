import json

import numpy as np
import pytest

from momenta_node import cli
from momenta_node.csv_formats import (
    EFFICACY_HEADER,
    STABILITY_HEADER,
    TRAJECTORY_HEADER,
    read_efficacy_csv,
    read_stability_csv,
    read_trajectory_csv,
)


def run_cli(*argv):
    return cli.main(list(argv))


def read_header(path):
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                return line.strip().split(",")
    return []


# ------------------------------------------------------------------ trajectory

def test_trajectory_default_invocation(tmp_path):
    out = tmp_path / "tr"
    assert run_cli("trajectory", "--T", "1.0", "--out", str(out)) == 0
    assert (out / "config.resolved.json").exists()
    assert (out / "summary.json").exists()
    assert read_header(out / "trajectory.csv") == TRAJECTORY_HEADER
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["command"] == "trajectory"
    assert resolved["T"] == 1.0
    svg_text = (out / "trajectory.svg").read_text()
    assert svg_text.startswith("<svg ")
    assert svg_text.count("<polyline") >= 3
    assert "<polygon" in svg_text  # the minimizer star


def test_trajectory_from_minimizer_has_zero_distances(tmp_path):
    out = tmp_path / "tr0"
    assert run_cli("trajectory", "--x0", "1,1", "--T", "1.0", "--out", str(out)) == 0
    summary = json.loads((out / "summary.json").read_text())
    for flow in summary["flows"].values():
        assert flow["final_distance_to_min"] == 0.0


def test_trajectory_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("trajectory", "--T", "1.0", "--out", str(out)) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "trajectory.svg").read_bytes() == (b / "trajectory.svg").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_trajectory_bad_inputs_exit_2(tmp_path, capsys):
    assert run_cli("trajectory", "--landscape", "himmelblau", "--out", str(tmp_path / "x")) == 2
    assert run_cli("trajectory", "--x0", "oops", "--out", str(tmp_path / "y")) == 2
    assert run_cli("trajectory", "--x0", "99,99", "--out", str(tmp_path / "z")) == 2
    capsys.readouterr()


def test_trajectory_all_flows_failing_exits_3(tmp_path, capsys):
    out = tmp_path / "boom"
    # A step far beyond the stability limit overflows every flow.
    code = run_cli(
        "trajectory", "--method", "rk4", "--step", "10", "--T", "50", "--out", str(out)
    )
    assert code == 3
    # The resolved config and the partial outputs are still written.
    assert (out / "config.resolved.json").exists()
    assert (out / "trajectory.csv").exists()
    capsys.readouterr()


def test_config_file_merging(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"T": 5.0, "landscape": "beale"}))
    out = tmp_path / "merged"
    assert run_cli("trajectory", "--config", str(cfg_path), "--T", "1.0", "--out", str(out)) == 0
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["T"] == 1.0  # flag beats file
    assert resolved["landscape"] == "beale"  # file beats default


def test_config_file_unknown_key_exit_2(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"horizon": 5.0}))
    assert run_cli("trajectory", "--config", str(cfg_path), "--out", str(tmp_path / "o")) == 2
    assert "horizon" in capsys.readouterr().err


# ------------------------------------------------------------------- stability

def test_stability_synthetic_probe(tmp_path):
    out = tmp_path / "st"
    code = run_cli(
        "stability", "--t1", "4", "--models", "node,adamnode", "--out", str(out)
    )
    assert code == 0
    assert read_header(out / "stability.csv") == STABILITY_HEADER
    series, blowups = read_stability_csv(out / "stability.csv")
    assert set(series) == {"node", "adamnode"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["statuses"]["adamnode"] == "SUCCESS"


def test_stability_csv_probe_and_bad_probe(tmp_path, capsys):
    out1 = tmp_path / "gen"
    assert run_cli("stability", "--t1", "2", "--models", "node", "--out", str(out1)) == 0

    series_path = tmp_path / "series.csv"
    with open(series_path, "w") as fh:
        fh.write("t,input,output\n")
        for i in range(16):
            fh.write(f"{i * 0.1!r},{0.0!r},{float(np.sin(i * 0.1))!r}\n")
    out2 = tmp_path / "ingested"
    code = run_cli(
        "stability", "--t1", "2", "--probe", f"csv:{series_path}",
        "--models", "node", "--out", str(out2),
    )
    assert code == 0

    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header,names\n0,0,0\n")
    assert run_cli(
        "stability", "--probe", f"csv:{bad}", "--models", "node", "--out", str(tmp_path / "e")
    ) == 2
    assert "line 1" in capsys.readouterr().err


def test_stability_unknown_model_lists_valid_names(tmp_path, capsys):
    code = run_cli("stability", "--models", "resnet", "--out", str(tmp_path / "m"))
    assert code == 2
    err = capsys.readouterr().err
    assert "resnet" in err and "adamnode" in err


# ----------------------------------------------------------------------- train

def test_train_zero_epochs_emits_chance_record(tmp_path):
    out = tmp_path / "t0"
    assert run_cli("train", "--epochs", "0", "--out", str(out)) == 0
    cols = read_efficacy_csv(out / "efficacy.csv")
    assert list(cols["epoch"]) == [0]
    assert cols["test_accuracy"][0] == 0.5
    assert cols["efficacy_bwd"][0] == 0.0
    assert read_header(out / "efficacy.csv") == EFFICACY_HEADER


def test_train_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli(
            "train", "--epochs", "1", "--model", "node", "--seed", "7", "--out", str(out)
        ) == 0
    assert (a / "efficacy.csv").read_bytes() == (b / "efficacy.csv").read_bytes()
    assert (a / "efficacy.svg").read_bytes() == (b / "efficacy.svg").read_bytes()


def test_train_invalid_model_exit_2(tmp_path, capsys):
    assert run_cli("train", "--model", "transformer", "--out", str(tmp_path / "x")) == 2
    # argparse reports the valid choices on stderr
    assert "adamnode" in capsys.readouterr().err


def test_train_divergence_exits_4_with_partial_records(tmp_path, capsys):
    out = tmp_path / "div"
    code = run_cli(
        "train", "--epochs", "3", "--lr", "1e6", "--model", "node", "--out", str(out)
    )
    assert code == 4
    cols = read_efficacy_csv(out / "efficacy.csv")  # partial records survive
    assert cols["epoch"][0] == 0
    assert "diverged" in capsys.readouterr().err


# ------------------------------------------------------------------- gradcheck

def test_gradcheck_passes_and_reports(tmp_path, capsys):
    out = tmp_path / "gc"
    code = run_cli("gradcheck", "--model", "hbnode", "--out", str(out))
    assert code == 0
    report = json.loads((out / "gradcheck_report.json").read_text())
    for key in ("formulation", "max_rel_err", "init_state_max_rel_err", "n_params", "per_param_worst"):
        assert key in report
    assert report["max_rel_err"] < 1e-3
    printed = json.loads(capsys.readouterr().out)
    assert printed == report


def test_gradcheck_unattainable_tolerance_exits_1(tmp_path, capsys):
    code = run_cli("gradcheck", "--model", "node", "--tol", "0", "--out", str(tmp_path / "gc"))
    assert code == 1
    capsys.readouterr()


# ------------------------------------------------------------------------ plot

def test_plot_round_trip_matches_original_bytes(tmp_path):
    out = tmp_path / "tr"
    assert run_cli("trajectory", "--T", "1.0", "--out", str(out)) == 0
    replot = tmp_path / "replot.svg"
    assert run_cli(
        "plot", "--in", str(out / "trajectory.csv"), "--kind", "trajectory", "--out", str(replot)
    ) == 0
    assert replot.read_bytes() == (out / "trajectory.svg").read_bytes()


def test_plot_same_csv_twice_identical(tmp_path):
    out = tmp_path / "tr"
    assert run_cli("trajectory", "--T", "1.0", "--out", str(out)) == 0
    s1, s2 = tmp_path / "one.svg", tmp_path / "two.svg"
    for s in (s1, s2):
        assert run_cli(
            "plot", "--in", str(out / "trajectory.csv"), "--kind", "trajectory", "--out", str(s)
        ) == 0
    assert s1.read_bytes() == s2.read_bytes()


def test_plot_kind_mismatch_and_empty_body_exit_2(tmp_path, capsys):
    out = tmp_path / "tr"
    assert run_cli("trajectory", "--T", "1.0", "--out", str(out)) == 0
    code = run_cli(
        "plot", "--in", str(out / "trajectory.csv"), "--kind", "stability",
        "--out", str(tmp_path / "x.svg"),
    )
    assert code == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("# minimizer,1.0,1.0\nt,x,y,dynamics\n")
    code = run_cli(
        "plot", "--in", str(empty), "--kind", "trajectory", "--out", str(tmp_path / "y.svg")
    )
    assert code == 2
    capsys.readouterr()


def test_unknown_subcommand_exits_2(capsys):
    assert run_cli("frobnicate") == 2
    capsys.readouterr()
