"""Tests for the command-line entry points."""

import json

import numpy as np
import pytest

from src.cli import (
    EXIT_ERROR,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    build_run_config,
    fit_main,
    fit_parser,
    main,
    simulate_main,
)
from src.utils.config_utils import load_config


@pytest.fixture()
def data_file(rng, write_csv, tmp_path):
    n = 50
    Z = rng.uniform(-1.0, 1.0, size=(n, 6))
    y = 0.5 + 1.5 * Z[:, 2] + rng.normal(0.0, 0.2, size=n)
    rows = [["sample", "y", *[f"g{i}" for i in range(6)]]]
    rows += [[f"s{i}", y[i], *Z[i]] for i in range(n)]
    schema = tmp_path / "schema.yaml"
    schema.write_text("sample: id\ny: response\n")
    return write_csv(rows), schema


def test_fit_writes_reports(data_file, tmp_path):
    path, schema = data_file
    out = tmp_path / "fit"
    status = fit_main(
        ["--input", str(path), "--schema", str(schema), "--out", str(out)]
    )
    assert status == EXIT_OK
    report = (out / "report.txt").read_text()
    assert "g2" in report
    assert "Converged: yes" in report
    record = json.loads((out / "fit_result.json").read_text())
    assert "g2" in record["selected_names"]
    assert (out / "neighbors.tsv").read_text().startswith("selected\tneighbor")


def test_fit_iteration_cap_exits_with_two(data_file, tmp_path):
    path, schema = data_file
    status = fit_main(
        [
            "--input",
            str(path),
            "--schema",
            str(schema),
            "--init",
            "all_null",
            "--out",
            str(tmp_path / "capped"),
            "--config-override",
            "selector.prob_floor=0.01",
            "--config-override",
            "selector.max_outer_iter=1",
        ]
    )
    assert status == EXIT_NOT_CONVERGED


def test_fit_missing_input(tmp_path):
    missing = tmp_path / "absent.csv"
    status = fit_main(["--input", str(missing), "--out", str(tmp_path)])
    assert status == EXIT_ERROR


def test_fit_unknown_role_in_schema(data_file, tmp_path):
    path, _ = data_file
    schema = tmp_path / "bad.yaml"
    schema.write_text("y: outcome\n")
    status = fit_main(["--input", str(path), "--schema", str(schema)])
    assert status == EXIT_ERROR


def test_flags_override_config():
    args = fit_parser().parse_args(
        ["--input", "x.csv", "--mode", "weighted", "--delta", "0.5", "--restarts", "3"]
    )
    config = build_run_config(args, load_config())
    assert config.mode == "weighted"
    assert config.delta == 0.5
    assert config.n_restarts == 3
    assert config.init_strategy == "bh_screen"
    selector = config.selector_config()
    assert (selector.mode, selector.n_restarts) == ("weighted", 3)


def test_simulate_writes_study(tmp_path, capsys):
    out = tmp_path / "study"
    status = simulate_main(
        [
            "--scenario",
            "N1",
            "--reps",
            "2",
            "--n",
            "50",
            "--k",
            "15",
            "--workers",
            "1",
            "--out",
            str(out),
        ]
    )
    assert status == EXIT_OK
    lines = (out / "study.tsv").read_text().splitlines()
    assert lines[0].split("\t")[:2] == ["method", "scenario"]
    assert [line.split("\t")[0] for line in lines[1:]] == ["mixture", "fdr"]
    assert capsys.readouterr().out.splitlines() == lines
    record = json.loads((out / "study.json").read_text())
    assert not np.isnan(record["studies"][0]["median_tp"])


def test_simulate_invalid_size(tmp_path):
    status = simulate_main(["--scenario", "N5", "--k", "10", "--out", str(tmp_path)])
    assert status == EXIT_ERROR


def test_main_dispatch(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["fit", "--input", "x.csv", "--family", "gamma"])
    assert info.value.code == 2
