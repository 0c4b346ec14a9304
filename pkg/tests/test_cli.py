"""Command-line workflow: site-stats, combine, simulate, exit codes."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from multiknock import SimConfig, SiteSummary, gen_continuous, read_selection
from multiknock.cli import main


def write_rows(path, header, matrix):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


@pytest.fixture
def federated_files(tmp_path):
    """Two-site continuous data with a shared spec; strong mutual signal."""

    cfg = SimConfig(setting="continuous", n=(150, 150), M=4, group_size=2,
                    s_mutual=2, s_exclusive=(0, 0), amplitude=2.0, rho=0.3,
                    gamma=0.0, replications=1)
    views, truth = gen_continuous(cfg, 42)
    paths = {}
    for k, v in enumerate(views):
        p = tmp_path / f"site{k}.csv"
        write_rows(p, [c.name for c in v.columns] + ["y"],
                   np.column_stack([v.X, v.y]))
        paths[f"site{k}"] = p
    spec = {
        "outcome": "y",
        "family": "gaussian",
        "groups": [
            {"name": name, "columns": [views[0].columns[j].name for j in g]}
            for name, g in zip(views[0].partition.names,
                               views[0].partition.groups)
        ],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    names = tuple(views[0].partition.names)
    truth_names = {names[m] for m in truth}
    return tmp_path, paths, spec_path, names, truth_names


def run_site_stats(paths, spec_path, tmp_path, k, seed):
    out = tmp_path / f"sum{k}.json"
    rc = main([
        "site-stats", "--data", str(paths[f"site{k}"]),
        "--groups", str(spec_path), "--seed", str(seed), "--out", str(out),
    ])
    assert rc == 0
    return out


# ------------------------------------------------------------ happy paths

def test_site_stats_writes_summary(federated_files):
    tmp_path, paths, spec_path, names, _ = federated_files
    out = run_site_stats(paths, spec_path, tmp_path, 0, seed=1)
    summary = SiteSummary.read(out)
    assert summary.site_id == "site0"  # defaults to the data file stem
    assert summary.group_names == names
    assert summary.construction["method"] == "fixed-equi"
    assert summary.construction["seed"] == 1
    assert np.all(summary.Z >= 0) and np.all(summary.Ztilde >= 0)


def test_site_stats_honors_site_id_and_method(federated_files):
    tmp_path, paths, spec_path, _, _ = federated_files
    out = tmp_path / "named.json"
    rc = main([
        "site-stats", "--data", str(paths["site0"]), "--groups", str(spec_path),
        "--site-id", "hospital-a", "--method", "fixed-sdp", "--out", str(out),
    ])
    assert rc == 0
    summary = SiteSummary.read(out)
    assert summary.site_id == "hospital-a"
    assert summary.construction["method"] == "fixed-sdp"


def test_combine_recovers_mutual_signal(federated_files):
    tmp_path, paths, spec_path, names, truth_names = federated_files
    sums = [run_site_stats(paths, spec_path, tmp_path, k, seed=k + 1)
            for k in (0, 1)]
    sel_path = tmp_path / "sel.json"
    rc = main(["combine", str(sums[0]), str(sums[1]), "--q", "0.4",
               "--out", str(sel_path)])
    assert rc == 0
    doc = read_selection(sel_path)
    assert truth_names <= set(doc["selected"])
    assert set(doc["W"]) == set(names)
    assert doc["q"] == 0.4 and doc["plus"] is False


def test_combine_output_is_order_invariant(federated_files, capsys):
    tmp_path, paths, spec_path, _, _ = federated_files
    sums = [str(run_site_stats(paths, spec_path, tmp_path, k, seed=k + 1))
            for k in (0, 1)]
    assert main(["combine", *sums, "--q", "0.3", "--plus"]) == 0
    first = capsys.readouterr().out
    assert main(["combine", *sums[::-1], "--q", "0.3", "--plus"]) == 0
    second = capsys.readouterr().out
    assert first == second
    assert json.loads(first)["plus"] is True


def test_site_stats_uses_sequential_for_categoricals(tmp_path):
    rng = np.random.default_rng(12)
    n = 150
    levels = rng.integers(0, 3, size=n)
    z = rng.standard_normal((n, 2))
    y = z[:, 0] + 0.5 * (levels == 1) + rng.standard_normal(n)
    data = tmp_path / "mix.csv"
    with data.open("w", encoding="utf-8") as fh:
        fh.write("shade,z1,z2,y\n")
        tags = ["red", "green", "blue"]
        for i in range(n):
            fh.write(",".join([tags[levels[i]], repr(float(z[i, 0])),
                               repr(float(z[i, 1])), repr(float(y[i]))]) + "\n")
    spec = {
        "outcome": "y",
        "family": "gaussian",
        "groups": [
            {"name": "gshade", "columns": ["shade"]},
            {"name": "gz1", "columns": ["z1"]},
            {"name": "gz2", "columns": ["z2"]},
        ],
        "columns": {"shade": {"type": "categorical",
                              "levels": ["red", "green", "blue"]}},
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    out = tmp_path / "sum.json"
    rc = main(["site-stats", "--data", str(data), "--groups", str(spec_path),
               "--out", str(out)])
    assert rc == 0
    summary = SiteSummary.read(out)
    assert summary.construction["method"] == "sequential"
    assert summary.group_names == ("gshade", "gz1", "gz2")


def test_simulate_writes_deterministic_csv(tmp_path, capsys):
    config = {
        "setting": "continuous", "n_k": [100, 100], "M": 4, "group_size": 2,
        "s0": 1, "s1": 1, "s2": 1, "A": 1.5, "q": 0.25, "replications": 2,
        "strategies": ["gs", "gs_plus"], "grid_size": 25, "seed": 3,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    out1 = tmp_path / "r1.csv"
    out2 = tmp_path / "r2.csv"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    with out1.open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["gs", "gs_plus"]
    for r in rows:
        assert r["replications_used"] == "2"
        float(r["fdr_hat"])


def test_simulate_progress_goes_to_stderr(tmp_path, capsys):
    config = {"setting": "continuous", "n": [80, 80], "M": 4, "group_size": 2,
              "s_mutual": 1, "s_exclusive": [0, 0], "replications": 2,
              "strategies": ["gs"], "grid_size": 25}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv"), "--progress"])
    assert rc == 0
    err = capsys.readouterr().err
    assert "replication 1/2" in err and "replication 2/2" in err


def test_console_script_is_installed():
    proc = subprocess.run(
        ["multiknock", "--help"], capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "site-stats" in proc.stdout
    assert "combine" in proc.stdout
    assert "simulate" in proc.stdout


# -------------------------------------------------------------- exit codes

def stderr_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 64
    assert stderr_error(capsys)["error"] == "UsageError"


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 64


def test_combine_q_out_of_range_is_usage_error(tmp_path, capsys):
    assert main(["combine", str(tmp_path / "whatever.json"), "--q", "1.5"]) == 64
    doc = stderr_error(capsys)
    assert doc["error"] == "UsageError"
    assert "(0, 1)" in doc["message"]


def test_combine_missing_file_is_format_error(tmp_path, capsys):
    assert main(["combine", str(tmp_path / "absent.json"), "--q", "0.2"]) == 65
    doc = stderr_error(capsys)
    assert doc["error"] == "FormatError"
    assert "cannot read" in doc["message"]


def test_combine_broken_json_is_format_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["combine", str(bad), "--q", "0.2"]) == 65
    assert stderr_error(capsys)["error"] == "FormatError"


def test_combine_schema_violation_is_format_error(tmp_path, capsys):
    doc = {
        "format_version": 1, "site_id": "s", "group_names": ["g"],
        "Z": [1.0], "Ztilde": [0.0],
        "construction": {"method": "m", "seed": 0,
                         "grid": {"size": 100, "lambda_max": 1.0,
                                  "lambda_min": 0.1}},
        "rows": [[1, 2, 3]],
    }
    path = tmp_path / "leaky.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["combine", str(path), "--q", "0.2"]) == 65
    assert stderr_error(capsys)["error"] == "SchemaError"


def test_site_stats_small_n_is_data_error(tmp_path, capsys):
    rng = np.random.default_rng(0)
    data = tmp_path / "tiny.csv"
    write_rows(data, [f"x{j}" for j in range(8)] + ["y"],
               np.column_stack([rng.standard_normal((10, 8)),
                                rng.standard_normal(10)]))
    spec = {
        "outcome": "y", "family": "gaussian",
        "groups": [{"name": f"g{j}", "columns": [f"x{j}"]} for j in range(8)],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    rc = main(["site-stats", "--data", str(data), "--groups", str(spec_path),
               "--out", str(tmp_path / "s.json")])
    assert rc == 2
    doc = stderr_error(capsys)
    assert doc["error"] == "DimensionError"
    assert "n >= 2p" in doc["message"]


def test_site_stats_grid_size_too_small_is_usage_error(tmp_path, capsys):
    rc = main(["site-stats", "--data", "d.csv", "--groups", "s.json",
               "--grid-size", "5", "--out", "o.json"])
    assert rc == 64
    assert "--grid-size" in stderr_error(capsys)["message"]


def test_site_stats_unknown_method_is_usage_error(capsys):
    rc = main(["site-stats", "--data", "d.csv", "--groups", "s.json",
               "--method", "bogus", "--out", "o.json"])
    assert rc == 64


def test_site_stats_missing_data_file_is_format_error(tmp_path, capsys):
    spec = {"outcome": "y", "family": "gaussian",
            "groups": [{"name": "g", "columns": ["x"]}]}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec), encoding="utf-8")
    rc = main(["site-stats", "--data", str(tmp_path / "absent.csv"),
               "--groups", str(spec_path), "--out", str(tmp_path / "o.json")])
    assert rc == 65
    assert "cannot read" in stderr_error(capsys)["message"]


def test_simulate_unknown_config_field_is_data_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"setting": "continuous", "banana": 1}),
                        encoding="utf-8")
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 2
    doc = stderr_error(capsys)
    assert doc["error"] == "ConfigError"
    assert "banana" in doc["message"]


def test_simulate_invalid_replications_is_data_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(
        json.dumps({"setting": "continuous", "replications": 0}),
        encoding="utf-8",
    )
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 2
    assert stderr_error(capsys)["error"] == "ConfigError"


def test_simulate_bad_config_json_is_format_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text("[1, 2", encoding="utf-8")
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 65
    cfg_path.write_text("[1, 2]", encoding="utf-8")
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 65
    assert "JSON object" in stderr_error(capsys)["message"]


def test_simulate_missing_config_is_format_error(tmp_path, capsys):
    rc = main(["simulate", "--config", str(tmp_path / "absent.json"),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 65
    assert "cannot read" in stderr_error(capsys)["message"]


def test_simulate_bad_threads_is_usage_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"setting": "continuous"}), encoding="utf-8")
    rc = main(["simulate", "--config", str(cfg_path),
               "--out", str(tmp_path / "r.csv"), "--threads", "0"])
    assert rc == 64
