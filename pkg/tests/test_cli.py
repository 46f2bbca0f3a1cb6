import json
import os

import pytest

from invarbin.cli import main


def read_tree(root: str) -> dict[str, bytes]:
    out = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_simulate_writes_replicates_and_manifest(tmp_path):
    out = tmp_path / "sim"
    code = main(
        ["simulate", "--out", str(out), "--seed", "3", "--replicates", "2", "--m", "3",
         "--n-per-env", "50"]
    )
    assert code == 0
    names = sorted(os.listdir(out))
    assert names == [
        "rep000_env1.csv",
        "rep000_env2.csv",
        "rep000_manifest.json",
        "rep000_test.csv",
        "rep001_env1.csv",
        "rep001_env2.csv",
        "rep001_manifest.json",
        "rep001_test.csv",
    ]
    manifest = json.loads((out / "rep000_manifest.json").read_text())
    assert manifest["config"]["m"] == 3
    assert manifest["columns"] == ["x1", "x2", "x3"]
    header = (out / "rep000_env1.csv").read_text().splitlines()[0]
    assert header == "env,y,x1,x2,x3"


def test_simulate_rerun_is_byte_identical(tmp_path):
    args = ["simulate", "--seed", "5", "--replicates", "1", "--m", "4", "--n-per-env", "40"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert read_tree(str(a)) == read_tree(str(b))


@pytest.fixture()
def simulated(tmp_path):
    out = tmp_path / "data"
    main(["simulate", "--out", str(out), "--seed", "1", "--m", "3", "--n-per-env", "150"])
    return [
        str(out / "rep000_env1.csv"),
        str(out / "rep000_env2.csv"),
        str(out / "rep000_test.csv"),
    ]


def test_fit_predict_end_to_end(simulated, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        [
            "fit-predict",
            "--data", *simulated,
            "--out", str(out),
            "--methods", "bimp-linear,lr,icp",
            "--max-subset-size", "2",
        ]
    )
    assert code == 0
    files = set(os.listdir(out))
    assert {"summary.csv", "predictions_bimp-linear.csv", "predictions_lr.csv",
            "predictions_icp.csv", "ensemble_bimp-linear.json",
            "reports_bimp-linear.json"} <= files
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "method,replicate,accuracy,mse,abstained,n_pairs,seconds"
    assert len(summary) == 4
    # wall clock is zeroed without --timing so reruns stay byte-identical
    assert all(line.endswith(",0.0") for line in summary[1:])
    ensemble = json.loads((out / "ensemble_bimp-linear.json").read_text())
    assert ensemble["variant"] == "linear"
    shown = capsys.readouterr().out
    assert "bimp-linear" in shown


def test_fit_predict_rerun_is_byte_identical(simulated, tmp_path):
    args = [
        "fit-predict", "--data", *simulated, "--methods", "bimp-linear,bimp-gam",
        "--max-subset-size", "2",
    ]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert read_tree(str(a)) == read_tree(str(b))


def test_fit_predict_plain_bimp_uses_variant(simulated, tmp_path):
    out = tmp_path / "run"
    code = main(
        ["fit-predict", "--data", *simulated, "--out", str(out),
         "--methods", "bimp", "--variant", "gam", "--max-subset-size", "2"]
    )
    assert code == 0
    assert "predictions_bimp-gam.csv" in os.listdir(out)


def test_fit_predict_unknown_method_exits_one(simulated, tmp_path, capsys):
    code = main(
        ["fit-predict", "--data", *simulated, "--out", str(tmp_path / "x"),
         "--methods", "forest"]
    )
    assert code == 1
    assert "unknown method" in capsys.readouterr().err


def test_fit_predict_missing_data_exits_two(tmp_path, capsys):
    code = main(
        ["fit-predict", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "y")]
    )
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_fit_predict_mismatched_headers_exit_one(simulated, tmp_path, capsys):
    crooked = tmp_path / "other.csv"
    crooked.write_text("env,y,a,b,c\n", encoding="utf-8")
    code = main(
        ["fit-predict", "--data", simulated[0], str(crooked), "--out", str(tmp_path / "z")]
    )
    assert code == 1
    assert "header" in capsys.readouterr().err


def test_reproduce_fig1(tmp_path, capsys):
    out = tmp_path / "fig1"
    code = main(
        ["reproduce", "fig1", "--out", str(out), "--n-per-env", "400", "--svg"]
    )
    assert code == 0
    files = set(os.listdir(out))
    assert files == {"fig1_samples.csv", "fig1_accuracy.csv", "fig1.svg"}
    accuracy_rows = (out / "fig1_accuracy.csv").read_text().splitlines()
    assert accuracy_rows[0] == "pair,accuracy"
    assert accuracy_rows[1].startswith("x3|x1,")
    assert accuracy_rows[2].startswith("x2|x1,")
    svg = (out / "fig1.svg").read_text()
    assert svg.startswith("<svg")
    assert "pair (x3, {x1})" in svg
    shown = capsys.readouterr().out
    assert "pair x3|x1" in shown


def test_reproduce_fig2_small(tmp_path):
    out = tmp_path / "fig2"
    code = main(
        ["reproduce", "fig2", "--out", str(out), "--replicates", "2",
         "--n-per-env", "300", "--svg"]
    )
    assert code == 0
    files = set(os.listdir(out))
    assert files == {"fig2_replicates.csv", "fig2_summary.csv", "fig2.svg"}
    rows = (out / "fig2_replicates.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 4  # two replicates, four methods
    summary = (out / "fig2_summary.csv").read_text().splitlines()
    assert summary[0].startswith("method,n_replicates,")
    assert len(summary) == 5


def test_reproduce_fig2_rerun_byte_identical(tmp_path):
    args = ["reproduce", "fig2", "--replicates", "2", "--n-per-env", "200"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert read_tree(str(a)) == read_tree(str(b))


def test_reproduce_table1_missing_file_exits_two(tmp_path, capsys):
    code = main(
        ["reproduce", "table1", "--out", str(tmp_path / "t"),
         "--census-path", str(tmp_path / "absent.data")]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "adult.data" in err
    assert "archive.ics.uci.edu" in err


def test_reproduce_table2_missing_file_exits_two(tmp_path, capsys):
    code = main(
        ["reproduce", "table2", "--out", str(tmp_path / "t"),
         "--mushroom-path", str(tmp_path / "absent.data")]
    )
    assert code == 2
    assert "agaricus-lepiota.data" in capsys.readouterr().err


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 2
