import csv
import os

import pytest

from cwsoc.cli import main


def files(folder):
    return {name: open(os.path.join(folder, name), "rb").read()
            for name in sorted(os.listdir(folder)) if name.endswith(".csv")}


def summary(folder):
    out = {}
    for line in open(os.path.join(folder, "summary.txt")):
        key, sep, value = line.partition(" = ")
        if sep:
            out[key.strip()] = value.strip()
    return out


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def test_sample_is_deterministic(tmp_path):
    args = ["sample", "--measure", "gaussian", "--n", "50,200", "--samples", "500", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = files(tmp_path / "a" / "sample"), files(tmp_path / "b" / "sample")
    assert set(a) == {"samples_n50.csv", "samples_n200.csv"}
    assert a == b
    assert header(tmp_path / "a" / "sample" / "samples_n50.csv") == ["S_n", "T_n"]
    assert main(args[:-1] + ["4", "--out", str(tmp_path / "c")]) == 0
    assert files(tmp_path / "c" / "sample") != a


def test_manifest_reproduces_run(tmp_path):
    first = tmp_path / "first"
    args = ["sample", "--measure", "uniform", "--param", "a=1", "--sampler", "mcmc",
            "--n", "20", "--sweeps", "400", "--chains", "2", "--seed", "11", "--out", str(first)]
    assert main(args) in (0, 1)
    manifest = first / "sample" / "manifest.txt"
    text = manifest.read_text()
    assert "[versions]" in text and "numpy" in text
    second = tmp_path / "second"
    assert main(["sample", "--config", str(manifest), "--out", str(second)]) in (0, 1)
    assert files(first / "sample") == files(second / "sample")
    assert (second / "sample" / "manifest.txt").read_text() == \
        text.replace(str(first), str(second))


def test_cramer_eval_points_and_headers(tmp_path):
    out = tmp_path / "o"
    assert main(["cramer-eval", "--measure", "gaussian", "--point", "0.5,1.0",
                 "--point", "0,1", "--out", str(out)]) == 0
    path = out / "cramer-eval" / "cramer.csv"
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["x", "y", "I"]
    assert float(rows[1][2]) == pytest.approx(0.143841036, rel=1e-8)
    assert float(rows[2][2]) == pytest.approx(0.0, abs=1e-13)


def test_lambda_eval_grid(tmp_path):
    assert main(["lambda-eval", "--measure", "bernoulli", "--grid", "5,4",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "lambda-eval" / "lambda.csv")))
    assert rows[0][:3] == ["u", "v", "Lambda"]
    assert len(rows) == 21


def test_check_expansion_summary(tmp_path):
    assert main(["check-expansion", "--measure", "uniform", "--out", str(tmp_path)]) == 0
    s = summary(tmp_path / "check-expansion")
    assert s["overall"] == "PASS"
    rows = {r[0]: r for r in csv.reader(open(tmp_path / "check-expansion" / "expansion.csv"))}
    assert rows["coefficient"] == ["coefficient", "fitted", "predicted", "relative_error"]
    assert float(rows["a40"][1]) == pytest.approx(1.35, rel=0.02)


def test_check_expansion_bernoulli_is_subsystem_error(tmp_path, capsys):
    assert main(["check-expansion", "--measure", "bernoulli", "--out", str(tmp_path)]) == 3
    assert "error [cramer]" in capsys.readouterr().err


def test_failed_check_exits_one(tmp_path):
    code = main(["fluctuation-test", "--measure", "bernoulli", "--n", "10,20",
                 "--samples", "2000", "--set", "thresholds.ks_max=1e-6", "--out", str(tmp_path)])
    assert code == 1
    assert summary(tmp_path / "fluctuation-test")["overall"] == "FAIL"


@pytest.mark.parametrize("args", [
    ["sample", "--measure", "cauchy"],
    ["sample", "--n", "100,10"],
    ["sample", "--set", "experiment.nonsense=1"],
    ["sample", "--set", "noequals"],
    ["sample", "--measure", "uniform", "--sampler", "exact"],
    ["sample", "--config", "/nonexistent/cfg.ini"],
])
def test_config_errors_exit_two(tmp_path, capsys, args):
    assert main(args + ["--out", str(tmp_path)]) == 2
    assert "error [config]" in capsys.readouterr().err


def test_report_without_artifacts(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) != 0
    captured = capsys.readouterr()
    assert "no artifacts found" in captured.out + captured.err


def test_report_aggregates(tmp_path):
    main(["cramer-eval", "--measure", "gaussian", "--grid", "4,4", "--out", str(tmp_path)])
    main(["check-expansion", "--measure", "bernoulli", "--out", str(tmp_path)])
    main(["lambda-eval", "--grid", "3,3", "--out", str(tmp_path)])
    assert main(["report", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "report.txt").read_text()
    assert "cramer-eval" in text and "lambda-eval" in text
