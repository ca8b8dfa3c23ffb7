import json

import numpy as np
import pytest

from ejectshap import kernels
from ejectshap.cli import main
from ejectshap.model_io import read_attributions, read_model


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--preset", "e1-uncorr", "--seed", "2", "--out", str(d / "data")]) == 0
    assert main(["train", "--data", str(d / "data" / "train.csv"), "--trees", "8", "--seed", "2",
                 "--out-model", str(d / "model" / "model.json")]) == 0
    return d


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_synth_and_train_manifests(workspace):
    m = manifest(workspace / "data")
    assert m["subcommand"] == "synth" and m["seeds"]["data"] == 2
    assert "generate" in m["timings"] and {"wall_s", "cpu_s"} <= set(m["timings"]["generate"])
    t = manifest(workspace / "model")
    assert t["metrics"]["n_trees"] == 8 and t["kernel_backend"] == kernels.backend()
    assert read_model(workspace / "model" / "model.json").metadata["training_data"].endswith("train.csv")


def test_explain_all_methods(workspace):
    out = workspace / "ex"
    rc = main(["explain", "--model", str(workspace / "model" / "model.json"),
               "--data", str(workspace / "data" / "valid.csv"), "--method", "all",
               "--reference", "train", "--out", str(out)])
    assert rc == 0
    names, atts = read_attributions(out / "attributions.csv")
    assert len(names) == 13 and len(atts) == 60 * 3
    assert (out / "null_flags.csv").exists() and (out / "predictions.csv").exists()
    m = manifest(out)
    assert m["checks"]["eject_local_dummy_violations"] == 0
    assert m["checks"]["max_efficiency_gap"] < 1e-9


def test_explain_jobs_preserve_order(workspace):
    args = ["explain", "--model", str(workspace / "model" / "model.json"),
            "--data", str(workspace / "data" / "valid.csv"), "--method", "treeshap"]
    assert main(args + ["--out", str(workspace / "serial")]) == 0
    assert main(args + ["--jobs", "2", "--out", str(workspace / "par")]) == 0
    a = (workspace / "serial" / "attributions.csv").read_text()
    b = (workspace / "par" / "attributions.csv").read_text()
    assert a == b


def test_explain_engines_agree(workspace):
    base = ["explain", "--model", str(workspace / "model" / "model.json"),
            "--data", str(workspace / "data" / "valid.csv"), "--method", "eject"]
    assert main(base + ["--engine", "reduced", "--drop-base", "--out", str(workspace / "r")]) == 0
    assert main(base + ["--engine", "auto", "--drop-base", "--out", str(workspace / "a")]) == 0
    _, r = read_attributions(workspace / "r" / "attributions.csv")
    _, a = read_attributions(workspace / "a" / "attributions.csv")
    for x, y in zip(r, a):
        np.testing.assert_allclose(x.phi, y.phi, rtol=0, atol=1e-12)


def test_explain_usage_errors(workspace, capsys):
    base = ["explain", "--model", str(workspace / "model" / "model.json"),
            "--data", str(workspace / "data" / "valid.csv"), "--out", str(workspace / "bad")]
    assert main(base + ["--method", "interventional"]) == 2
    assert "--reference" in capsys.readouterr().err
    assert main(base + ["--method", "eject", "--engine", "leafwise"]) == 2


def test_validation_failures(workspace, tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{"format_version": "1"}')
    assert main(["explain", "--model", str(bad), "--data", str(workspace / "data" / "valid.csv"),
                 "--out", str(tmp_path / "o")]) == 3
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1,zz\n")
    assert main(["train", "--data", str(csv), "--out-model", str(tmp_path / "x.json")]) == 3
    assert main(["explain", "--model", str(workspace / "model" / "model.json"), "--data", str(csv),
                 "--out", str(tmp_path / "o")]) == 3


def test_usage_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["explain"])
    assert exc.value.code == 2
    assert main(["synth", "--n-informative", "2", "--expr-diff", "-1", "--out", "unused"]) == 2


def test_verify_exit_codes(tmp_path):
    assert main(["verify", "--cases", "5", "--out", str(tmp_path / "ok")]) == 0
    assert main(["verify", "--cases", "5", "--inject-bug", "cover-ratio", "--out", str(tmp_path / "bug")]) == 4
    repro = json.loads((tmp_path / "bug" / "repro.json").read_text())
    assert repro["check"] == "oracle_equivalence" and repro["seed"] == 0


def test_import_dump(tmp_path):
    dump = tmp_path / "dump.json"
    dump.write_text(json.dumps([{
        "nodeid": 0, "split": "f1", "split_condition": 0.5, "yes": 1, "no": 2, "missing": 1, "cover": 10,
        "children": [{"nodeid": 1, "leaf": -0.2, "cover": 4}, {"nodeid": 2, "leaf": 0.3, "cover": 6}],
    }]))
    assert main(["import-dump", "--dump", str(dump), "--feature-names", "a,b,c",
                 "--out-model", str(tmp_path / "m" / "model.json")]) == 0
    model = read_model(tmp_path / "m" / "model.json")
    assert model.feature_names == ("a", "b", "c") and model.trees[0].features[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text(dump.read_text().replace('"missing": 1', '"missing": 2'))
    assert main(["import-dump", "--dump", str(bad), "--out-model", str(tmp_path / "n.json")]) == 3


def test_report_sv_star(workspace):
    ex = workspace / "ex"
    if not (ex / "attributions.csv").exists():
        pytest.skip("explain output missing")
    out = workspace / "rep"
    assert main(["report", "sv-star", "--explanations", str(ex / "attributions.csv"),
                 "--predictions", str(ex / "predictions.csv"), "--null-flags", str(ex / "null_flags.csv"),
                 "--data", str(workspace / "data" / "valid.csv"), "--out", str(out)]) == 0
    text = (out / "sv_star_summary.csv").read_text()
    assert text.startswith("method,feature,status") and "interventional" in text
    assert (out / "residuals.csv").read_text().count("\n") == 2 * 13 + 1


def test_bench_on_model(workspace, capsys):
    out = workspace / "bench"
    assert main(["bench", "--model", str(workspace / "model" / "model.json"),
                 "--data", str(workspace / "data" / "valid.csv"), "--repeats", "2",
                 "--backend", "both" if len(kernels.available_backends()) > 1 else kernels.backend(),
                 "--out", str(out)]) == 0
    summary = json.loads((out / "bench_summary.json").read_text())
    assert "eject/treeshap" in " ".join(summary["ratios"])
    assert "unique_path_features_hist" in summary["structure"]
    assert "ratio" in capsys.readouterr().out
