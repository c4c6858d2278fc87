import json

import numpy as np
import pytest

from fosnet.cli import run


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--design", "2", "--n", "120", "--seed", "3", "--out", str(out)]) == 0
    return out


def _lines(path):
    return path.read_text().splitlines()


def test_simulate_outputs(simdir):
    header = _lines(simdir / "data.csv")[0].split(",")
    assert header[:2] == ["x1", "x2"] and header[20] == "t=0.0" and len(header) == 60
    truth = json.loads((simdir / "truth.json").read_text())
    assert truth["config"]["design"] == 2


def test_smooth_and_fpca(simdir, tmp_path):
    assert run(["smooth", "--data", str(simdir), "--kb", "13", "--out", str(tmp_path / "c.csv"),
                "--dump-basis", str(tmp_path / "b.json")]) == 0
    rows = _lines(tmp_path / "c.csv")
    assert rows[0].split(",")[:2] == ["subject_id", "c_1"] and len(rows) == 121
    basis = json.loads((tmp_path / "b.json").read_text())
    assert np.asarray(basis["eval_matrix"]).shape == (13, 40)
    assert run(["fpca", "--data", str(simdir), "--tau", "0.95", "--out", str(tmp_path / "fp")]) == 0
    for name in ("mean", "eigenvalues", "eigenfunctions", "scores"):
        assert (tmp_path / "fp" / f"{name}.csv").exists()


def test_train_predict_round_trip(simdir, tmp_path):
    model = tmp_path / "m.json"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 3, "layers": [8, 4], "kb": 9}))
    assert run(["train", "--data", str(simdir), "--variant", "nnbr", "--config", str(cfg), "--kb", "10",
                "--penalty", "curvature", "--lambda", "1e-7", "--out", str(model),
                "--trace", str(tmp_path / "trace.csv")]) == 0
    obj = json.loads(model.read_text())
    # flag beats file beats default
    assert obj["config"]["kb"] == 10 and obj["config"]["epochs"] == 3 and obj["config"]["hidden"] == [8, 4]
    assert obj["config"]["lam"] == 1e-7
    assert len(_lines(tmp_path / "trace.csv")) == 4

    rows = _lines(simdir / "data.csv")
    (tmp_path / "x.csv").write_text("\n".join(",".join(r.split(",")[:20]) for r in rows[:4]) + "\n")
    (tmp_path / "t.csv").write_text("time\n0\n0.33\n1\n")
    pred = tmp_path / "p.csv"
    assert run(["predict", "--model", str(model), "--x", str(tmp_path / "x.csv"),
                "--times", str(tmp_path / "t.csv"), "--out", str(pred),
                "--coef-out", str(tmp_path / "coef.csv")]) == 0
    assert _lines(pred)[0] == "t=0.0,t=0.33,t=1.0" and len(_lines(pred)) == 4
    assert _lines(tmp_path / "coef.csv")[0].split(",")[20] == "c_1"

    (tmp_path / "bad.csv").write_text("time\n1.5\n")
    assert run(["predict", "--model", str(model), "--x", str(tmp_path / "x.csv"),
                "--times", str(tmp_path / "bad.csv"), "--out", str(pred)]) == 1


def test_config_errors_exit_2(simdir, tmp_path, capsys):
    code = run(["train", "--data", str(simdir), "--variant", "nnbb", "--penalty", "curvature",
                "--lambda", "0.1", "--out", str(tmp_path / "m.json")])
    err = capsys.readouterr().err
    assert code == 2 and "penalty" in err and len(err.strip().splitlines()) == 1
    assert run(["train", "--data", str(simdir), "--variant", "nnbr", "--lambda", "0.1",
                "--out", str(tmp_path / "m.json")]) == 2
    assert run(["frobnicate"]) == 2
    assert run(["reproduce", "--design", "7"]) == 2
    assert run(["cv", "--data", str(simdir), "--variant", "fos", "--grid", "bogus=1"]) == 2


def test_runtime_errors_exit_1(tmp_path):
    assert run(["smooth", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "c.csv")]) == 1


def test_cv_command(simdir, tmp_path):
    out = tmp_path / "cv.csv"
    assert run(["cv", "--data", str(simdir), "--variant", "nnbr", "--penalty", "curvature", "--epochs", "2",
                "--layers", "4", "--grid", "lambda=1e-1,1e-2,1e-3", "--folds", "2", "--cv-axis", "time",
                "--out", str(out)]) == 0
    rows = _lines(out)
    assert rows[0] == "lam,mean_msep,n_params,best" and len(rows) == 4
    assert sum(r.endswith(",1") for r in rows[1:]) == 1


def test_evaluate_share_basis(simdir, tmp_path):
    out = tmp_path / "ev"
    assert run(["evaluate", "--data", str(simdir), "--variants", "fos,nnbb", "--reps", "2", "--epochs", "2",
                "--layers", "4", "--tune-kb", "9,13", "--share-basis", "--jobs", "1", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run"]["fit"]["fos"]["kb"] == manifest["run"]["fit"]["nnbb"]["kb"]
    assert _lines(out / "report.csv")[0] == "variant,rep,msep"


def test_reproduce_byte_identical(tmp_path):
    args = ["reproduce", "--design", "2", "--reps", "2", "--seed", "9", "--n", "100", "--epochs", "3",
            "--variants", "fos,nnbr", "--jobs", "1"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("report.csv", "summary.json", "table.txt", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["run"]["fit"]["nnbr"]["epochs"] == 3 and manifest["run"]["fit"]["nnbr"]["batch"] == 128
    assert "numpy" in manifest["versions"]


def test_bench(tmp_path):
    out = tmp_path / "bench.csv"
    assert run(["bench", "--p-list", "3,6", "--n", "60", "--epochs", "2", "--out", str(out)]) == 0
    rows = _lines(out)
    assert rows[0] == "p,fos_seconds,nn_seconds" and len(rows) == 3


def test_long_format_input(simdir, tmp_path):
    from fosnet.dataset import load_dataset, save_dataset

    ds = load_dataset(simdir)
    mask = np.ones_like(ds.values)
    mask[::3, 5:9] = 0
    save_dataset(ds.with_values(ds.values, mask), tmp_path / "long", "long-csv")
    assert run(["train", "--data", str(tmp_path / "long"), "--variant", "nnsr", "--epochs", "2",
                "--kb", "10", "--out", str(tmp_path / "m.json")]) == 0
