import json

import pytest

from tskfuzz.cli import main
from tskfuzz.diagnostics import read_rows_csv


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def make_synth(capsys, tmp_path, name="data", **over):
    args = {"n": "400", "d": "10", "seed": "5"}
    args.update({k: str(v) for k, v in over.items()})
    out = tmp_path / name
    argv = ["synth", "--out", str(out)]
    for k, v in args.items():
        argv += [f"--{k}", v]
    code, stdout, _ = run(capsys, *argv)
    assert code == 0
    return str(out / "synthetic.csv")


def train_args(data, out, **over):
    args = {
        "data": data, "out": str(out), "seed": "5", "rules": "2", "lr": "0.05",
        "batch-size": "64", "max-epochs": "30", "patience": "30",
        "kmeans-restarts": "2",
    }
    args.update({k: str(v) for k, v in over.items()})
    argv = ["train"]
    for k, v in args.items():
        argv += [f"--{k}", v]
    return argv


# ---- synth ------------------------------------------------------------------


def test_synth_writes_csv_and_config(capsys, tmp_path):
    out = tmp_path / "s"
    code, stdout, _ = run(capsys, "synth", "--out", str(out), "--n", "50", "--d", "3")
    assert code == 0
    doc = json.loads(stdout)
    assert doc["n"] == 50 and doc["d"] == 3
    assert (out / "synthetic.csv").exists()
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["command"] == "synth"
    assert resolved["settings"]["synth"]["n"] == 50


def test_synth_deterministic(capsys, tmp_path):
    a = make_synth(capsys, tmp_path, "a", n=60, d=4, seed=9)
    b = make_synth(capsys, tmp_path, "b", n=60, d=4, seed=9)
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_synth_requires_out(capsys):
    code, _, err = run(capsys, "synth", "--n", "10")
    assert code == 1
    assert "--out" in err


# ---- train ------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    # one full train run shared by the tests below
    tmp = tmp_path_factory.mktemp("train_run")

    import contextlib
    import io

    def quiet_run(*argv):
        buf_out, buf_err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(buf_out), contextlib.redirect_stderr(buf_err):
            code = main(list(argv))
        return code, buf_out.getvalue(), buf_err.getvalue()

    code, stdout, _ = quiet_run("synth", "--out", str(tmp / "data"), "--n", "400",
                                "--d", "10", "--seed", "5")
    assert code == 0
    data = str(tmp / "data" / "synthetic.csv")
    out = tmp / "run"
    code, stdout, err = quiet_run(*train_args(data, out))
    assert code == 0, err
    return tmp, data, out, json.loads(stdout)


def test_train_outputs(trained):
    _, _, out, stdout = trained
    for name in ("checkpoint.json", "train_report.json", "diagnostics.csv",
                 "test_data.csv", "config.json", "metadata.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "train_report.json").read_text())
    assert report["best_epoch"] >= 1
    assert report["variant"] == "htsk"
    assert report["n_train"] + report["n_val"] + report["n_test"] == 400
    assert max(report["val_accuracy"]) >= 0.95
    assert stdout["test_accuracy"] == report["test_accuracy"]
    # wall time is quarantined in metadata.json, not the report
    assert "wall_time_s" not in report
    assert "wall_time_s" in json.loads((out / "metadata.json").read_text())


def test_train_diagnostics_have_epoch_zero(trained):
    _, _, out, _ = trained
    rows = read_rows_csv(out / "diagnostics.csv")
    fired = [r for r in rows if r["metric"] == "mean_fired_rules"]
    assert fired[0]["epoch"] == 0  # measured at initialization, before training


def test_eval_matches_train_report(capsys, trained):
    _, _, out, _ = trained
    report = json.loads((out / "train_report.json").read_text())
    code, stdout, _ = run(capsys, "eval", "--checkpoint", str(out / "checkpoint.json"),
                          "--data", str(out / "test_data.csv"))
    assert code == 0
    doc = json.loads(stdout)
    assert doc["accuracy"] == report["test_accuracy"]
    assert doc["n_samples"] == report["n_test"]


def test_eval_dimension_mismatch(capsys, trained, tmp_path):
    _, _, out, _ = trained
    wrong = make_synth(capsys, tmp_path, "wrong", n=30, d=4, seed=1)
    code, _, err = run(capsys, "eval", "--checkpoint", str(out / "checkpoint.json"),
                       "--data", wrong)
    assert code == 1
    assert "4" in err and "10" in err  # names both dimensionalities


def test_train_rerun_is_byte_identical(capsys, tmp_path):
    data = make_synth(capsys, tmp_path, "data", n=120, d=5, seed=3)
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        code, _, err = run(capsys, *train_args(data, out, seed=3, **{"max-epochs": 6,
                                                                     "patience": 6}))
        assert code == 0, err
        outs.append(out)
    for name in ("train_report.json", "checkpoint.json", "diagnostics.csv",
                 "config.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_train_missing_data_file(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", "/nope/missing.csv",
                       "--out", str(tmp_path / "x"))
    assert code == 1
    assert "/nope/missing.csv" in err


def test_train_landscape_rows(capsys, tmp_path):
    data = make_synth(capsys, tmp_path, "data", n=120, d=5, seed=7)
    out = tmp_path / "ls"
    argv = train_args(data, out, seed=7, **{"max-epochs": 2, "patience": 2,
                                            "landscape-every": 2})
    code, _, err = run(capsys, *argv, "--landscape")
    assert code == 0, err
    rows = read_rows_csv(out / "diagnostics.csv")
    probes = [r for r in rows if r["metric"].startswith("landscape_loss_s")]
    assert probes
    assert all(r["epoch"] % 2 == 0 for r in probes)


# ---- config file layering ---------------------------------------------------


def test_config_file_and_flag_precedence(capsys, tmp_path):
    data = make_synth(capsys, tmp_path, "data", n=120, d=5, seed=2)
    ini = tmp_path / "run.ini"
    ini.write_text("[init]\nrules = 3\nh = 2.0\n\n[train]\nmax_epochs = 4\n")
    out = tmp_path / "cfg"
    code, _, err = run(capsys, "train", "--config", str(ini), "--data", data,
                       "--out", str(out), "--rules", "4", "--patience", "4",
                       "--seed", "2")
    assert code == 0, err
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["settings"]["init"]["rules"] == 4  # flag wins
    assert resolved["settings"]["init"]["h"] == 2.0  # file wins over default
    assert resolved["settings"]["train"]["max_epochs"] == 4
    report = json.loads((out / "train_report.json").read_text())
    assert report["epochs_run"] <= 4


def test_config_file_unknown_keys_rejected(capsys, tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[init]\nrulez = 3\n")
    code, _, err = run(capsys, "train", "--config", str(ini), "--data", "x.csv",
                       "--out", str(tmp_path / "o"))
    assert code == 1 and "rulez" in err

    ini.write_text("[nonsense]\nx = 1\n")
    code, _, err = run(capsys, "train", "--config", str(ini), "--data", "x.csv",
                       "--out", str(tmp_path / "o2"))
    assert code == 1 and "nonsense" in err


def test_bad_flags_exit_one(capsys, tmp_path):
    code, _, _ = run(capsys, "train", "--no-such-flag")
    assert code == 1
    code, _, _ = run(capsys, "train", "--variant", "l3",
                     "--data", "x.csv", "--out", str(tmp_path / "o"))
    assert code == 1
    code, _, _ = run(capsys, "sweep", "--dims", "5,abc", "--out", str(tmp_path / "o3"))
    assert code == 1


# ---- sweep ------------------------------------------------------------------


def test_sweep_csv_row_count_and_rerun(capsys, tmp_path):
    argv = ["sweep", "--variant", "vanilla", "--dims", "3,5", "--rule-counts", "2",
            "--epochs-at", "0", "--repeats", "2", "--sweep-samples", "60",
            "--kmeans-iters", "2", "--seed", "4"]
    outs = []
    for name in ("sw1", "sw2"):
        out = tmp_path / name
        code, stdout, err = run(capsys, *argv, "--out", str(out))
        assert code == 0, err
        outs.append(out)
    assert (outs[0] / "sweep.csv").read_bytes() == (outs[1] / "sweep.csv").read_bytes()
    assert (outs[0] / "sweep_summary.json").exists()

    rows = read_rows_csv(outs[0] / "sweep.csv")
    fired = [r for r in rows if r["metric"] == "mean_fired_rules"]
    assert len(fired) == 2 * 1 * 1 * 1 * 2  # dims x rules x h x epochs_at x repeats


def test_sweep_jobs_flag_keeps_output_stable(capsys, tmp_path):
    argv = ["sweep", "--variant", "htsk", "--dims", "3", "--rule-counts", "2",
            "--epochs-at", "0", "--repeats", "2", "--sweep-samples", "60",
            "--kmeans-iters", "2", "--seed", "4"]
    out1, out2 = tmp_path / "seq", tmp_path / "par"
    assert run(capsys, *argv, "--out", str(out1))[0] == 0
    assert run(capsys, *argv, "--out", str(out2), "--jobs", "2")[0] == 0
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()


# ---- hsweep -----------------------------------------------------------------


def test_hsweep_single_h_single_row(capsys, tmp_path):
    data = make_synth(capsys, tmp_path, "data", n=160, d=5, seed=6)
    out = tmp_path / "hs"
    code, stdout, err = run(capsys, "hsweep", "--data", data, "--out", str(out),
                            "--variant", "htsk", "--h-values", "1.0",
                            "--rules", "2", "--max-epochs", "5", "--patience", "5",
                            "--kmeans-restarts", "1", "--seed", "6")
    assert code == 0, err
    rows = read_rows_csv(out / "hsweep.csv")
    assert len(rows) == 1
    assert rows[0]["metric"] == "test_accuracy" and rows[0]["h"] == 1.0


def test_hsweep_default_covers_both_variants(capsys, tmp_path):
    data = make_synth(capsys, tmp_path, "data", n=160, d=5, seed=8)
    out = tmp_path / "hs2"
    code, stdout, err = run(capsys, "hsweep", "--data", data, "--out", str(out),
                            "--h-values", "0.5,1.0", "--rules", "2",
                            "--max-epochs", "5", "--patience", "5",
                            "--kmeans-restarts", "1", "--seed", "8")
    assert code == 0, err
    rows = read_rows_csv(out / "hsweep.csv")
    assert len(rows) == 4
    assert {(r["variant"], r["h"]) for r in rows} == {
        ("htsk", 0.5), ("htsk", 1.0), ("logtsk", 0.5), ("logtsk", 1.0)}
    doc = json.loads(stdout)
    assert len(doc["results"]) == 4


# ---- gradcheck --------------------------------------------------------------


def test_gradcheck_passes_at_default_tolerance(capsys):
    code, stdout, err = run(capsys, "gradcheck", "--checks", "6", "--dims", "1,3",
                            "--rules", "1,2", "--classes", "2", "--seed", "11")
    assert code == 0, err
    doc = json.loads(stdout)
    assert doc["checks"] == 6
    assert doc["max_relative_error"] <= doc["tolerance"]


def test_gradcheck_fails_with_impossible_tolerance(capsys):
    code, _, err = run(capsys, "gradcheck", "--checks", "2", "--dims", "2",
                       "--rules", "2", "--classes", "2", "--tol", "1e-18")
    assert code == 2  # numeric failure, distinct from config errors
    assert "gradient check" in err
