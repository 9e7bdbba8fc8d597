import json
import subprocess
import sys

import pytest

from hypermeta import checkpoint
from hypermeta.cli import main

from conftest import CONFIG_DIR

TINY = str(CONFIG_DIR / "tiny.conf")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cohort"
    assert main(["synth", "--spec", TINY, "--seed", "0", "--out", str(out)]) == 0
    return out


def test_synth_writes_subject_dirs(cohort_dir):
    subjects = sorted(p.name for p in cohort_dir.iterdir())
    assert len(subjects) == 3
    assert (cohort_dir / subjects[0] / "features.csv").is_file()
    assert (cohort_dir / subjects[0] / "labels.csv").read_text().startswith("t,label\n")


def test_train_then_test(cohort_dir, tmp_path, capsys):
    ckpt = tmp_path / "model.ckpt"
    code, out, _ = run(capsys, "train", "--data", str(cohort_dir), "--config", TINY, "--out", str(ckpt))
    assert code == 0
    summary = json.loads(out)
    assert summary["iterations"] == 4
    log = (tmp_path / "model.ckpt.log.jsonl").read_text().splitlines()
    assert [json.loads(line)["iteration"] for line in log] == [1, 2, 3, 4]
    assert len(checkpoint.load(ckpt)) == 13

    subject = sorted(cohort_dir.iterdir())[0]
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "test", "--ckpt", str(ckpt), "--subject", str(subject), "--config", TINY,
                       "--report", str(report))
    assert code == 0
    data = json.loads(report.read_text())
    assert data == json.loads(out)
    assert data["metadata"]["subject_id"] == subject.name
    assert set(data) >= {"accuracy", "f1", "macro_f1", "confusion", "n_eval", "control"}
    assert (tmp_path / "report.confusion.csv").read_text().startswith("true\\pred,0,1,2\n")


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--config", TINY)
    assert code == 0
    lines = out.splitlines()
    assert [line.split()[0] for line in lines] == ["projection", "coefficients", "attention", "mlp",
                                                   "classifier", "overall"]
    assert "PASS" in lines[-1]


def test_preflight_command(cohort_dir, capsys):
    code, out, _ = run(capsys, "preflight", "--data", str(cohort_dir), "--config", TINY)
    assert code == 0
    data = json.loads(out)
    assert len(data["subjects"]) == 3 and all(s["feasible"] for s in data["subjects"])


def test_sweep_command_marks_failures(tmp_path, capsys):
    out_path = tmp_path / "sweep.json"
    code, out, _ = run(capsys, "sweep", "--axis", "k_shot", "--values", "1,5000", "--config", TINY,
                       "--out", str(out_path))
    assert code == 1
    rows = json.loads(out_path.read_text())["rows"]
    assert [r["status"] == "ok" for r in rows] == [True, False]


@pytest.mark.parametrize("argv, kind", [
    (["train", "--data", "/nonexistent", "--out", "x.ckpt"], "MissingFileError"),
    (["gradcheck", "--config", "/nonexistent.conf"], "ConfigError"),
    (["sweep", "--axis", "beta", "--values", "1"], "CLIError"),
    (["sweep", "--axis", "k_shot", "--values", "a,b", "--config", TINY], "CLIError"),
    (["frobnicate"], "CLIError"),
    ([], "CLIError"),
])
def test_errors_are_one_line(argv, kind, capsys):
    code, out, err = run(capsys, *argv)
    assert code != 0
    assert err.count("\n") == 1 and err.startswith(f"error: {kind}: ")


def test_test_command_rejects_corrupt_checkpoint(cohort_dir, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"nope")
    subject = sorted(cohort_dir.iterdir())[0]
    code, _, err = run(capsys, "test", "--ckpt", str(bad), "--subject", str(subject), "--config", TINY)
    assert code == 1 and err.startswith("error: CheckpointError:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hypermeta", "preflight", "--data", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.startswith("error: ") and proc.stderr.count("\n") == 1
