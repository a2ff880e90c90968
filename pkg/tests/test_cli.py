import json
import os

import pytest

from qqm import cli, runner
from qqm.errors import NumericalError

EM = {
    "schema_version": 1,
    "experiment": "EULER_MARUYAMA",
    "seed": 3,
    "sde": {"nu": 1.0, "mu": 0.0, "sigma": 0.7, "x0": 4.0, "t0": -0.2},
    "euler_maruyama": {"dt": 0.01, "n_paths": 2000, "slices": [0.0, 0.5], "n_bins": 20},
}
REORDER = {"schema_version": 1, "experiment": "REORDER_ANALYSIS", "reorder": {"n_points": 60}}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2) if isinstance(doc, dict) else doc)
    return str(p)


def manifest(out):
    with open(os.path.join(out, runner.MANIFEST)) as fh:
        return json.load(fh)


def test_missing_key_names_key_and_line(tmp_path, capsys):
    doc = json.loads(json.dumps(EM))
    del doc["sde"]["nu"]
    path = write(tmp_path, doc)
    assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "sde.nu" in err
    sde_line = open(path).read().splitlines().index('  "sde": {') + 1
    assert f"{path}:{sde_line}:" in err
    assert not (tmp_path / "o").exists()


def test_unknown_key_rejected(tmp_path, capsys):
    doc = dict(EM, euler_maruyama=dict(EM["euler_maruyama"], n_path=5))
    path = write(tmp_path, doc)
    assert cli.main(["run", path]) == 2
    err = capsys.readouterr().err
    line = next(i for i, s in enumerate(open(path).read().splitlines(), 1) if '"n_path"' in s)
    assert f":{line}: unknown key 'euler_maruyama.n_path'" in err


def test_invalid_json_and_bad_values(tmp_path, capsys):
    assert cli.main(["run", write(tmp_path, '{\n  "schema_version": 1,\n  oops\n}')]) == 2
    assert ":3: invalid JSON" in capsys.readouterr().err
    doc = dict(EM, sde=dict(EM["sde"], nu=-1.0))
    assert cli.main(["run", write(tmp_path, doc)]) == 2
    assert "invalid value for 'sde.nu'" in capsys.readouterr().err
    assert cli.main(["run", write(tmp_path, dict(EM, schema_version=9))]) == 2
    doc = dict(REORDER, experiment="SAMPLE", sde=EM["sde"], model="nowhere.json")
    assert cli.main(["run", write(tmp_path, doc)]) == 2
    assert "missing file" in capsys.readouterr().err


def test_manifest_lists_every_file(tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(["run", write(tmp_path, EM), "--out", out]) == 0
    m = manifest(out)
    listed = {f["path"] for f in m["files"]}
    assert listed == set(os.listdir(out)) - {runner.MANIFEST}
    assert {"moments.csv", "hist_t0.0.csv", "hist_t0.5.csv"} <= listed
    assert len(m["config_hash"]) == 40 and m["experiment"] == "EULER_MARUYAMA"
    assert "total" in m["timings"]
    assert [h["t"] for h in m["histograms"]] == [0.0, 0.5]


@pytest.mark.parametrize("doc", [EM, REORDER], ids=["euler", "reorder"])
def test_strict_deterministic_runs_are_byte_identical(tmp_path, doc):
    path = write(tmp_path, doc)
    outs = [str(tmp_path / n) for n in ("a", "b")]
    for o in outs:
        assert cli.main(["run", path, "--out", o, "--strict-deterministic"]) == 0
    fa, fb = manifest(outs[0])["files"], manifest(outs[1])["files"]
    assert fa == fb


def test_seed_override_changes_output(tmp_path):
    path = write(tmp_path, EM)
    assert cli.main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", path, "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    ma, mb = manifest(str(tmp_path / "a")), manifest(str(tmp_path / "b"))
    assert mb["config"]["seed"] == 4
    assert ma["config_hash"] != mb["config_hash"]
    sha = lambda m: {f["path"]: f["sha1"] for f in m["files"]}
    assert sha(ma)["moments.csv"] != sha(mb)["moments.csv"]
    assert cli.main(["run", path, "--seed", "-1"]) == 2


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("QQM_OUT", str(tmp_path / "root"))
    assert cli.main(["run", write(tmp_path, REORDER)]) == 0
    (sub,) = os.listdir(tmp_path / "root")
    assert sub.startswith("reorder_analysis-")
    assert os.path.exists(tmp_path / "root" / sub / runner.MANIFEST)


def test_compare_self_and_mismatch(tmp_path, capsys):
    a = str(tmp_path / "a")
    assert cli.main(["run", write(tmp_path, EM), "--out", a]) == 0
    ma = os.path.join(a, runner.MANIFEST)
    assert cli.main(["compare", ma, ma, "--out", str(tmp_path / "c")]) == 0
    with open(tmp_path / "c" / "compare.json") as fh:
        assert json.load(fh)["max_abs_difference"] == 0.0
    assert os.path.exists(tmp_path / "c" / "compare_t0.0.svg")
    other = dict(EM, euler_maruyama=dict(EM["euler_maruyama"], n_bins=30))
    b = str(tmp_path / "b")
    pb = write(tmp_path, other, "other.json")
    assert cli.main(["run", pb, "--out", b]) == 0
    capsys.readouterr()
    assert cli.main(["compare", ma, os.path.join(b, runner.MANIFEST)]) == 2
    err = capsys.readouterr().err
    assert "incompatible binning" in err and "cfg.json" in err and "other.json" in err


def test_numeric_abort_exits_3(tmp_path, monkeypatch, capsys):
    def boom(cfg, config_path, run):
        raise NumericalError("non-finite loss", epoch=7, where="z=0.1 t=0.2")
    monkeypatch.setitem(runner.EXPERIMENTS, "REORDER_ANALYSIS", boom)
    out = tmp_path / "o"
    assert cli.main(["run", write(tmp_path, REORDER), "--out", str(out)]) == 3
    assert "epoch 7" in capsys.readouterr().err
    assert not (out / runner.MANIFEST).exists()


def test_checkpoint_written(tmp_path):
    doc = {
        "schema_version": 1, "experiment": "QGAN_TRAIN", "seed": 1, "checkpoint_every": 2,
        "qgan": {"n_qubits": 2, "depth": 1, "epochs": 4, "batch_size": 8, "ks_samples": 100,
                 "n_data": 200, "n_eval": 500, "epsilon": 10.0, "grid_points": 21},
    }
    out = tmp_path / "o"
    assert cli.main(["run", write(tmp_path, doc), "--out", str(out)]) == 0
    with open(out / "checkpoint.json") as fh:
        assert json.load(fh)["epoch"] == 4
    header = (out / "qgan_loss.csv").read_text().splitlines()[0]
    assert header == "epoch,L_D,L_G,gap,KS,L_G_ns"


def test_thread_flag_validation():
    assert cli.main(["run", "x.json", "--threads", "0"]) == 2
