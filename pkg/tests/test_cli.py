import json
import subprocess
import sys

import numpy as np
import pytest

from mmmdesign import cli, io


def run(*argv):
    return cli.main([str(a) for a in argv])


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and not p.name.endswith("manifest.json")}


def test_shapes_gen_is_reproducible(tmp_path):
    assert run("shapes", "gen", "--count", 20, "--seed", 7, "--out", tmp_path / "a") == 0
    assert run("shapes", "gen", "--count", 20, "--seed", 7, "--out", tmp_path / "b") == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    m = io.read_json(tmp_path / "a" / "manifest.json")
    assert m["command"] == "shapes gen" and m["seed"] == 7 and m["versions"]["oracle"]


def test_seed_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MMM_SEED", "7")
    run("shapes", "gen", "--count", 5, "--out", tmp_path / "env")
    run("shapes", "gen", "--count", 5, "--seed", 7, "--out", tmp_path / "flag")
    assert _files(tmp_path / "env") == _files(tmp_path / "flag")


def test_config_file_with_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"count": 4, "seed": 3, "n": 32}))
    run("shapes", "gen", "--config", cfg, "--count", 6, "--out", tmp_path / "g")
    meta = io.read_json(tmp_path / "g" / "ground_set.json")
    assert meta["count"] == 6 and meta["seed"] == 3 and meta["n"] == 32


def test_unknown_flag_prints_usage_and_exits_1(capsys):
    assert run("train", "--bogus", 1) == 1
    assert "usage" in capsys.readouterr().err


def test_validation_and_runtime_exit_codes(tmp_path):
    assert run("shapes", "blend", "--classes", "nope", "--weights", 1, "--out", tmp_path / "x.mmt") == 1
    assert run("shapes", "decode", "--feature", tmp_path / "missing.mmt", "--out", tmp_path / "x.pgm") == 1
    assert run("shapes", "gen", "--count", 3) == 1  # no --out
    assert run("acquire", "lhs", "--n", 2, "--out", tmp_path / "nodir" / "sub" / "p.csv") == 0


def test_help_lists_flags_with_units():
    out = subprocess.run([sys.executable, "-m", "mmmdesign.cli", "optimize", "multi", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--seed", "--config", "--out", "--jobs", "--eta-s", "radians", "--n-rep"):
        assert flag in out.stdout


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    steps = [
        ("shapes", "gen", "--count", 30, "--seed", 7, "--out", d / "gs"),
        ("acquire", "diverse", "--ground-set", d / "gs", "--k", 6, "--out", d / "sel.json"),
        ("acquire", "lhs", "--n", 3, "--restarts", 50, "--seed", 1, "--out", d / "ph.csv"),
        ("dataset", "build", "--ground-set", d / "gs", "--selection", d / "sel.json", "--phases", d / "ph.csv",
         "--n", 8, "--split", 0.5, "--jobs", 1, "--out", d / "ds"),
        ("train", "--dataset", d / "ds", "--modes", 4, "--width", 4, "--lastwidth", 8, "--depth", 2,
         "--epochs", 30, "--lr", 0.01, "--out", d / "tr"),
        ("optimize", "multi", "--model", d / "tr" / "model.mma", "--ground-set", d / "gs", "--n-rep", 3,
         "--steps", 5, "--jobs", 1, "--baseline", 5, "--out", d / "opt"),
        ("pareto", "filter", "--csv", d / "opt" / "restarts.csv", "--out", d / "front.csv"),
        ("pareto", "select", "--csv", d / "opt" / "restarts.csv", "--weights", "1,1,1", "--out", d / "pick.json"),
    ]
    codes = [run(*s) for s in steps]
    return d, codes


def test_desk_pipeline_script(pipeline):
    d, codes = pipeline
    assert codes == [0] * len(codes)
    header, rows = io.read_csv(d / "opt" / "restarts.csv")
    assert len(rows) == 3 and header[-1] == "pareto"
    assert any(r[-1] == "1" for r in rows)
    assert (d / "tr" / "loss.png").read_bytes().startswith(b"\x89PNG")
    assert (d / "opt" / "pareto.png").exists()
    pick = io.read_json(d / "pick.json")
    assert pick["row"] in pick["pareto_rows"]
    _, front = io.read_csv(d / "front.csv")
    assert len(front) == sum(r[-1] == "1" for r in rows)


def test_predict_then_export_pgm(pipeline, tmp_path):
    d, _ = pipeline
    assert run("shapes", "blend", "--classes", "bowtie,ring", "--weights", "0.5,0.5", "--out", tmp_path / "f.mmt") == 0
    assert run("predict", "--model", d / "tr" / "model.mma", "--shape", tmp_path / "f.mmt",
               "--phase", "1,2,3,1,2,3", "--out", tmp_path / "p.mmt") == 0
    assert io.read_tensor(tmp_path / "p.mmt").shape == (24, 24)
    assert run("export", "pgm", "--field", tmp_path / "p.mmt", "--out", tmp_path / "p.pgm") == 0
    raw = (tmp_path / "p.pgm").read_bytes()
    assert raw.startswith(b"P5\n24 24\n255\n") and len(raw) == len(b"P5\n24 24\n255\n") + 576
    assert run("export", "csv", "--field", tmp_path / "p.mmt", "--out", tmp_path / "p.csv") == 0
    _, rows = io.read_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(np.array(rows, float), io.read_tensor(tmp_path / "p.mmt"))


def test_shape_encode_decode_and_oracle_commands(tmp_path):
    assert run("shapes", "blend", "--classes", "cross,ellipse", "--weights", "0.3,0.7", "--out", tmp_path / "f.mmt") == 0
    assert run("shapes", "decode", "--feature", tmp_path / "f.mmt", "--n", 32, "--out", tmp_path / "f.pgm") == 0
    assert run("shapes", "encode", "--image", tmp_path / "f.pgm", "--out", tmp_path / "g.mmt") == 0
    assert io.read_tensor(tmp_path / "g.mmt").shape == (36,)
    assert run("oracle", "simulate", "--feature", tmp_path / "f.mmt", "--phase", "1,0,0,0,0,0", "--n", 16,
               "--out", tmp_path / "sim") == 0
    assert io.read_tensor(tmp_path / "sim" / "field.mmt").shape == (48, 48)
    _, fom = io.read_csv(tmp_path / "sim" / "fom.csv")
    assert [r[0] for r in fom] == ["W1", "W2", "W3", "W3_focus"]
    assert (tmp_path / "sim" / "field.png").exists()


def test_dataset_build_independent_of_jobs(tmp_path):
    run("shapes", "gen", "--count", 8, "--seed", 2, "--out", tmp_path / "gs")
    run("acquire", "lhs", "--n", 2, "--restarts", 10, "--out", tmp_path / "ph.csv")
    for jobs in (1, 3):
        assert run("dataset", "build", "--ground-set", tmp_path / "gs", "--phases", tmp_path / "ph.csv", "--n", 8,
                   "--jobs", jobs, "--out", tmp_path / f"ds{jobs}") == 0
    assert _files(tmp_path / "ds1") == _files(tmp_path / "ds3")


def test_optimize_independent_of_jobs(pipeline, tmp_path):
    d, _ = pipeline
    for jobs in (1, 2):
        assert run("optimize", "multi", "--model", d / "tr" / "model.mma", "--ground-set", d / "gs",
                   "--n-rep", 2, "--steps", 3, "--seed", 5, "--jobs", jobs, "--out", tmp_path / f"o{jobs}") == 0
    a, b = _files(tmp_path / "o1"), _files(tmp_path / "o2")
    assert a.keys() == b.keys()
    assert all(a[k] == b[k] for k in a)
