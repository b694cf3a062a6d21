"""Command-line surface: exit codes, artifacts, and byte determinism."""

import json

import pytest

from opforge.cli import main
from opforge.mesh import save_obj, unit_cube
from opforge.sequence import DesignSequence, OpRecord, replay, to_json


@pytest.fixture()
def cube_obj(tmp_path):
    path = tmp_path / "cube.obj"
    save_obj(unit_cube(), str(path))
    return str(path)


@pytest.fixture()
def extrude_seq(tmp_path):
    rec = OpRecord("Extrude", {"faces": [1], "height": 0.5, "width": 1.0,
                               "angles": [0.0, 0.0]})
    path = tmp_path / "seq.json"
    path.write_text(to_json(DesignSequence(operations=[rec])))
    return str(path)


def test_replay_writes_obj(tmp_path, extrude_seq):
    out = tmp_path / "out.obj"
    assert main(["replay", extrude_seq, "--out", str(out)]) == 0
    mesh = replay(DesignSequence(operations=[
        OpRecord("Extrude", {"faces": [1], "height": 0.5, "width": 1.0,
                             "angles": [0.0, 0.0]})]))
    assert f"# {mesh.num_vertices} vertices" or out.exists()
    assert out.read_text().count("\nf ") == mesh.num_faces


def test_replay_deterministic_bytes(tmp_path, extrude_seq):
    a, b = tmp_path / "a.obj", tmp_path / "b.obj"
    assert main(["replay", extrude_seq, "--out", str(a)]) == 0
    assert main(["replay", extrude_seq, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_target_is_data_error(tmp_path, capsys):
    rc = main(["fit", "--target", str(tmp_path / "nope.obj"),
               "--out", str(tmp_path / "o.json")])
    assert rc == 2
    assert "nope.obj" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(tmp_path):
    assert main(["fit", "--bogus", "x"]) == 1


def test_fit_identity_deterministic(tmp_path, cube_obj):
    outs, logs = [], []
    for tag in ("a", "b"):
        out = tmp_path / f"{tag}.json"
        log = tmp_path / f"{tag}.log"
        rc = main(["fit", "--target", cube_obj, "--out", str(out),
                   "--log", str(log), "--seed", "11"])
        assert rc == 0
        outs.append(out.read_bytes())
        logs.append(log.read_bytes())
    assert outs[0] == outs[1]
    assert logs[0] == logs[1]


def test_fit_writes_checkpoint(tmp_path, cube_obj):
    out = tmp_path / "o.json"
    ck = tmp_path / "graph.json"
    rc = main(["fit", "--target", cube_obj, "--out", str(out),
               "--checkpoint", str(ck), "--seed", "0"])
    assert rc == 0
    doc = json.loads(ck.read_text())
    assert doc["format"] == "opforge-graph/1"


def test_fit_config_file_with_flag_override(tmp_path, cube_obj):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "samples": 512}))
    out = tmp_path / "o.json"
    rc = main(["fit", "--target", cube_obj, "--out", str(out),
               "--config", str(cfg), "--seed", "9"])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["provenance"]["seed"] == 9   # flag beats config file


def test_fit_rejects_bad_config(tmp_path, cube_obj):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_option": 1}))
    rc = main(["fit", "--target", cube_obj, "--out", str(tmp_path / "o.json"),
               "--config", str(cfg)])
    assert rc == 2


def test_metrics_identity(cube_obj, capsys):
    assert main(["metrics", "--pred", cube_obj, "--target", cube_obj]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["chamfer"] == 0.0


def test_emit_bpy_writes_script(tmp_path, extrude_seq):
    out = tmp_path / "script.py"
    assert main(["emit-bpy", extrude_seq, "--out", str(out)]) == 0
    assert "import bpy" in out.read_text()


def test_gradcheck_single_op(capsys):
    assert main(["gradcheck", "--op", "GlobalAffine"]) == 0
    assert "GlobalAffine" in capsys.readouterr().out


def test_gradcheck_unknown_op():
    assert main(["gradcheck", "--op", "Nonsense"]) == 2


def test_seqcmp_identical(extrude_seq, capsys):
    assert main(["seqcmp", extrude_seq, extrude_seq]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["normalized_lcs"] == 1.0
    assert doc["levenshtein"] == 0


def test_thread_cap_must_be_integer(monkeypatch, extrude_seq, tmp_path):
    monkeypatch.setenv("OPFORGE_THREADS", "lots")
    assert main(["replay", extrude_seq, "--out", str(tmp_path / "o.obj")]) == 2
