"""OBJ comparison tests (no bpy involved)."""

import numpy as np
import pytest

from compare import CompareError, chamfer_vertices, compare_objs, load_obj_counts

CUBE_OBJ = """\
v 0.0 0.0 0.0
v 1.0 0.0 0.0
v 1.0 1.0 0.0
v 0.0 1.0 0.0
v 0.0 0.0 1.0
v 1.0 0.0 1.0
v 1.0 1.0 1.0
v 0.0 1.0 1.0
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_load_counts(tmp_path):
    verts, faces = load_obj_counts(_write(tmp_path, "c.obj", CUBE_OBJ))
    assert verts.shape == (8, 3) and faces == 6


def test_empty_obj_rejected(tmp_path):
    with pytest.raises(CompareError, match="no vertices"):
        load_obj_counts(_write(tmp_path, "e.obj", "# nothing\n"))


def test_identical_files_agree_exactly(tmp_path):
    a = _write(tmp_path, "a.obj", CUBE_OBJ)
    b = _write(tmp_path, "b.obj", CUBE_OBJ)
    out = compare_objs(a, b)
    assert out == {"chamfer": 0.0, "vertex_delta": 0, "face_delta": 0}


def test_offset_detected(tmp_path):
    shifted = CUBE_OBJ.replace("v 0.0 0.0 0.0", "v 0.05 0.0 0.0")
    out = compare_objs(_write(tmp_path, "a.obj", CUBE_OBJ),
                       _write(tmp_path, "b.obj", shifted))
    assert out["chamfer"] > 1e-6 and out["vertex_delta"] == 0


def test_count_deltas(tmp_path):
    extra = CUBE_OBJ + "v 0.5 0.5 2.0\n"
    out = compare_objs(_write(tmp_path, "a.obj", extra),
                       _write(tmp_path, "b.obj", CUBE_OBJ))
    assert out["vertex_delta"] == 1 and out["face_delta"] == 0


def test_chamfer_unit_normalized():
    a = np.zeros((4, 3))
    b = np.zeros((4, 3))
    b[:, 0] = 1.0
    # all pairs at distance 1 = the joint bounding-box diagonal
    assert chamfer_vertices(a, b) == pytest.approx(2.0)
    assert chamfer_vertices(10 * a, 10 * b) == pytest.approx(2.0)
