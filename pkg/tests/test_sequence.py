import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opforge.mesh import unit_cube
from opforge.sequence import (
    DesignSequence,
    OpRecord,
    SequenceError,
    from_json,
    replay,
    to_json,
)


def seq(*ops) -> DesignSequence:
    return DesignSequence(operations=list(ops))


def test_empty_replay_is_unit_cube():
    m = replay(seq())
    cube = unit_cube()
    assert np.array_equal(m.verts_np, cube.verts_np)
    assert m.faces == cube.faces


def test_subdivision_replay_counts():
    m = replay(seq(OpRecord("Subdivision", {"level": 1})))
    assert m.num_vertices == 26
    assert m.num_faces == 24


def test_replay_referentially_transparent():
    s = seq(
        OpRecord("Subdivision", {"level": 1}),
        OpRecord("Extrude", {"faces": [1], "height": 0.4, "width": 1.0, "angles": [0, 0]}),
        OpRecord("GlobalAffine", {"kind": "scale", "vec": [1.2, 1.0, 0.8]}),
    )
    a, b = replay(s), replay(s)
    assert np.array_equal(a.verts_np, b.verts_np)
    assert a.faces == b.faces


def test_replay_invalid_reference_reports_index():
    s = seq(OpRecord("Extrude", {"faces": [99], "height": 0.1, "width": 1.0, "angles": [0, 0]}))
    with pytest.raises(SequenceError, match=r"operations\[0\]"):
        replay(s)


def test_json_roundtrip_equality():
    s = seq(
        OpRecord("Bevel", {"edges": [[4, 5]], "width": 0.123456789012345, "segments": 3}),
        OpRecord("SimpleDeform", {"mode": "twist", "axis": "z", "factor": 0.7}),
    )
    s.provenance = {"seed": 7, "final_cd": 1.5e-5, "tool": "opforge 0.1.0"}
    doc = to_json(s)
    assert from_json(doc) == s


def test_json_canonical_bytes():
    a = seq(OpRecord("Mirror", {"axis": "x"}))
    b = seq(OpRecord("Mirror", {"axis": "x"}))
    assert to_json(a) == to_json(b)


def test_json_float_precision_preserved():
    w = 0.1234567890123456789
    s = seq(OpRecord("Inset", {"faces": [1], "width": w}))
    back = from_json(to_json(s))
    assert back.operations[0].params["width"] == w  # bit-exact round trip


def test_segments_range_rejected():
    s = seq(OpRecord("Bevel", {"edges": [[4, 5]], "width": 0.1, "segments": 12}))
    with pytest.raises(SequenceError, match="1..9"):
        to_json(s)


def test_version_mismatch():
    s = seq()
    doc = to_json(s).replace('"version":"1"', '"version":"2"')
    with pytest.raises(SequenceError, match="version"):
        from_json(doc)


def test_unknown_field_strict_vs_lenient():
    doc = to_json(seq())
    doc = doc[:-2] + ',"custom":42}\n'
    with pytest.raises(SequenceError, match="custom"):
        from_json(doc)
    s = from_json(doc, strict=False)
    assert s.extras == {"custom": 42}


def test_unknown_kind_rejected():
    with pytest.raises(SequenceError, match="unknown operation kind"):
        to_json(seq(OpRecord("Sculpt", {})))


def test_boolean_replay_genus():
    from opforge.ops.boolean import genus
    s = seq(OpRecord("Boolean", {
        "type": "difference", "primitive": "cuboid",
        "scale": [0.3, 0.3, 3.0], "translate": [0.5, 0.5, 0.5], "rotate": [0, 0, 0],
    }))
    m = replay(s)
    assert genus(m) == 1


def test_tokens_distinguish_sub_modes():
    s = seq(
        OpRecord("SimpleDeform", {"mode": "bend", "axis": "x", "factor": 0.2}),
        OpRecord("GlobalAffine", {"kind": "rotate", "vec": [0, 0, 0.5]}),
        OpRecord("VertexDisplace", {"offsets": [[0, 0, 0]] * 8}),
    )
    assert s.tokens() == ["SimpleDeform:bend", "GlobalAffine:rotate", "VertexDisplace"]


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-10, max_value=10, allow_nan=False),
       st.floats(min_value=0.05, max_value=4.9))
def test_extrude_record_roundtrip_property(h, w):
    s = seq(OpRecord("Extrude", {"faces": [1], "height": h, "width": w, "angles": [0.0, 0.0]}))
    assert from_json(to_json(s)) == s
