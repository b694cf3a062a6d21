import pytest

from opforge.bpy_emit import emit_bpy
from opforge.sequence import DesignSequence, OpRecord, SequenceError


def seq(*ops) -> DesignSequence:
    return DesignSequence(operations=list(ops))


def test_empty_sequence_adds_single_cube():
    script = emit_bpy(seq())
    assert script.count("primitive_cube_add") == 1
    assert "modifiers.new" not in script
    compile(script, "<bpy>", "exec")  # syntactically valid Python


def test_bevel_parameters_appear_literally():
    script = emit_bpy(seq(OpRecord("Bevel", {"edges": [[4, 5]], "width": 0.1, "segments": 2})))
    assert "bpy.ops.mesh.bevel(offset=0.1, segments=2" in script


def test_emission_deterministic():
    s = seq(
        OpRecord("Subdivision", {"level": 2}),
        OpRecord("Extrude", {"faces": [1, 3], "height": 0.4, "width": 0.8, "angles": [0.1, 0.0]}),
        OpRecord("Boolean", {"type": "difference", "primitive": "cylinder",
                             "scale": [0.2, 0.2, 2.0], "translate": [0.5, 0.5, 0.5],
                             "rotate": [0, 0, 0]}),
    )
    assert emit_bpy(s) == emit_bpy(s)


def test_each_kind_maps_to_its_operator():
    cases = {
        "SUBSURF": OpRecord("Subdivision", {"level": 1}),
        "subdivide": OpRecord("KnifeCut", {"edge_pair": [[0, 1], [2, 3]]}),
        "extrude_region": OpRecord(
            "Extrude", {"faces": [1], "height": 0.3, "width": 1.0, "angles": [0, 0]}),
        "inset": OpRecord("Inset", {"faces": [1], "width": 0.6}),
        "SIMPLE_DEFORM": OpRecord("SimpleDeform", {"mode": "twist", "axis": "z", "factor": 0.5}),
        "MIRROR": OpRecord("Mirror", {"axis": "x"}),
        "transform.resize": OpRecord("GlobalAffine", {"kind": "scale", "vec": [1, 2, 3]}),
        "BOOLEAN": OpRecord("Boolean", {"type": "union", "primitive": "cuboid",
                                        "scale": [1, 1, 1], "translate": [0, 0, 0],
                                        "rotate": [0, 0, 0]}),
    }
    for needle, rec in cases.items():
        script = emit_bpy(seq(rec))
        assert needle in script, rec.kind
        compile(script, "<bpy>", "exec")


def test_edge_targets_resolved_by_vertex_pairs():
    script = emit_bpy(seq(OpRecord("Bevel", {"edges": [[5, 4], [0, 1]], "width": 0.05,
                                             "segments": 1})))
    # canonical (min, max) keys regardless of the order given
    assert "wanted = set([(0, 1), (4, 5)])" in script


def test_invalid_sequence_rejected_before_emission():
    with pytest.raises(SequenceError):
        emit_bpy(seq(OpRecord("Bevel", {"edges": [[0, 1]], "width": 0.1, "segments": 0})))


def test_version_comment_pinned():
    assert "Blender 4.0" in emit_bpy(seq())
