"""Emit a standalone Blender (bpy) script that rebuilds a sequence.

Pure text generation: the returned script creates the initial cube, then
replays each record through the matching native operator or modifier.
Face/edge/vertex targets are addressed by index through a deterministic
selection preamble, so the script depends only on Blender's (stable,
documented) element ordering for the operators used here. Verifying that
ordering against a live Blender is the replay harness's job, not ours.
"""

from __future__ import annotations

from .sequence import DesignSequence, validate

BLENDER_VERSION = "4.0"

_PRELUDE = f'''\
# Generated by opforge; targets Blender {BLENDER_VERSION} (bpy API).
import bpy
from mathutils import Vector

bpy.ops.object.select_all(action="SELECT")
bpy.ops.object.delete(use_global=False)


def _obj():
    return bpy.context.active_object


def _mode(m):
    bpy.ops.object.mode_set(mode=m)


def select_elems(kind, ids):
    """Index-based selection: kind is 'VERT', 'EDGE' or 'FACE'."""
    _mode("EDIT")
    bpy.ops.mesh.select_all(action="DESELECT")
    bpy.ops.mesh.select_mode(type=kind)
    _mode("OBJECT")
    data = _obj().data
    pool = {{"VERT": data.vertices, "EDGE": data.edges, "FACE": data.polygons}}[kind]
    for i in ids:
        pool[i].select = True
    _mode("EDIT")


def apply_modifier(name):
    _mode("OBJECT")
    bpy.ops.object.modifier_apply(modifier=name)
'''


def _vec(v) -> str:
    return "(" + ", ".join(repr(float(c)) for c in v) + ")"


def _ids(ids) -> str:
    return "[" + ", ".join(str(int(i)) for i in ids) + "]"


def _edge_select(pairs) -> list[str]:
    """Select edges by their endpoint vertex indices (edge indices are
    not stable across operators, vertex pairs are what the records hold)."""
    keys = sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in pairs)
    return [
        f"wanted = set({keys!r})",
        '_mode("OBJECT")',
        "ids = [e.index for e in _obj().data.edges",
        "       if (min(e.vertices), max(e.vertices)) in wanted]",
        'select_elems("EDGE", ids)',
    ]


_DEFORM_METHOD = {"twist": "TWIST", "bend": "BEND", "taper": "TAPER", "stretch": "STRETCH"}
_PRIM_SIDES = {"hex_prism": 6, "oct_prism": 8, "cylinder": 32}


def _emit_record(rec) -> list[str]:
    k, p = rec.kind, rec.params
    if k == "Subdivision":
        lvl = int(p["level"])
        if lvl == 0:
            return ["pass  # Subdivision level 0"]
        return [
            'mod = _obj().modifiers.new("subsurf", "SUBSURF")',
            f"mod.levels = {lvl}",
            f"mod.render_levels = {lvl}",
            "apply_modifier(mod.name)",
        ]
    if k == "KnifeCut":
        # selecting both edges and subdividing once connects the midpoints
        return _edge_select(p["edge_pair"]) + ["bpy.ops.mesh.subdivide(number_cuts=1)"]
    if k == "LoopCut":
        return _edge_select(p["ring"]) + ["bpy.ops.mesh.subdivide(number_cuts=1)"]
    if k == "Extrude":
        h, w = float(p["height"]), float(p["width"])
        a0, a1 = (float(a) for a in p["angles"])
        lines = [
            f'select_elems("FACE", {_ids(p["faces"])})',
            "bpy.ops.mesh.extrude_region_shrink_fatten("
            f"TRANSFORM_OT_shrink_fatten={{'value': {h!r}}})",
        ]
        if w != 1.0:
            lines.append(
                f"bpy.ops.transform.resize(value=({w!r}, {w!r}, 1.0), "
                "orient_type='NORMAL')")
        for ang, axis in ((a0, "X"), (a1, "Y")):
            if ang != 0.0:
                lines.append(
                    f"bpy.ops.transform.rotate(value={ang!r}, orient_axis='{axis}', "
                    "orient_type='NORMAL')")
        return lines
    if k == "Inset":
        return [
            f'select_elems("FACE", {_ids(p["faces"])})',
            f"bpy.ops.mesh.inset(thickness=0.0, depth=0.0, "
            f"use_relative_offset=True, thickness_relative={1.0 - float(p['width'])!r})",
        ]
    if k == "Bevel":
        return _edge_select(p["edges"]) + [
            f"bpy.ops.mesh.bevel(offset={float(p['width'])!r}, "
            f"segments={int(p['segments'])}, affect='EDGES')",
        ]
    if k == "EdgeLoopAffine":
        op = {"translate": "translate", "scale": "resize", "rotate": "rotate"}[p["kind"]]
        if p["kind"] == "rotate":
            body = [
                f"bpy.ops.transform.rotate(value={float(v)!r}, orient_axis='{ax}')"
                for v, ax in zip(p["vec"], "XYZ") if float(v) != 0.0
            ]
        else:
            body = [f"bpy.ops.transform.{op}(value={_vec(p['vec'])})"]
        return _edge_select(p["loop"]) + body
    if k == "SimpleDeform":
        method = _DEFORM_METHOD[p["mode"]]
        prop = "angle" if method in ("TWIST", "BEND") else "factor"
        return [
            'mod = _obj().modifiers.new("deform", "SIMPLE_DEFORM")',
            f'mod.deform_method = "{method}"',
            f'mod.deform_axis = "{p["axis"].upper()}"',
            f"mod.{prop} = {float(p['factor'])!r}",
            "apply_modifier(mod.name)",
        ]
    if k == "VertexDisplace":
        lines = ['_mode("OBJECT")', "vs = _obj().data.vertices"]
        for i, off in enumerate(p["offsets"]):
            if any(float(c) != 0.0 for c in off):
                lines.append(f"vs[{i}].co += Vector({_vec(off)})")
        return lines if len(lines) > 2 else ["pass  # VertexDisplace with zero offsets"]
    if k == "Mirror":
        axis = "xyz".index(p["axis"])
        flags = ["False"] * 3
        flags[axis] = "True"
        return [
            'mod = _obj().modifiers.new("mirror", "MIRROR")',
            f"mod.use_axis = ({', '.join(flags)})",
            f"mod.use_bisect_axis = ({', '.join(flags)})",
            "apply_modifier(mod.name)",
        ]
    if k == "GlobalAffine":
        _mode_obj = ['_mode("OBJECT")']
        if p["kind"] == "translate":
            return _mode_obj + [f"bpy.ops.transform.translate(value={_vec(p['vec'])})"]
        if p["kind"] == "scale":
            return _mode_obj + [f"bpy.ops.transform.resize(value={_vec(p['vec'])})"]
        return _mode_obj + [
            f"bpy.ops.transform.rotate(value={float(v)!r}, orient_axis='{ax}')"
            for v, ax in zip(p["vec"], "XYZ") if float(v) != 0.0
        ]
    if k == "Boolean":
        prim = p["primitive"]
        lines = ['_mode("OBJECT")', "base = _obj()"]
        if prim == "cuboid":
            lines.append("bpy.ops.mesh.primitive_cube_add(size=1.0)")
        else:
            lines.append(
                "bpy.ops.mesh.primitive_cylinder_add("
                f"vertices={_PRIM_SIDES[prim]}, radius=0.5, depth=1.0)")
        lines += [
            "tool = _obj()",
            f"tool.scale = {_vec(p['scale'])}",
            f"tool.rotation_euler = {_vec(p['rotate'])}",
            f"tool.location = {_vec(p['translate'])}",
            "bpy.context.view_layer.objects.active = base",
            'mod = base.modifiers.new("bool", "BOOLEAN")',
            f'mod.operation = "{p["type"].upper()}"',
            'mod.solver = "EXACT"',
            "mod.object = tool",
            "apply_modifier(mod.name)",
            "bpy.data.objects.remove(tool, do_unlink=True)",
            "bpy.context.view_layer.objects.active = base",
        ]
        return lines
    raise AssertionError(k)  # unreachable after validate()


def emit_bpy(seq: DesignSequence) -> str:
    """Deterministic script text reconstructing the sequence in Blender."""
    validate(seq)
    size = float(seq.initial.get("size", 1.0))
    half = repr(size / 2)
    out = [
        _PRELUDE,
        "",
        "# initial primitive: axis-aligned cube on [0, size]^3",
        f"bpy.ops.mesh.primitive_cube_add(size={size!r}, "
        f"location=({half}, {half}, {half}))",
    ]
    for i, rec in enumerate(seq.operations):
        out.append("")
        out.append(f"# operations[{i}]: {rec.token()}")
        out.extend(_emit_record(rec))
    out += ["", '_mode("OBJECT")', ""]
    return "\n".join(out)
