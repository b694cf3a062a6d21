"""Rebuild a design sequence with native Blender operators.

Each record kind maps to the same operator calls the library's script
emitter produces; executing them here (instead of a monolithic generated
script) gives per-record status and a usable partial result when an
operator fails. Must run under Blender's embedded interpreter: `bpy` is
imported at call time so the module itself can be loaded (and tested)
without Blender.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


REQUIRED_BLENDER = (4, 0)

_DEFORM_METHOD = {"twist": "TWIST", "bend": "BEND",
                  "taper": "TAPER", "stretch": "STRETCH"}
_PRIM_SIDES = {"hex_prism": 6, "oct_prism": 8, "cylinder": 32}


class ExecError(RuntimeError):
    pass


@dataclass
class RecordStatus:
    index: int
    kind: str
    status: str               # "ok" | "failed" | "skipped"
    error: str = ""

    def to_dict(self) -> dict:
        d = {"index": self.index, "kind": self.kind, "status": self.status}
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class ReplayReport:
    records: list[RecordStatus] = field(default_factory=list)
    out_obj: str = ""
    exported: bool = False
    first_failure: int = -1   # -1 when everything executed
    chamfer: float | None = None
    vertex_delta: int | None = None
    face_delta: int | None = None
    blender_version: str = ""

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "out_obj": self.out_obj,
            "exported": self.exported,
            "first_failure": self.first_failure,
            "chamfer": self.chamfer,
            "vertex_delta": self.vertex_delta,
            "face_delta": self.face_delta,
            "blender_version": self.blender_version,
        }


def check_version(bpy) -> str:
    """Abort early unless running under the pinned Blender release."""
    ver = tuple(bpy.app.version)
    if ver[:2] != REQUIRED_BLENDER:
        raise ExecError(
            f"this harness targets Blender "
            f"{REQUIRED_BLENDER[0]}.{REQUIRED_BLENDER[1]}; running under "
            + ".".join(str(v) for v in ver))
    return ".".join(str(v) for v in ver)


def load_sequence(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc.get("operations"), list):
        raise ExecError("sequence JSON must contain an 'operations' list")
    return doc


# -- scene plumbing ------------------------------------------------------


def _obj(bpy):
    return bpy.context.active_object


def _mode(bpy, m):
    bpy.ops.object.mode_set(mode=m)


def reset_scene(bpy, size: float):
    """Fresh scene with the initial axis-aligned cube on [0, size]^3."""
    bpy.ops.object.select_all(action="SELECT")
    bpy.ops.object.delete(use_global=False)
    half = size / 2.0
    bpy.ops.mesh.primitive_cube_add(size=size, location=(half, half, half))


def select_elems(bpy, kind, ids):
    """Index-based selection: kind is 'VERT', 'EDGE' or 'FACE'."""
    _mode(bpy, "EDIT")
    bpy.ops.mesh.select_all(action="DESELECT")
    bpy.ops.mesh.select_mode(type=kind)
    _mode(bpy, "OBJECT")
    data = _obj(bpy).data
    pool = {"VERT": data.vertices, "EDGE": data.edges,
            "FACE": data.polygons}[kind]
    for i in ids:
        pool[i].select = True
    _mode(bpy, "EDIT")


def select_edges_by_vertices(bpy, pairs):
    """Edges are addressed by endpoint vertex pairs: edge indices are not
    stable across operators, vertex pairs are what the records hold."""
    wanted = {(min(int(a), int(b)), max(int(a), int(b))) for a, b in pairs}
    _mode(bpy, "OBJECT")
    ids = [e.index for e in _obj(bpy).data.edges
           if (min(e.vertices), max(e.vertices)) in wanted]
    if len(ids) < len(wanted):
        raise ExecError(f"only {len(ids)} of {len(wanted)} edges found")
    select_elems(bpy, "EDGE", ids)


def apply_modifier(bpy, name):
    _mode(bpy, "OBJECT")
    bpy.ops.object.modifier_apply(modifier=name)


# -- one record ----------------------------------------------------------


def apply_record(bpy, rec: dict):
    k, p = rec["kind"], rec["params"]
    if k == "Subdivision":
        lvl = int(p["level"])
        if lvl == 0:
            return
        mod = _obj(bpy).modifiers.new("subsurf", "SUBSURF")
        mod.levels = lvl
        mod.render_levels = lvl
        apply_modifier(bpy, mod.name)
    elif k == "KnifeCut":
        # selecting both edges and subdividing once connects the midpoints
        select_edges_by_vertices(bpy, p["edge_pair"])
        bpy.ops.mesh.subdivide(number_cuts=1)
    elif k == "LoopCut":
        select_edges_by_vertices(bpy, p["ring"])
        bpy.ops.mesh.subdivide(number_cuts=1)
    elif k == "Extrude":
        h, w = float(p["height"]), float(p["width"])
        a0, a1 = (float(a) for a in p["angles"])
        select_elems(bpy, "FACE", [int(f) for f in p["faces"]])
        bpy.ops.mesh.extrude_region_shrink_fatten(
            TRANSFORM_OT_shrink_fatten={"value": h})
        if w != 1.0:
            bpy.ops.transform.resize(value=(w, w, 1.0), orient_type="NORMAL")
        for ang, axis in ((a0, "X"), (a1, "Y")):
            if ang != 0.0:
                bpy.ops.transform.rotate(value=ang, orient_axis=axis,
                                         orient_type="NORMAL")
    elif k == "Inset":
        select_elems(bpy, "FACE", [int(f) for f in p["faces"]])
        bpy.ops.mesh.inset(thickness=0.0, depth=0.0,
                           use_relative_offset=True,
                           thickness_relative=1.0 - float(p["width"]))
    elif k == "Bevel":
        select_edges_by_vertices(bpy, p["edges"])
        bpy.ops.mesh.bevel(offset=float(p["width"]),
                           segments=int(p["segments"]), affect="EDGES")
    elif k == "EdgeLoopAffine":
        select_edges_by_vertices(bpy, p["loop"])
        if p["kind"] == "translate":
            bpy.ops.transform.translate(value=tuple(float(v) for v in p["vec"]))
        elif p["kind"] == "scale":
            bpy.ops.transform.resize(value=tuple(float(v) for v in p["vec"]))
        else:
            for v, ax in zip(p["vec"], "XYZ"):
                if float(v) != 0.0:
                    bpy.ops.transform.rotate(value=float(v), orient_axis=ax)
    elif k == "SimpleDeform":
        method = _DEFORM_METHOD[p["mode"]]
        mod = _obj(bpy).modifiers.new("deform", "SIMPLE_DEFORM")
        mod.deform_method = method
        mod.deform_axis = p["axis"].upper()
        if method in ("TWIST", "BEND"):
            mod.angle = float(p["factor"])
        else:
            mod.factor = float(p["factor"])
        apply_modifier(bpy, mod.name)
    elif k == "VertexDisplace":
        from mathutils import Vector

        _mode(bpy, "OBJECT")
        vs = _obj(bpy).data.vertices
        for i, off in enumerate(p["offsets"]):
            if any(float(c) != 0.0 for c in off):
                vs[i].co += Vector(tuple(float(c) for c in off))
    elif k == "Mirror":
        axis = "xyz".index(p["axis"])
        flags = [False, False, False]
        flags[axis] = True
        mod = _obj(bpy).modifiers.new("mirror", "MIRROR")
        mod.use_axis = tuple(flags)
        mod.use_bisect_axis = tuple(flags)
        apply_modifier(bpy, mod.name)
    elif k == "GlobalAffine":
        _mode(bpy, "OBJECT")
        if p["kind"] == "translate":
            bpy.ops.transform.translate(value=tuple(float(v) for v in p["vec"]))
        elif p["kind"] == "scale":
            bpy.ops.transform.resize(value=tuple(float(v) for v in p["vec"]))
        else:
            for v, ax in zip(p["vec"], "XYZ"):
                if float(v) != 0.0:
                    bpy.ops.transform.rotate(value=float(v), orient_axis=ax)
    elif k == "Boolean":
        _mode(bpy, "OBJECT")
        base = _obj(bpy)
        prim = p["primitive"]
        if prim == "cuboid":
            bpy.ops.mesh.primitive_cube_add(size=1.0)
        else:
            bpy.ops.mesh.primitive_cylinder_add(
                vertices=_PRIM_SIDES[prim], radius=0.5, depth=1.0)
        tool = _obj(bpy)
        tool.scale = tuple(float(v) for v in p["scale"])
        tool.rotation_euler = tuple(float(v) for v in p["rotate"])
        tool.location = tuple(float(v) for v in p["translate"])
        bpy.context.view_layer.objects.active = base
        mod = base.modifiers.new("bool", "BOOLEAN")
        mod.operation = p["type"].upper()
        mod.solver = "EXACT"
        mod.object = tool
        apply_modifier(bpy, mod.name)
        bpy.data.objects.remove(tool, do_unlink=True)
        bpy.context.view_layer.objects.active = base
    else:
        raise ExecError(f"unknown record kind {k!r}")


def export_obj(bpy, path: str):
    """OBJ with the library's axis convention (Z up, right-handed)."""
    _mode(bpy, "OBJECT")
    bpy.ops.wm.obj_export(filepath=path, forward_axis="Y", up_axis="Z",
                          export_materials=False, export_normals=False,
                          export_uv=False, apply_modifiers=True)


def blender_execute(seq_json: str, out_obj: str) -> ReplayReport:
    """Rebuild the sequence, exporting whatever was achieved (a partial
    model on operator failure) and reporting per-record status."""
    import bpy

    report = ReplayReport(out_obj=out_obj)
    report.blender_version = check_version(bpy)
    doc = load_sequence(seq_json)
    size = float((doc.get("initial") or {}).get("size", 1.0))
    reset_scene(bpy, size)
    halted = False
    for i, rec in enumerate(doc["operations"]):
        kind = rec.get("kind", "?")
        if halted:
            report.records.append(RecordStatus(i, kind, "skipped"))
            continue
        try:
            apply_record(bpy, rec)
            report.records.append(RecordStatus(i, kind, "ok"))
        except Exception as e:
            report.records.append(
                RecordStatus(i, kind, "failed", f"{type(e).__name__}: {e}"))
            report.first_failure = i
            halted = True
    export_obj(bpy, out_obj)
    report.exported = True
    return report
