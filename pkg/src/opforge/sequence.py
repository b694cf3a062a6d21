"""Design operation sequences: the branch-free result of a fit.

A sequence is an initial primitive plus ordered, fully resolved
operation records. Replay applies the exact operations in order and is
deterministic; serialization is canonical (fixed key order, round-trip
exact numbers) so equal sequences produce byte-identical documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, MeshError, edge_key, unit_cube
from .ops.bevel import bevel
from .ops.boolean import BOOLEAN_TYPES, PRIMITIVES, boolean_exact
from .ops.cuts import knife_cut, loop_cut
from .ops.extrude import extrude_exact, inset
from .ops.subdivision import subdivide_blend
from .ops.transform import (
    AXES,
    DEFORM_MODES,
    edge_loop_affine,
    global_affine,
    mirror,
    simple_deform,
    vertex_displace,
)

FORMAT_VERSION = "1"
AFFINE_KINDS = ("translate", "scale", "rotate")


class SequenceError(ValueError):
    pass


@dataclass
class OpRecord:
    kind: str
    params: dict

    def token(self) -> str:
        """Similarity token: top-level kind, with the sub-mode appended
        for the three multi-mode operations."""
        p = self.params
        if self.kind in ("GlobalAffine", "EdgeLoopAffine"):
            return f"{self.kind}:{p['kind']}"
        if self.kind == "SimpleDeform":
            return f"{self.kind}:{p['mode']}"
        return self.kind

    def __eq__(self, other):
        return (isinstance(other, OpRecord) and self.kind == other.kind
                and _norm(self.params) == _norm(other.params))


def _norm(x):
    if isinstance(x, dict):
        return {k: _norm(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_norm(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return x


@dataclass
class DesignSequence:
    operations: list[OpRecord] = field(default_factory=list)
    initial: dict = field(default_factory=lambda: {"kind": "cube", "size": 1.0})
    provenance: dict = field(default_factory=dict)
    version: str = FORMAT_VERSION
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.operations)

    def tokens(self) -> list[str]:
        return [r.token() for r in self.operations]

    def __eq__(self, other):
        return (isinstance(other, DesignSequence)
                and self.version == other.version
                and _norm(self.initial) == _norm(other.initial)
                and self.operations == other.operations)


# -- validation ---------------------------------------------------------


def _need(params: dict, rec_i: int, kind: str, *names):
    for n in names:
        if n not in params:
            raise SequenceError(f"operations[{rec_i}] ({kind}): missing parameter {n!r}")


def _check(cond: bool, rec_i: int, msg: str):
    if not cond:
        raise SequenceError(f"operations[{rec_i}]: {msg}")


def validate_record(rec: OpRecord, i: int):
    k, p = rec.kind, rec.params
    if k == "Subdivision":
        _need(p, i, k, "level")
        _check(isinstance(p["level"], int) and 0 <= p["level"] <= 6, i,
               "subdivision level must be an integer in 0..6")
    elif k == "KnifeCut":
        _need(p, i, k, "edge_pair")
        _check(len(p["edge_pair"]) == 2, i, "edge_pair must hold two edges")
    elif k == "LoopCut":
        _need(p, i, k, "ring")
        _check(len(p["ring"]) >= 3, i, "ring must hold at least 3 edges")
    elif k == "Extrude":
        _need(p, i, k, "faces", "height", "width", "angles")
        _check(p["width"] > 0, i, "extrude width must be positive")
        _check(len(p["angles"]) == 2, i, "extrude takes two angles")
    elif k == "Inset":
        _need(p, i, k, "faces", "width")
        _check(0 < p["width"] < 1, i, "inset width must lie strictly inside (0, 1)")
    elif k == "Bevel":
        _need(p, i, k, "edges", "width", "segments")
        _check(p["width"] >= 0, i, "bevel width must be nonnegative")
        _check(isinstance(p["segments"], int) and 1 <= p["segments"] <= 9, i,
               "bevel segments must be an integer in 1..9")
    elif k == "EdgeLoopAffine":
        _need(p, i, k, "loop", "kind", "vec")
        _check(p["kind"] in AFFINE_KINDS, i, f"kind must be one of {AFFINE_KINDS}")
        _check(len(p["vec"]) == 3, i, "vec must have 3 components")
    elif k == "SimpleDeform":
        _need(p, i, k, "mode", "axis", "factor")
        _check(p["mode"] in DEFORM_MODES, i, f"mode must be one of {DEFORM_MODES}")
        _check(p["axis"] in AXES, i, f"axis must be one of {AXES}")
    elif k == "VertexDisplace":
        _need(p, i, k, "offsets")
    elif k == "Mirror":
        _need(p, i, k, "axis")
        _check(p["axis"] in AXES, i, f"axis must be one of {AXES}")
    elif k == "GlobalAffine":
        _need(p, i, k, "kind", "vec")
        _check(p["kind"] in AFFINE_KINDS, i, f"kind must be one of {AFFINE_KINDS}")
        _check(len(p["vec"]) == 3, i, "vec must have 3 components")
    elif k == "Boolean":
        _need(p, i, k, "type", "primitive", "scale", "translate", "rotate")
        _check(p["type"] in BOOLEAN_TYPES, i, f"type must be one of {BOOLEAN_TYPES}")
        _check(p["primitive"] in PRIMITIVES, i, f"primitive must be one of {PRIMITIVES}")
        _check(all(s > 0 for s in p["scale"]), i, "boolean scale components must be positive")
    else:
        raise SequenceError(f"operations[{i}]: unknown operation kind {rec.kind!r}")


def validate(seq: DesignSequence):
    if seq.version != FORMAT_VERSION:
        raise SequenceError(
            f"unsupported format version {seq.version!r} (expected {FORMAT_VERSION!r})")
    if seq.initial.get("kind") != "cube":
        raise SequenceError(f"unsupported initial primitive {seq.initial.get('kind')!r}")
    for i, rec in enumerate(seq.operations):
        validate_record(rec, i)


# -- replay -------------------------------------------------------------


def _edges(lst):
    return [edge_key(int(a), int(b)) for a, b in lst]


def apply_record(mesh: Mesh, rec: OpRecord) -> Mesh:
    k, p = rec.kind, rec.params
    if k == "Subdivision":
        return subdivide_blend(mesh, float(p["level"]))
    if k == "KnifeCut":
        (a, b), (c, d) = p["edge_pair"]
        return knife_cut(mesh, (edge_key(int(a), int(b)), edge_key(int(c), int(d))))
    if k == "LoopCut":
        return loop_cut(mesh, _edges(p["ring"]))
    if k == "Extrude":
        return extrude_exact(mesh, [int(f) for f in p["faces"]],
                             p["height"], p["width"], list(p["angles"]))
    if k == "Inset":
        return inset(mesh, [int(f) for f in p["faces"]], p["width"])
    if k == "Bevel":
        return bevel(mesh, _edges(p["edges"]), p["width"], int(p["segments"]))
    if k == "EdgeLoopAffine":
        return edge_loop_affine(mesh, _edges(p["loop"]), p["kind"], list(p["vec"]))
    if k == "SimpleDeform":
        return simple_deform(mesh, p["mode"], p["factor"], p["axis"])
    if k == "VertexDisplace":
        return vertex_displace(mesh, np.asarray(p["offsets"], dtype=np.float64))
    if k == "Mirror":
        return mirror(mesh, p["axis"])
    if k == "GlobalAffine":
        return global_affine(mesh, p["kind"], list(p["vec"]))
    if k == "Boolean":
        return boolean_exact(mesh, p["type"], p["primitive"],
                             list(p["scale"]), list(p["translate"]), list(p["rotate"]))
    raise SequenceError(f"unknown operation kind {k!r}")


def replay(seq: DesignSequence) -> Mesh:
    """Exact, deterministic replay from the initial primitive."""
    validate(seq)
    size = float(seq.initial.get("size", 1.0))
    mesh = unit_cube()
    if size != 1.0:
        mesh = global_affine(mesh, "scale", [size] * 3)
    for i, rec in enumerate(seq.operations):
        try:
            mesh = apply_record(mesh, rec)
        except MeshError as e:
            raise SequenceError(f"operations[{i}] ({rec.kind}): {e}") from e
    return mesh


# -- canonical JSON -----------------------------------------------------

_RECORD_KEYS = ("kind", "params")
_TOP_KEYS = ("version", "initial", "operations", "provenance")


def _dump(x) -> str:
    """Canonical JSON text: fixed key order, round-trip-exact numbers."""
    if isinstance(x, dict):
        items = ",".join(f"{json.dumps(k)}:{_dump(v)}" for k, v in sorted(x.items()))
        return "{" + items + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ",".join(_dump(v) for v in x) + "]"
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if v != v or v in (float("inf"), float("-inf")):
            raise SequenceError("non-finite number in sequence document")
        return repr(v)  # shortest exact round-trip, at most 17 significant digits
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        return _dump(x.tolist())
    raise SequenceError(f"unserializable value of type {type(x).__name__}")


def to_json(seq: DesignSequence) -> str:
    validate(seq)
    ops = [
        "{" + f'"kind":{json.dumps(r.kind)},"params":{_dump(_norm(r.params))}' + "}"
        for r in seq.operations
    ]
    parts = [
        f'"version":{json.dumps(seq.version)}',
        f'"initial":{_dump(_norm(seq.initial))}',
        '"operations":[' + ",".join(ops) + "]",
        f'"provenance":{_dump(_norm(seq.provenance))}',
    ]
    return "{" + ",".join(parts) + "}\n"


def from_json(doc: str, strict: bool = True) -> DesignSequence:
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as e:
        raise SequenceError(f"invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SequenceError("$: document must be an object")
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise SequenceError(
            f"$.version: unsupported format version {version!r} (expected {FORMAT_VERSION!r})")
    extras = {k: v for k, v in data.items() if k not in _TOP_KEYS}
    if strict and extras:
        raise SequenceError(f"$.{sorted(extras)[0]}: unknown field")
    ops = []
    for i, rec in enumerate(data.get("operations", [])):
        if not isinstance(rec, dict) or set(rec) - set(_RECORD_KEYS):
            bad = sorted(set(rec) - set(_RECORD_KEYS))[0] if isinstance(rec, dict) else rec
            raise SequenceError(f"$.operations[{i}]: unexpected field {bad!r}")
        if "kind" not in rec:
            raise SequenceError(f"$.operations[{i}]: missing kind")
        ops.append(OpRecord(kind=rec["kind"], params=rec.get("params", {})))
    seq = DesignSequence(
        operations=ops,
        initial=data.get("initial", {"kind": "cube", "size": 1.0}),
        provenance=data.get("provenance", {}),
        version=version,
        extras={} if strict else extras,
    )
    validate(seq)
    return seq
