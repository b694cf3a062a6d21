"""Gated operation graph: composition, gating, branching, growth,
sequence extraction, and checkpointing.

The graph is an ordered list of nodes grouped into cycles, each node one
modeling operation with a sigmoid gate. Vertex-preserving nodes blend
their output with their input by the gate value; topology-changing nodes
always propagate their transformed mesh, and the gate instead reweights
loss samples: geometry the node introduced carries weight gamma while a
residual cloud reconstructed at the pre-op surface carries 1 - gamma.
This keeps the state single-path while preserving the "disabled at
gamma -> 0" endpoint. Discrete choices with vertex correspondence
(deform modes, affine kinds) are optimized as softmax expectations;
structural choices (cut targets, face groups, mirror axis, bevel
segments) are selected discretely by the fit driver.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import torch

from .autodiff import ParamHandle
from .mesh import Mesh, MeshError, PointCloud, edge_key, sample_faces, sample_surface, unit_cube
from .ops.bevel import bevel
from .ops.boolean import boolean_exact
from .ops.cuts import knife_cut, loop_cut
from .ops.extrude import extrude_exact
from .ops.proxy import ExtrudeProxy
from .ops.subdivision import subdivide_blend
from .ops.transform import (
    AXES,
    DEFORM_MODES,
    edge_loop_affine,
    global_affine,
    mirror,
    simple_deform,
)
from .sequence import AFFINE_KINDS, DesignSequence, OpRecord

CYCLE_TEMPLATE = (
    "Subdivision", "LoopCut", "KnifeCut", "Extrude", "Bevel",
    "EdgeLoopAffine", "SimpleDeform", "VertexDisplace", "Mirror",
    "GlobalAffine",
)
CUT_CYCLE_LIMIT = 10      # LoopCut/KnifeCut slots exist only this early
MIRROR_CYCLE_LIMIT = 1    # Mirror slot only in the first cycle
INITIAL_CYCLES = 7
INITIAL_OMEGA = 0.0
GROWN_OMEGA = -2.0
DEFAULT_TAU = 0.5
DEFAULT_SEGMENTS = 5
MAX_SUBDIV_LEVEL = 2.0    # per node; stacked cycles reach deeper levels
SUBDIV_INIT_LEVEL = 0.05  # small enough that a near-off gate barely perturbs
SUBDIV_TOPO_EPS = 0.05    # below this effective level the node is skipped
                          # outright: a fractional step would quadruple the
                          # face count for a vanishing geometric effect
INSET_HEIGHT_TOL = 0.01   # |h| below this with w < 1 extracts as Inset
NOOP_TOL = 1e-9

STRUCTURAL_KINDS = ("LoopCut", "KnifeCut", "Extrude", "Bevel",
                    "EdgeLoopAffine", "Mirror")
TOPOLOGY_KINDS = ("Subdivision", "LoopCut", "KnifeCut", "Extrude",
                  "Bevel", "Mirror")

_DEFORM_BRANCHES = tuple((m, a) for m in DEFORM_MODES for a in AXES)


def _deform_identity(mode: str) -> float:
    return 1.0 if mode in ("stretch", "taper") else 0.0

_node_ids = itertools.count()


class GraphError(ValueError):
    pass


@dataclass
class OperationNode:
    kind: str
    cycle: int
    omega: ParamHandle
    theta: dict[str, ParamHandle] = field(default_factory=dict)
    branch_w: ParamHandle | None = None
    branch_values: tuple = ()
    beta_logit: ParamHandle | None = None
    target = None                       # faces / edges / ring / pair / axis
    proxy: ExtrudeProxy | None = None
    boolean_params: dict | None = None  # set at finalization
    enabled: bool = True
    restarts: int = 0
    uid: int = field(default_factory=lambda: next(_node_ids))

    @property
    def gamma(self) -> torch.Tensor:
        return torch.sigmoid(self.omega.tensor)

    @property
    def probs(self) -> torch.Tensor:
        return torch.softmax(self.branch_w.tensor, dim=0)

    def argmax_branch(self) -> int:
        """Ties break toward the lower index (np.argmax's convention)."""
        return int(np.argmax(self.branch_w.tensor.detach().cpu().numpy()))

    @property
    def beta(self) -> torch.Tensor:
        return torch.sigmoid(self.beta_logit.tensor)

    def handles(self) -> list[ParamHandle]:
        out = [self.omega]
        out.extend(self.theta.values())
        if self.branch_w is not None and self.kind != "Bevel":
            out.append(self.branch_w)   # bevel segments are explored, not descended
        if self.beta_logit is not None:
            out.append(self.beta_logit)
        if self.proxy is not None:
            out.extend(self.proxy.handles())
        return out


def _vec_handle(name: str, init) -> ParamHandle:
    return ParamHandle(name, np.asarray(init, dtype=np.float64))


def make_node(kind: str, cycle: int, omega: float) -> OperationNode:
    n = OperationNode(kind=kind, cycle=cycle,
                      omega=ParamHandle(f"{kind}.omega", omega, role="gate"))
    if kind == "Subdivision":
        n.theta["level"] = ParamHandle("level", SUBDIV_INIT_LEVEL,
                                       lower=0.0, upper=MAX_SUBDIV_LEVEL)
    elif kind == "Extrude":
        n.theta["h"] = ParamHandle("h", 0.1)
        n.theta["w"] = ParamHandle("w", 1.0, lower=1e-3)
        n.theta["angles"] = _vec_handle("angles", [0.0, 0.0])
        n.beta_logit = ParamHandle("beta", -2.0, role="boolean")
    elif kind == "Bevel":
        n.theta["width"] = ParamHandle("width", 0.05, lower=0.0)
        n.branch_values = tuple(range(1, 10))
        w0 = np.zeros(9)
        w0[DEFAULT_SEGMENTS - 1] = 1.0
        n.branch_w = _vec_handle("segments_w", w0)
    elif kind in ("EdgeLoopAffine", "GlobalAffine"):
        n.theta["translate"] = _vec_handle("translate", [0.0, 0.0, 0.0])
        n.theta["scale"] = _vec_handle("scale", [1.0, 1.0, 1.0])
        n.theta["rotate"] = _vec_handle("rotate", [0.0, 0.0, 0.0])
        n.branch_values = AFFINE_KINDS
        n.branch_w = _vec_handle("kind_w", np.zeros(3))
    elif kind == "SimpleDeform":
        # identity factor differs per mode: 0 for angles, 1 for scales
        init = np.array([_deform_identity(m) for m, _ in _DEFORM_BRANCHES])
        n.theta["factor"] = _vec_handle("factor", init)
        n.branch_values = _DEFORM_BRANCHES
        n.branch_w = _vec_handle("mode_w", np.zeros(len(_DEFORM_BRANCHES)))
    # LoopCut / KnifeCut / VertexDisplace / Mirror: no eager parameters;
    # displacement offsets are allocated lazily at the observed vertex count
    return n


def cycle_nodes(cycle: int, omega: float) -> list[OperationNode]:
    out = []
    for kind in CYCLE_TEMPLATE:
        if kind in ("LoopCut", "KnifeCut") and cycle >= CUT_CYCLE_LIMIT:
            continue
        if kind == "Mirror" and cycle >= MIRROR_CYCLE_LIMIT:
            continue
        out.append(make_node(kind, cycle, omega))
    return out


@dataclass
class OperationGraph:
    nodes: list[OperationNode] = field(default_factory=list)
    num_cycles: int = 0
    max_cycles: int = 12
    stage: str = "proxy"                # proxy | exact | final
    initial: dict = field(default_factory=lambda: {"kind": "cube", "size": 1.0})
    vis_out: ParamHandle | None = None     # per-point visibility logits,
    vis_target: ParamHandle | None = None  # re-allocated on resampling

    def handles(self) -> list[ParamHandle]:
        out = []
        for n in self.nodes:
            if n.enabled:
                out.extend(n.handles())
        for h in (self.vis_out, self.vis_target):
            if h is not None:
                out.append(h)
        return out

    def initial_mesh(self) -> Mesh:
        m = unit_cube()
        size = float(self.initial.get("size", 1.0))
        if size != 1.0:
            m = global_affine(m, "scale", [size] * 3)
        return m


def build_graph(cycles: int = INITIAL_CYCLES, max_cycles: int = 12) -> OperationGraph:
    g = OperationGraph(max_cycles=max_cycles)
    for c in range(cycles):
        g.nodes.extend(cycle_nodes(c, INITIAL_OMEGA))
    g.num_cycles = cycles
    _renumber(g)
    return g


def _renumber(graph: OperationGraph):
    """Graph-local uids, so logs and checkpoints do not depend on how
    many graphs the process built before this one."""
    for i, n in enumerate(graph.nodes):
        n.uid = i


def grow(graph: OperationGraph) -> OperationGraph:
    """Append one near-off cycle; existing parameters untouched."""
    if graph.num_cycles >= graph.max_cycles:
        raise GraphError(f"growth cap reached ({graph.max_cycles} cycles)")
    graph.nodes.extend(cycle_nodes(graph.num_cycles, GROWN_OMEGA))
    graph.num_cycles += 1
    _renumber(graph)
    return graph


# -- forward pass -------------------------------------------------------


@dataclass
class GatedState:
    mesh: Mesh
    face_weights: torch.Tensor                     # (F,) in [0, 1]
    tags: dict[int, np.ndarray] = field(default_factory=dict)   # uid -> top faces
    residuals: list = field(default_factory=list)  # (PointCloud, weight tensor)


def _propagate(state: GatedState, out: Mesh, intro_weight: torch.Tensor) -> GatedState:
    """Carry face weights and tags across a topology change."""
    parents = torch.as_tensor(out.face_parents, dtype=torch.long)
    mask = parents >= 0
    inherited = state.face_weights.index_select(0, parents.clamp(min=0))
    fw = torch.where(mask, inherited, intro_weight.expand(len(out.faces)))
    pn = out.face_parents
    tags = {}
    for uid, faces in state.tags.items():
        kept = np.flatnonzero(np.isin(pn, faces))
        if len(kept):
            tags[uid] = kept
    return GatedState(mesh=out, face_weights=fw, tags=tags,
                      residuals=list(state.residuals))


def _set_weight(fw: torch.Tensor, face_ids, value: torch.Tensor) -> torch.Tensor:
    fw = fw.clone()
    idx = torch.as_tensor(sorted(face_ids), dtype=torch.long)
    fw[idx] = value.expand(len(idx))
    return fw


def _blend_vertices(mesh: Mesh, new_v: torch.Tensor, gamma: torch.Tensor) -> Mesh:
    return mesh.with_vertices(gamma * new_v + (1.0 - gamma) * mesh.vertices)


def _ensure_offsets(node: OperationNode, nv: int) -> ParamHandle:
    h = node.theta.get("offsets")
    if h is None or h.tensor.shape[0] != nv:
        old = h.tensor.detach().cpu().numpy() if h is not None else np.zeros((0, 3))
        fresh = np.zeros((nv, 3))
        fresh[: min(nv, len(old))] = old[:nv]
        node.theta["offsets"] = _vec_handle("offsets", fresh)
    return node.theta["offsets"]


def node_forward(node: OperationNode, state: GatedState,
                 residual_samples: int = 128, seed: int = 0) -> GatedState:
    """One node of Eq.-style composition with the gating semantics from
    the module docstring."""
    if not node.enabled:
        return state
    mesh, g = state.mesh, node.gamma
    k = node.kind
    try:
        if k == "Subdivision":
            eff = g * node.theta["level"].tensor
            if float(eff.detach()) < SUBDIV_TOPO_EPS:
                return state
            out = subdivide_blend(mesh, eff)
            return _propagate(state, out, torch.ones(()))

        if k in ("LoopCut", "KnifeCut"):
            if node.target is None:
                return state
            out = (loop_cut(mesh, list(node.target)) if k == "LoopCut"
                   else knife_cut(mesh, tuple(node.target)))
            # cut midpoints lie on the surface: geometry is unchanged, so
            # the gate matters only at extraction time
            return _propagate(state, out, torch.ones(()))

        if k == "Extrude":
            if node.boolean_params is not None:
                # finalized: the slot executes its exact Boolean replacement
                p = node.boolean_params
                out = boolean_exact(mesh, p["type"], p["primitive"],
                                    p["scale"], p["translate"], p["rotate"])
                return GatedState(out, torch.ones(out.num_faces),
                                  {}, list(state.residuals))
            if node.target is None:
                return state                      # proxy stage: prism sampled separately
            group = tuple(int(f) for f in node.target)
            if any(f < 0 or f >= mesh.num_faces for f in group):
                raise MeshError("extrusion target face missing from current mesh")
            pre_w = state.face_weights[torch.as_tensor(group, dtype=torch.long)].mean()
            res = sample_faces(mesh, group, residual_samples, seed)
            out = extrude_exact(mesh, group, node.theta["h"].tensor,
                                node.theta["w"].tensor, node.theta["angles"].tensor)
            nxt = _propagate(state, out, g)
            nxt.face_weights = _set_weight(nxt.face_weights, out.moved_faces, g)
            nxt.tags[node.uid] = np.asarray(out.top_faces, dtype=np.int64)
            nxt.residuals.append((res, (1.0 - g) * pre_w))
            return nxt

        if k == "Bevel":
            if node.target is None or float(node.theta["width"].tensor.detach()) < 1e-6:
                return state
            edges = [edge_key(a, b) for a, b in node.target]
            if any(e not in mesh.edge_faces for e in edges):
                raise MeshError("bevel target edge missing from current mesh")
            adj = sorted({fi for e in edges for fi in mesh.edge_faces[e]})
            pre_w = state.face_weights[torch.as_tensor(adj, dtype=torch.long)].mean()
            res = sample_faces(mesh, adj, residual_samples, seed)
            K = node.branch_values[node.argmax_branch()]
            out = bevel(mesh, edges, node.theta["width"].tensor, K)
            nxt = _propagate(state, out, g)
            nxt.residuals.append((res, (1.0 - g) * pre_w))
            return nxt

        if k == "Mirror":
            if node.target is None:
                return state
            out = mirror(mesh, node.target)
            return _propagate(state, out, g)

        if k == "EdgeLoopAffine":
            if node.target is None:
                return state
            loop = [edge_key(a, b) for a, b in node.target]
            p = node.probs
            vbar = torch.zeros_like(mesh.vertices)
            for b, kind in enumerate(node.branch_values):
                vbar = vbar + p[b] * edge_loop_affine(
                    mesh, loop, kind, node.theta[kind].tensor).vertices
            return GatedState(_blend_vertices(mesh, vbar, g),
                              state.face_weights, state.tags, list(state.residuals))

        if k == "SimpleDeform":
            p = node.probs
            f = node.theta["factor"].tensor
            vbar = torch.zeros_like(mesh.vertices)
            for b, (mode, axis) in enumerate(node.branch_values):
                vbar = vbar + p[b] * simple_deform(mesh, mode, f[b], axis).vertices
            return GatedState(_blend_vertices(mesh, vbar, g),
                              state.face_weights, state.tags, list(state.residuals))

        if k == "VertexDisplace":
            off = _ensure_offsets(node, mesh.num_vertices)
            out = mesh.with_vertices(mesh.vertices + g * off.tensor)
            return GatedState(out, state.face_weights, state.tags, list(state.residuals))

        if k == "GlobalAffine":
            p = node.probs
            vbar = torch.zeros_like(mesh.vertices)
            for b, kind in enumerate(node.branch_values):
                vbar = vbar + p[b] * global_affine(
                    mesh, kind, node.theta[kind].tensor).vertices
            return GatedState(_blend_vertices(mesh, vbar, g),
                              state.face_weights, state.tags, list(state.residuals))
    except MeshError as e:
        err = GraphError(
            f"node {node.uid} ({node.kind}, cycle {node.cycle}): {e}")
        err.node_uid = node.uid
        raise err from e
    raise GraphError(f"unknown node kind {k!r}")


@dataclass
class GraphOutput:
    points: torch.Tensor
    normals: np.ndarray
    weights: torch.Tensor
    top_sets: list                      # (bool mask over points, beta tensor)
    meshes: list[Mesh]
    final_mesh: Mesh

    def cloud(self) -> PointCloud:
        return PointCloud(points=self.points, normals=self.normals,
                          weights=self.weights)


def graph_forward(graph: OperationGraph, samples: int = 2048, seed: int = 0,
                  residual_samples: int = 128,
                  proxy_samples: int = 256) -> GraphOutput:
    """Sequential composition from the initial cube; returns the weighted
    sample cloud for the loss plus every intermediate mesh."""
    mesh = graph.initial_mesh()
    state = GatedState(mesh=mesh, face_weights=torch.ones(mesh.num_faces))
    meshes = [mesh]
    for i, node in enumerate(graph.nodes):
        # seed by node position, not identity, so reloaded graphs resample
        # identically
        state = node_forward(node, state, residual_samples=residual_samples,
                             seed=seed + 101 * (i + 1))
        if state.mesh is not meshes[-1]:
            meshes.append(state.mesh)

    pc = sample_surface(state.mesh, samples, seed)
    parts_p = [pc.points]
    parts_n = [pc.normals]
    parts_w = [state.face_weights.index_select(
        0, torch.as_tensor(pc.face_ids, dtype=torch.long))]
    spans = []   # (node uid, start, stop, beta, face mask within span)
    for uid, faces in state.tags.items():
        node = next(n for n in graph.nodes if n.uid == uid)
        if node.beta_logit is not None:
            spans.append((0, len(pc), node.beta, np.isin(pc.face_ids, faces)))

    offset = len(pc)
    for res, wgt in state.residuals:
        parts_p.append(res.points)
        parts_n.append(res.normals)
        parts_w.append(wgt.expand(len(res)))
        offset += len(res)

    if graph.stage == "proxy":
        for i, node in enumerate(graph.nodes):
            if node.enabled and node.kind == "Extrude" and node.proxy is not None:
                prism = node.proxy.prism()
                ppc = sample_surface(prism, proxy_samples, seed + 101 * (i + 1) + 1)
                parts_p.append(ppc.points)
                parts_n.append(ppc.normals)
                parts_w.append(node.gamma.expand(len(ppc)))
                spans.append((offset, offset + len(ppc), node.proxy.beta,
                              np.isin(ppc.face_ids, list(prism.top_faces))))
                offset += len(ppc)

    total = offset
    top_sets = []
    for start, stop, beta, local in spans:
        mask = np.zeros(total, dtype=bool)
        mask[start:stop] = local
        top_sets.append((mask, beta))

    return GraphOutput(
        points=torch.cat(parts_p),
        normals=np.concatenate(parts_n),
        weights=torch.cat(parts_w),
        top_sets=top_sets,
        meshes=meshes,
        final_mesh=state.mesh,
    )


# -- extraction ---------------------------------------------------------


def _edge_list(edges) -> list[list[int]]:
    return [[int(a), int(b)] for a, b in edges]


def _affine_is_noop(kind: str, vec: np.ndarray) -> bool:
    ref = 1.0 if kind == "scale" else 0.0
    return bool(np.abs(vec - ref).max() < NOOP_TOL)


def _node_record(node: OperationNode) -> OpRecord | None:
    k = node.kind
    g = float(node.gamma.detach())

    def val(name):
        return node.theta[name].tensor.detach().cpu().numpy()

    if k == "Subdivision":
        lvl = int(round(g * float(val("level"))))
        return OpRecord("Subdivision", {"level": lvl}) if lvl > 0 else None
    if k == "KnifeCut":
        return OpRecord("KnifeCut", {"edge_pair": _edge_list(node.target)})
    if k == "LoopCut":
        return OpRecord("LoopCut", {"ring": _edge_list(node.target)})
    if k == "Extrude":
        if node.boolean_params is not None:
            return OpRecord("Boolean", dict(node.boolean_params))
        h, w = float(val("h")), float(val("w"))
        if abs(h) < INSET_HEIGHT_TOL and w < 1.0:
            return OpRecord("Inset", {"faces": [int(f) for f in node.target], "width": w})
        return OpRecord("Extrude", {
            "faces": [int(f) for f in node.target], "height": h, "width": w,
            "angles": [float(a) for a in val("angles")]})
    if k == "Bevel":
        width = float(val("width"))
        if width < NOOP_TOL:
            return None
        return OpRecord("Bevel", {
            "edges": _edge_list(node.target), "width": width,
            "segments": int(node.branch_values[node.argmax_branch()])})
    if k in ("EdgeLoopAffine", "GlobalAffine"):
        kind = node.branch_values[node.argmax_branch()]
        vec = val(kind)
        if _affine_is_noop(kind, vec):
            return None
        p = {"kind": kind, "vec": [float(v) for v in vec]}
        if k == "EdgeLoopAffine":
            p["loop"] = _edge_list(node.target)
        return OpRecord(k, p)
    if k == "SimpleDeform":
        b = node.argmax_branch()
        mode, axis = node.branch_values[b]
        factor = float(val("factor")[b])
        if abs(factor - _deform_identity(mode)) < NOOP_TOL:
            return None
        return OpRecord("SimpleDeform", {"mode": mode, "axis": axis, "factor": factor})
    if k == "VertexDisplace":
        if "offsets" not in node.theta:
            return None
        off = g * val("offsets")   # the fitted displacement is gamma * theta
        if np.abs(off).max() < NOOP_TOL:
            return None
        return OpRecord("VertexDisplace", {"offsets": [[float(c) for c in r] for r in off]})
    if k == "Mirror":
        return OpRecord("Mirror", {"axis": node.target})
    raise GraphError(f"unknown node kind {k!r}")


def extract_sequence(graph: OperationGraph, tau: float = DEFAULT_TAU) -> DesignSequence:
    """Branch-free sequence: gates thresholded at tau, discrete choices
    by argmax, continuous values copied from the converged handles."""
    if not (0.0 < tau < 1.0):
        raise GraphError("tau must lie in (0, 1)")
    records = []
    for node in graph.nodes:
        if not node.enabled or float(node.gamma.detach()) < tau:
            continue
        if node.kind in STRUCTURAL_KINDS and node.target is None:
            if node.kind == "Extrude" and node.proxy is not None:
                raise GraphError(
                    f"node {node.uid}: unresolved extrusion proxy at extraction")
            continue                # never-activated structural slot
        rec = _node_record(node)
        if rec is not None:
            records.append(rec)
    return DesignSequence(operations=records, initial=dict(graph.initial))


# -- checkpointing ------------------------------------------------------


def _handle_state(h: ParamHandle):
    v = h.tensor.detach().cpu().numpy()
    return v.tolist() if v.ndim else float(v)


def to_checkpoint(graph: OperationGraph) -> str:
    """Self-describing JSON state for resumable fits. Extrusion proxies
    are rebuilt by the fit driver on resume and are not serialized."""
    nodes = []
    for n in graph.nodes:
        d = {
            "kind": n.kind, "cycle": n.cycle, "enabled": n.enabled,
            "omega": _handle_state(n.omega),
            "theta": {k: _handle_state(h) for k, h in n.theta.items()},
            "target": n.target,
            "restarts": n.restarts,
        }
        if n.branch_w is not None:
            d["branch_w"] = _handle_state(n.branch_w)
        if n.beta_logit is not None:
            d["beta_logit"] = _handle_state(n.beta_logit)
        if n.boolean_params is not None:
            d["boolean_params"] = n.boolean_params
        nodes.append(d)
    doc = {"format": "opforge-graph/1", "stage": graph.stage,
           "num_cycles": graph.num_cycles, "max_cycles": graph.max_cycles,
           "initial": graph.initial, "nodes": nodes}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _set_handle(h: ParamHandle, value):
    h.set_value(np.asarray(value, dtype=np.float64))


def from_checkpoint(doc: str) -> OperationGraph:
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as e:
        raise GraphError(f"invalid checkpoint JSON: {e}") from e
    if data.get("format") != "opforge-graph/1":
        raise GraphError(f"unsupported checkpoint format {data.get('format')!r}")
    g = OperationGraph(max_cycles=int(data["max_cycles"]),
                       stage=data["stage"], initial=data["initial"])
    for d in data["nodes"]:
        n = make_node(d["kind"], int(d["cycle"]),
                      float(d["omega"]) if np.isscalar(d["omega"]) else d["omega"])
        _set_handle(n.omega, d["omega"])
        for key, value in d["theta"].items():
            if key not in n.theta:     # lazily allocated (displacement offsets)
                n.theta[key] = _vec_handle(key, value)
            else:
                _set_handle(n.theta[key], value)
        if "branch_w" in d:
            _set_handle(n.branch_w, d["branch_w"])
        if "beta_logit" in d:
            _set_handle(n.beta_logit, d["beta_logit"])
        n.enabled = bool(d["enabled"])
        n.restarts = int(d.get("restarts", 0))
        t = d.get("target")
        if t is not None:
            if isinstance(t, str):
                n.target = t
            else:
                n.target = tuple(tuple(x) if isinstance(x, list) else x for x in t)
        if "boolean_params" in d:
            n.boolean_params = d["boolean_params"]
        g.nodes.append(n)
    g.num_cycles = int(data["num_cycles"])
    _renumber(g)
    return g
