"""Catmull-Clark subdivision, its topology-only twin, and the blended step.

Both schemes share one topology builder so their outputs correspond
element by element, which is what makes the fractional blend well defined.
Topology is cached per face list; the per-call work is pure tensor math.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch

from ..mesh import Face, Mesh, MeshError, edge_key


@lru_cache(maxsize=256)
def _subdiv_topology(faces: tuple[Face, ...], num_vertices: int):
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(faces):
        n = len(f)
        for i in range(n):
            edge_faces.setdefault(edge_key(f[i], f[(i + 1) % n]), []).append(fi)
    for e, fs in edge_faces.items():
        if len(fs) > 2:
            raise MeshError(f"non-manifold edge {e} ({len(fs)} faces)")
    edges = sorted(edge_faces)
    edge_index = {e: i for i, e in enumerate(edges)}

    V = num_vertices
    E = len(edges)
    # output vertex order: originals, edge points (sorted edge key), face points
    ep_base, fp_base = V, V + E

    new_faces: list[Face] = []
    parents: list[int] = []
    for fi, f in enumerate(faces):
        n = len(f)
        for i in range(n):
            e_prev = edge_index[edge_key(f[(i - 1) % n], f[i])]
            e_next = edge_index[edge_key(f[i], f[(i + 1) % n])]
            new_faces.append((f[i], ep_base + e_next, fp_base + fi, ep_base + e_prev))
            parents.append(fi)

    # flat arrays for centroid accumulation
    fid_flat = np.concatenate([np.full(len(f), fi) for fi, f in enumerate(faces)])
    vid_flat = np.concatenate([np.array(f) for f in faces])
    face_sizes = np.array([len(f) for f in faces], dtype=np.float64)

    e_a = np.array([e[0] for e in edges], dtype=np.int64)
    e_b = np.array([e[1] for e in edges], dtype=np.int64)
    e_f = np.full((E, 2), -1, dtype=np.int64)
    for i, e in enumerate(edges):
        fs = edge_faces[e]
        e_f[i, : len(fs)] = fs
    boundary = e_f[:, 1] < 0

    # per-vertex incidence
    vert_edges: list[list[int]] = [[] for _ in range(V)]
    for i, e in enumerate(edges):
        vert_edges[e[0]].append(i)
        vert_edges[e[1]].append(i)
    vert_faces: list[list[int]] = [[] for _ in range(V)]
    for fi, f in enumerate(faces):
        for v in f:
            vert_faces[v].append(fi)

    # flattened incidence tensors for the vectorized vertex rule
    vf_v = np.concatenate([np.full(len(fs), v) for v, fs in enumerate(vert_faces)]) \
        if V else np.zeros(0, dtype=np.int64)
    vf_f = np.concatenate([np.array(fs, dtype=np.int64) for fs in vert_faces]) \
        if V else np.zeros(0, dtype=np.int64)
    ve_v = np.concatenate([np.full(len(es), v) for v, es in enumerate(vert_edges)]) \
        if V else np.zeros(0, dtype=np.int64)
    ve_e = np.concatenate([np.array(es, dtype=np.int64) for es in vert_edges]) \
        if V else np.zeros(0, dtype=np.int64)
    n_edges = np.array([len(es) for es in vert_edges], dtype=np.float64)
    n_faces_v = np.array([max(len(fs), 1) for fs in vert_faces], dtype=np.float64)

    # boundary rule indices: the first two boundary neighbors (or the
    # vertex itself when it has a single boundary edge)
    bvert = np.zeros(V, dtype=bool)
    bn1 = np.arange(V, dtype=np.int64)
    bn2 = np.arange(V, dtype=np.int64)
    for v in range(V):
        b_edges = [ei for ei in vert_edges[v] if boundary[ei]]
        if not b_edges:
            continue
        bvert[v] = True
        others = []
        for ei in b_edges[:2]:
            e = edges[ei]
            others.append(e[1] if e[0] == v else e[0])
        bn1[v] = others[0]
        bn2[v] = others[1] if len(others) > 1 else v

    return {
        "edges": edges,
        "new_faces": tuple(new_faces),
        "parents": np.array(parents, dtype=np.int64),
        "fid_flat": torch.as_tensor(fid_flat, dtype=torch.long),
        "vid_flat": torch.as_tensor(vid_flat, dtype=torch.long),
        "face_sizes": torch.as_tensor(face_sizes),
        "e_a": torch.as_tensor(e_a, dtype=torch.long),
        "e_b": torch.as_tensor(e_b, dtype=torch.long),
        "e_f": e_f,
        "boundary": boundary,
        "vert_edges": vert_edges,
        "vert_faces": vert_faces,
        "num_faces": len(faces),
        "vf_v": torch.as_tensor(vf_v, dtype=torch.long),
        "vf_f": torch.as_tensor(vf_f, dtype=torch.long),
        "ve_v": torch.as_tensor(ve_v, dtype=torch.long),
        "ve_e": torch.as_tensor(ve_e, dtype=torch.long),
        "n_edges": torch.as_tensor(n_edges),
        "n_faces_v": torch.as_tensor(n_faces_v),
        "bvert": torch.as_tensor(bvert),
        "bn1": torch.as_tensor(bn1, dtype=torch.long),
        "bn2": torch.as_tensor(bn2, dtype=torch.long),
        "f1": torch.as_tensor(np.where(e_f[:, 0] >= 0, e_f[:, 0], 0), dtype=torch.long),
        "f2": torch.as_tensor(np.where(e_f[:, 1] >= 0, e_f[:, 1], 0), dtype=torch.long),
        "bmask": torch.as_tensor(boundary)[:, None],
    }


def _face_points(verts: torch.Tensor, topo) -> torch.Tensor:
    F = topo["num_faces"]
    acc = torch.zeros((F, 3), dtype=torch.float64)
    acc = acc.index_add(0, topo["fid_flat"], verts.index_select(0, topo["vid_flat"]))
    return acc / topo["face_sizes"][:, None]


def _positions(verts: torch.Tensor, topo, scheme: str) -> torch.Tensor:
    """Positions for the subdivided mesh under "catmull" or "simple"."""
    fp = _face_points(verts, topo)
    va = verts.index_select(0, topo["e_a"])
    vb = verts.index_select(0, topo["e_b"])
    mid = 0.5 * (va + vb)
    boundary = topo["boundary"]

    if scheme == "simple":
        ep = mid
        new_orig = verts
    else:
        interior_ep = 0.25 * (va + vb + fp.index_select(0, topo["f1"])
                              + fp.index_select(0, topo["f2"]))
        ep = torch.where(topo["bmask"], mid, interior_ep)

        V = verts.shape[0]
        zeros = torch.zeros((V, 3), dtype=torch.float64)
        q = zeros.index_add(0, topo["vf_v"], fp.index_select(0, topo["vf_f"])) \
            / topo["n_faces_v"][:, None]
        r = zeros.index_add(0, topo["ve_v"], mid.index_select(0, topo["ve_e"])) \
            / topo["n_edges"].clamp(min=1.0)[:, None]
        n = topo["n_edges"][:, None]
        interior = (q + 2.0 * r + (n - 3.0) * verts) / n.clamp(min=1.0)
        # boundary rule: 3/4 v + 1/8 each of (up to) two boundary neighbors;
        # a lone boundary edge re-uses the vertex itself as the second term
        bdry = 0.75 * verts + 0.125 * (verts.index_select(0, topo["bn1"])
                                       + verts.index_select(0, topo["bn2"]))
        new_orig = torch.where(topo["bvert"][:, None], bdry, interior)

    return torch.cat([new_orig, ep, fp], dim=0)


def _build(mesh: Mesh, verts: torch.Tensor, topo) -> Mesh:
    out = Mesh(verts, topo["new_faces"], validate=False)
    out.face_parents = topo["parents"].copy()
    return out


def subdivide_catmull(mesh: Mesh) -> Mesh:
    topo = _subdiv_topology(mesh.faces, mesh.num_vertices)
    return _build(mesh, _positions(mesh.vertices, topo, "catmull"), topo)


def subdivide_simple(mesh: Mesh) -> Mesh:
    topo = _subdiv_topology(mesh.faces, mesh.num_vertices)
    return _build(mesh, _positions(mesh.vertices, topo, "simple"), topo)


def subdivide_blend(mesh: Mesh, level) -> Mesh:
    """floor(level) full Catmull-Clark steps plus one fractional blended step.

    Differentiable in level: within the fractional step,
    d(position)/d(beta) = v_cat - v_sim exactly. An integer level adds no
    extra topology beyond the full steps.
    """
    lv = level if isinstance(level, torch.Tensor) else torch.as_tensor(float(level))
    lf = float(lv.detach())
    if lf < 0:
        raise MeshError("subdivision level must be >= 0")
    whole = int(np.floor(lf + 1e-9))
    frac = lf - whole
    out = mesh
    acc = None   # face_parents must map to the ORIGINAL input mesh
    for _ in range(whole):
        out = subdivide_catmull(out)
        acc = out.face_parents if acc is None else acc[out.face_parents]
        out.face_parents = acc
    if frac > 1e-9:
        topo = _subdiv_topology(out.faces, out.num_vertices)
        v_cat = _positions(out.vertices, topo, "catmull")
        v_sim = _positions(out.vertices, topo, "simple")
        beta = lv - float(whole)
        out = _build(out, v_sim + beta * (v_cat - v_sim), topo)
        out.face_parents = (out.face_parents if acc is None
                            else acc[out.face_parents])
    return out
