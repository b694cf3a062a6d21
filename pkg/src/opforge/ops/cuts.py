"""KnifeCut and LoopCut: midpoint insertion and face splitting."""

from __future__ import annotations

import numpy as np
import torch

from ..mesh import Edge, Mesh, MeshError, edge_key


def _insert_midpoints(mesh: Mesh, cut_edges: list[Edge]):
    """Append one midpoint vertex per cut edge; returns (verts, index map)."""
    v = mesh.vertices
    mids = []
    mid_index: dict[Edge, int] = {}
    for n, e in enumerate(cut_edges):
        mid_index[e] = mesh.num_vertices + n
        mids.append(0.5 * (v[e[0]] + v[e[1]]))
    verts = torch.cat([v, torch.stack(mids)]) if mids else v
    return verts, mid_index


def _face_with_midpoints(face, mid_index):
    """Face cycle with midpoints spliced into their host edges."""
    out = []
    n = len(face)
    for i in range(n):
        out.append(face[i])
        e = edge_key(face[i], face[(i + 1) % n])
        if e in mid_index:
            out.append(mid_index[e])
    return tuple(out)


def knife_cut(mesh: Mesh, edge_pair: tuple[Edge, Edge]) -> Mesh:
    """Split one face by connecting the midpoints of two of its edges.

    Neighboring faces sharing the cut edges also receive the midpoint
    vertices, so no T-junctions are created.
    """
    e1 = edge_key(*edge_pair[0])
    e2 = edge_key(*edge_pair[1])
    if e1 == e2:
        raise MeshError("knife cut needs two distinct edges")
    common = [
        fi for fi, f in enumerate(mesh.faces)
        if e1 in _face_edges(f) and e2 in _face_edges(f)
    ]
    if not common:
        raise MeshError(f"edges {e1} and {e2} do not bound a common face")
    target = common[0]
    face = mesh.faces[target]
    if len(face) < 4:
        raise MeshError("knife cut target face must have >= 4 vertices")

    verts, mid_index = _insert_midpoints(mesh, [e1, e2])
    m1, m2 = mid_index[e1], mid_index[e2]

    cyc = _face_with_midpoints(face, mid_index)
    i1, i2 = cyc.index(m1), cyc.index(m2)
    if i1 > i2:
        i1, i2 = i2, i1
        m1, m2 = m2, m1
    half_a = cyc[i1:i2 + 1]
    half_b = cyc[i2:] + cyc[:i1 + 1]

    faces = []
    parents = []
    for fi, f in enumerate(mesh.faces):
        if fi == target:
            faces.extend([half_a, half_b])
            parents.extend([fi, fi])
        else:
            faces.append(_face_with_midpoints(f, mid_index))
            parents.append(fi)
    out = Mesh(verts, faces, validate=False)
    out.face_parents = np.array(parents, dtype=np.int64)
    return out


def _face_edges(face) -> set[Edge]:
    n = len(face)
    return {edge_key(face[i], face[(i + 1) % n]) for i in range(n)}


def loop_cut(mesh: Mesh, ring: list[Edge]) -> Mesh:
    """Insert a midpoint on every ring edge and split each crossed quad.

    A closed ring yields a new closed edge loop through the midpoints.
    """
    ring_edges = [edge_key(*e) for e in ring]
    if len(set(ring_edges)) != len(ring_edges) or len(ring_edges) < 2:
        raise MeshError("invalid edge ring")
    for e in ring_edges:
        if e not in mesh.edge_faces:
            raise MeshError(f"ring edge {e} not in mesh")

    verts, mid_index = _insert_midpoints(mesh, ring_edges)
    ring_set = set(ring_edges)

    faces = []
    parents = []
    for fi, f in enumerate(mesh.faces):
        n = len(f)
        cut = []
        for i in range(n):
            e = edge_key(f[i], f[(i + 1) % n])
            if e in ring_set and e not in cut:
                cut.append(e)
        if len(cut) == 2 and len(f) == 4:
            cyc = _face_with_midpoints(f, mid_index)  # hexagon
            i1 = cyc.index(mid_index[cut[0]])
            i2 = cyc.index(mid_index[cut[1]])
            if i1 > i2:
                i1, i2 = i2, i1
            faces.extend([cyc[i1:i2 + 1], cyc[i2:] + cyc[:i1 + 1]])
            parents.extend([fi, fi])
        else:
            faces.append(_face_with_midpoints(f, mid_index))
            parents.append(fi)
    out = Mesh(verts, faces, validate=False)
    out.face_parents = np.array(parents, dtype=np.int64)
    return out
