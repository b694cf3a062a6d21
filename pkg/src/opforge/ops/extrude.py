"""Exact Extrude and Inset on connected face groups.

Both share one topology builder: the group's vertices are duplicated,
border quads are stitched along the group boundary, and the group faces
are reassigned to the duplicates. Only the placement of the duplicated
ring differs.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch

from ..mesh import Face, Mesh, MeshError, edge_key


def _group_connected(faces: tuple[Face, ...], face_set: tuple[int, ...]) -> bool:
    if not face_set:
        return False
    if any(fi < 0 or fi >= len(faces) for fi in face_set):
        raise MeshError(f"face id out of range (F={len(faces)})")
    fs = set(face_set)
    edge_faces: dict = {}
    for fi in fs:
        f = faces[fi]
        n = len(f)
        for i in range(n):
            edge_faces.setdefault(edge_key(f[i], f[(i + 1) % n]), []).append(fi)
    adj: dict[int, set[int]] = {fi: set() for fi in fs}
    for lst in edge_faces.values():
        for a in lst:
            for b in lst:
                if a != b:
                    adj[a].add(b)
    seen = set()
    stack = [next(iter(fs))]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        stack.extend(adj[x] - seen)
    return seen == fs


@lru_cache(maxsize=512)
def _extrude_topology(faces: tuple[Face, ...], face_set: tuple[int, ...], num_vertices: int):
    if not _group_connected(faces, face_set):
        raise MeshError("face set must be a nonempty connected group")
    fs = set(face_set)
    group_verts = sorted({v for fi in fs for v in faces[fi]})
    dup = {v: num_vertices + i for i, v in enumerate(group_verts)}

    # boundary edges of the group, directed per group-face orientation
    edge_count: dict = {}
    directed: dict = {}
    for fi in fs:
        f = faces[fi]
        n = len(f)
        for i in range(n):
            a, b = f[i], f[(i + 1) % n]
            edge_count[edge_key(a, b)] = edge_count.get(edge_key(a, b), 0) + 1
            directed[edge_key(a, b)] = (a, b)
    boundary = [directed[e] for e, c in sorted(edge_count.items()) if c == 1]

    new_faces: list[Face] = []
    parents: list[int] = []
    for fi, f in enumerate(faces):
        if fi in fs:
            new_faces.append(tuple(dup[v] for v in f))
        else:
            new_faces.append(f)
        parents.append(fi)
    created_from = {}
    for a, b in boundary:
        created_from[len(new_faces)] = -1
        new_faces.append((a, b, dup[b], dup[a]))
        parents.append(-1)
    return {
        "group_verts": np.array(group_verts, dtype=np.int64),
        "faces": tuple(new_faces),
        "parents": np.array(parents, dtype=np.int64),
        "group_faces": tuple(sorted(fs)),
    }


def _group_frame(mesh: Mesh, face_set) -> tuple[torch.Tensor, torch.Tensor]:
    """(centroid of group vertices, unit area-weighted average normal)."""
    normals = mesh.face_normals_t()
    n = torch.zeros(3, dtype=torch.float64)
    for fi in face_set:
        n = n + normals[fi]
    ln = torch.linalg.norm(n)
    if float(ln.detach()) < 1e-12:
        raise MeshError("zero-area face group")
    n = n / ln
    vids = sorted({v for fi in face_set for v in mesh.faces[fi]})
    c = mesh.vertices.index_select(0, torch.tensor(vids, dtype=torch.long)).mean(dim=0)
    return c, n


def _tangent_frame(n: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    k = int(torch.argmin(torch.abs(n.detach())))
    e = torch.zeros(3, dtype=torch.float64)
    e[k] = 1.0
    t1 = torch.linalg.cross(n, e)
    t1 = t1 / torch.linalg.norm(t1)
    t2 = torch.linalg.cross(n, t1)
    return t1, t2


def _axis_rotation(axis: torch.Tensor, ang: torch.Tensor) -> torch.Tensor:
    """Rodrigues rotation matrix about a unit axis."""
    c, s = torch.cos(ang), torch.sin(ang)
    x, y, z = axis[0], axis[1], axis[2]
    K = torch.stack([
        torch.stack([torch.zeros((), dtype=torch.float64), -z, y]),
        torch.stack([z, torch.zeros((), dtype=torch.float64), -x]),
        torch.stack([-y, x, torch.zeros((), dtype=torch.float64)]),
    ])
    return torch.eye(3, dtype=torch.float64) + s * K + (1 - c) * (K @ K)


def _ring_positions(mesh: Mesh, face_set, h, w, angles) -> torch.Tensor:
    """Placed duplicate positions for the group's vertices."""
    c, n = _group_frame(mesh, face_set)
    t1, t2 = _tangent_frame(n)
    vids = sorted({v for fi in face_set for v in mesh.faces[fi]})
    pts = mesh.vertices.index_select(0, torch.tensor(vids, dtype=torch.long))
    off = pts - c
    off_n = (off @ n)[:, None] * n
    off_t = off - off_n
    # width scales in-plane offsets; the two angles tilt about the tangents
    placed = w * off_t + off_n
    R = _axis_rotation(t2, angles[1]) @ _axis_rotation(t1, angles[0])
    placed = placed @ R.T
    return c + placed + h * n


def _to_t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(float(x))


def extrude_exact(mesh: Mesh, face_set, h, w, angles) -> Mesh:
    """Extrude a connected face group along its average normal.

    h displaces along the normal (negative intrudes), w scales the top
    ring in the plane perpendicular to the group normal, and the two
    angles tilt it about the tangent axes. Differentiable in h, w, angles.
    """
    face_set = tuple(sorted(int(f) for f in face_set))
    w_t = _to_t(w)
    if float(w_t.detach()) <= 0:
        raise MeshError("extrude width must be positive")
    topo = _extrude_topology(mesh.faces, face_set, mesh.num_vertices)
    ang = angles if isinstance(angles, torch.Tensor) else torch.as_tensor(
        np.asarray(angles, dtype=np.float64))
    top = _ring_positions(mesh, face_set, _to_t(h), w_t, ang)
    verts = torch.cat([mesh.vertices, top])
    out = Mesh(verts, topo["faces"], validate=False)
    out.face_parents = topo["parents"].copy()
    out.moved_faces = tuple(face_set) + tuple(
        i for i, p in enumerate(topo["parents"]) if p < 0
    )
    out.top_faces = tuple(face_set)  # group faces now live on the top ring
    return out


def inset(mesh: Mesh, face_set, width) -> Mesh:
    """Inset a connected face group: inner ring at the given size ratio
    about the group centroid, border quads stitched."""
    face_set = tuple(sorted(int(f) for f in face_set))
    w_t = _to_t(width)
    wv = float(w_t.detach())
    if not (0.0 < wv < 1.0):
        raise MeshError("inset width must lie strictly inside (0, 1)")
    topo = _extrude_topology(mesh.faces, face_set, mesh.num_vertices)
    inner = _ring_positions(
        mesh, face_set, torch.zeros(()), w_t, torch.zeros(2, dtype=torch.float64)
    )
    verts = torch.cat([mesh.vertices, inner])
    out = Mesh(verts, topo["faces"], validate=False)
    out.face_parents = topo["parents"].copy()
    out.moved_faces = tuple(face_set) + tuple(
        i for i, p in enumerate(topo["parents"]) if p < 0
    )
    return out
