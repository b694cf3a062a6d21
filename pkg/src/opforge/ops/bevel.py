"""Edge bevel: replaces each selected edge with a circular-arc strip.

Per beveled vertex the two offset points slide along the adjacent faces,
the arc center sits on the line through the first offset perpendicular to
its slide direction and on the bisecting plane of the two directions, and
the arc is sampled at K+1 uniform angles. Differentiable in width.
"""

from __future__ import annotations

import numpy as np
import torch

from ..autodiff import safe_arccos
from ..mesh import Edge, Face, Mesh, MeshError, edge_key

CHAMFER_ANGLE = 1e-6  # below this arc sweep, fall back to a straight cut


def _to_t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(float(x))


def _inplane_dir(mesh: Mesh, normals: torch.Tensor, fi: int, e: Edge) -> torch.Tensor:
    """Unit vector orthogonal to edge e, in the plane of face fi, pointing
    into the face interior."""
    v = mesh.vertices
    a, b = e
    ehat = v[b] - v[a]
    ehat = ehat / torch.linalg.norm(ehat)
    n = normals[fi]
    ln = torch.linalg.norm(n)
    if float(ln.detach()) < 1e-12:
        raise MeshError(f"degenerate face {fi} adjacent to beveled edge")
    d = torch.linalg.cross(n / ln, ehat)
    d = d / torch.linalg.norm(d)
    idx = torch.tensor(mesh.faces[fi], dtype=torch.long)
    centroid = v.index_select(0, idx).mean(dim=0)
    inward = centroid - 0.5 * (v[a] + v[b])
    if float((d @ inward).detach()) < 0:
        d = -d
    return d


def _arc_frame(v0, d1, d2, w):
    """Arc center, radius, in-plane basis and sweep for one beveled
    vertex, or None when the configuration degenerates to a straight cut.

    The center lies on the line through v1 = v0 + w*d1 perpendicular to
    d1, intersected with the bisecting plane of d1 and d2; the frame is
    chosen so the arc runs from v1 at angle 0 to v2 at the sweep angle.
    """
    v1 = v0 + w * d1
    v2 = v0 + w * d2
    c = torch.clamp(d1 @ d2, -1.0 + 1e-12, 1.0 - 1e-12)
    s = torch.sqrt(1.0 - c * c)
    r = w * (1.0 - c) / s
    if float(r.detach()) < 1e-12:
        return None
    b1 = (d2 - c * d1) / s
    o = v1 + r * b1
    u = (v1 - o) / r
    cr = torch.linalg.cross(v1 - o, v2 - o)
    lcr = torch.linalg.norm(cr)
    if float(lcr.detach()) < 1e-15:
        return None
    nrm = cr / lcr
    vv = torch.linalg.cross(nrm, u)
    smax = safe_arccos(((v1 - o) @ (v2 - o)) / (r * r))
    if float(smax.detach()) < CHAMFER_ANGLE:
        return None
    return o, r, u, vv, smax


def _arc_points(v0, d1, d2, w, k: int) -> list[torch.Tensor]:
    """K+1 points from v0+w*d1 to v0+w*d2 along the bevel arc."""
    frame = _arc_frame(v0, d1, d2, w)
    if frame is None:
        v1, v2 = v0 + w * d1, v0 + w * d2
        ts = torch.linspace(0.0, 1.0, k + 1, dtype=torch.float64)
        return [v1 + t * (v2 - v1) for t in ts]
    o, r, u, vv, smax = frame
    sig = torch.linspace(0.0, 1.0, k + 1, dtype=torch.float64) * smax
    return [o + r * (torch.cos(sg) * u + torch.sin(sg) * vv) for sg in sig]


def bevel(mesh: Mesh, edges, width, segments: int) -> Mesh:
    """Bevel a set of edges, no two of which may share an endpoint.

    Each endpoint of a beveled edge is replaced by an arc of segments+1
    vertices; the edge itself becomes a strip of `segments` quads. Width
    is clamped to half the shortest edge incident to either endpoint
    (flagged on the result as bevel_clamped).
    """
    if not isinstance(segments, int) or not (1 <= segments <= 9):
        raise MeshError("segment count must be an integer in 1..9")
    sel = [edge_key(int(a), int(b)) for a, b in edges]
    if len(set(sel)) != len(sel):
        raise MeshError("duplicate edge in bevel selection")
    if not sel:
        raise MeshError("empty bevel selection")
    endpoints = [v for e in sel for v in e]
    if len(set(endpoints)) != len(endpoints):
        raise MeshError("beveled edges must not share endpoints")
    w = _to_t(width)
    if float(w.detach()) < 0:
        raise MeshError("bevel width must be nonnegative")

    ef = mesh.edge_faces
    for e in sel:
        if e not in ef:
            raise MeshError(f"edge {e} not in mesh")
        if len(ef[e]) != 2:
            raise MeshError(f"edge {e} must have exactly two adjacent faces")

    # clamp against the shortest neighboring edge
    v_np = mesh.verts_np
    limit = None
    for e in sel:
        for vid in e:
            for ne in mesh.vertex_edges[vid]:
                if ne == e:
                    continue
                ln = float(((v_np[ne[0]] - v_np[ne[1]]) ** 2).sum() ** 0.5)
                limit = ln if limit is None else min(limit, ln)
    clamped = limit is not None and float(w.detach()) > 0.5 * limit
    if clamped:
        w = torch.minimum(w, torch.as_tensor(0.5 * limit))

    normals = mesh.face_normals_t()
    v = mesh.vertices
    K = segments

    new_pts: list[torch.Tensor] = []
    # (face, old vertex) -> replacement id sequence
    repl: dict[tuple[int, int], list[int]] = {}
    strips: list[Face] = []
    removed: set[int] = set()

    for e in sel:
        a, b = e
        removed.update(e)
        fs = ef[e]
        # f1 holds the directed edge a->b
        def _holds_directed(fi):
            f = mesh.faces[fi]
            n = len(f)
            return any(f[i] == a and f[(i + 1) % n] == b for i in range(n))
        f1, f2 = (fs[0], fs[1]) if _holds_directed(fs[0]) else (fs[1], fs[0])
        d1a = _inplane_dir(mesh, normals, f1, e)
        d2a = _inplane_dir(mesh, normals, f2, e)
        f1_set, f2_set = set(mesh.faces[f1]), set(mesh.faces[f2])

        arcs = {}
        for vid in (a, b):
            pts = _arc_points(v[vid], d1a, d2a, w, K)
            ids = list(range(len(new_pts), len(new_pts) + K + 1))
            new_pts.extend(pts)
            arcs[vid] = ids

        A, B = arcs[a], arcs[b]
        repl[(f1, a)] = [A[0]]
        repl[(f1, b)] = [B[0]]
        repl[(f2, a)] = [A[-1]]
        repl[(f2, b)] = [B[-1]]
        for vid, arc in ((a, A), (b, B)):
            for fi in mesh.vertex_faces[vid]:
                if fi in (f1, f2):
                    continue
                f = mesh.faces[fi]
                i = f.index(vid)
                p, q = f[i - 1], f[(i + 1) % len(f)]
                if p in f1_set:
                    order = arc
                elif p in f2_set:
                    order = arc[::-1]
                elif q in f1_set:
                    order = arc[::-1]
                elif q in f2_set:
                    order = arc
                else:
                    # fall back on geometry: start nearest the predecessor
                    d0 = float(((new_pts[arc[0]] - v[p]) ** 2).sum().detach())
                    dK = float(((new_pts[arc[-1]] - v[p]) ** 2).sum().detach())
                    order = arc if d0 <= dK else arc[::-1]
                repl[(fi, vid)] = list(order)
        for j in range(K):
            strips.append(("new", B[j], A[j], A[j + 1], B[j + 1]))

    # compact: surviving originals first, then arc points
    keep = [i for i in range(mesh.num_vertices) if i not in removed]
    old_map = {vid: i for i, vid in enumerate(keep)}
    new_base = len(keep)

    faces_out: list[Face] = []
    parents: list[int] = []
    for fi, f in enumerate(mesh.faces):
        cyc: list[int] = []
        for vid in f:
            if (fi, vid) in repl:
                cyc.extend(new_base + j for j in repl[(fi, vid)])
            else:
                cyc.append(old_map[vid])
        # welding at width 0 can alias consecutive entries; keep as-is,
        # degenerate duplicates only appear transiently during fits
        faces_out.append(tuple(cyc))
        parents.append(fi)
    for s in strips:
        faces_out.append(tuple(new_base + j for j in s[1:]))
        parents.append(-1)

    verts = torch.cat([
        mesh.vertices.index_select(0, torch.tensor(keep, dtype=torch.long)),
        torch.stack(new_pts),
    ])
    out = Mesh(verts, faces_out, validate=False)
    out.face_parents = np.array(parents, dtype=np.int64)
    out.bevel_clamped = clamped
    out.moved_faces = tuple(
        i for i, f in enumerate(faces_out) if any(x >= new_base for x in f)
    )
    return out
