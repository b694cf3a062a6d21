"""Position-only operations: vertex displacement, affine transforms and
closed-form simple deformations. All are differentiable in their
parameters via torch."""

from __future__ import annotations

import numpy as np
import torch

from ..mesh import Edge, Mesh, MeshError

AXES = ("x", "y", "z")
DEFORM_MODES = ("twist", "stretch", "bend", "taper")


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def vertex_displace(mesh: Mesh, offsets) -> Mesh:
    off = _t(offsets)
    if tuple(off.shape) != (mesh.num_vertices, 3):
        raise MeshError(
            f"offsets shape {tuple(off.shape)} != ({mesh.num_vertices}, 3)"
        )
    return mesh.with_vertices(mesh.vertices + off)


def _rotation_matrix(angles: torch.Tensor) -> torch.Tensor:
    """XYZ Euler rotation, differentiable in the three angles."""
    ax, ay, az = angles[0], angles[1], angles[2]
    one = torch.ones((), dtype=torch.float64)
    zero = torch.zeros((), dtype=torch.float64)
    cx, sx = torch.cos(ax), torch.sin(ax)
    cy, sy = torch.cos(ay), torch.sin(ay)
    cz, sz = torch.cos(az), torch.sin(az)
    rx = torch.stack([
        torch.stack([one, zero, zero]),
        torch.stack([zero, cx, -sx]),
        torch.stack([zero, sx, cx]),
    ])
    ry = torch.stack([
        torch.stack([cy, zero, sy]),
        torch.stack([zero, one, zero]),
        torch.stack([-sy, zero, cy]),
    ])
    rz = torch.stack([
        torch.stack([cz, -sz, zero]),
        torch.stack([sz, cz, zero]),
        torch.stack([zero, zero, one]),
    ])
    return rz @ ry @ rx


def global_affine(mesh: Mesh, kind: str, vec) -> Mesh:
    v = mesh.vertices
    p = _t(vec)
    if kind == "translate":
        return mesh.with_vertices(v + p)
    if kind == "scale":
        if bool((torch.abs(p) < 1e-12).any()):
            raise MeshError("zero scale component")
        return mesh.with_vertices(v * p)
    if kind == "rotate":
        c = v.detach().mean(dim=0)
        return mesh.with_vertices((v - c) @ _rotation_matrix(p).T + c)
    raise MeshError(f"unknown affine kind {kind!r}")


def edge_loop_affine(mesh: Mesh, loop: list[Edge], kind: str, vec) -> Mesh:
    """Affine transform of the loop's vertices about the loop centroid."""
    loop_edges = [tuple(e) for e in loop]
    for e in loop_edges:
        if tuple(sorted(e)) not in mesh.edge_faces:
            raise MeshError(f"loop edge {e} not in mesh")
    vids = sorted({v for e in loop_edges for v in e})
    idx = torch.tensor(vids, dtype=torch.long)
    v = mesh.vertices
    pts = v.index_select(0, idx)
    c = pts.detach().mean(dim=0)
    p = _t(vec)
    if kind == "translate":
        moved = pts + p
    elif kind == "scale":
        moved = c + (pts - c) * p
    elif kind == "rotate":
        moved = c + (pts - c) @ _rotation_matrix(p).T
    else:
        raise MeshError(f"unknown affine kind {kind!r}")
    return mesh.with_vertices(torch.index_put(v, (idx,), moved))


def simple_deform(mesh: Mesh, mode: str, factor, axis: str) -> Mesh:
    """Closed-form deformations about a coordinate axis.

    twist/bend take an angle in [-2pi, 2pi] (0 = identity); stretch/taper
    are scale-style factors (1 = identity). The axial extent comes from
    the mesh bounding box, frozen per evaluation.
    """
    if mode not in DEFORM_MODES:
        raise MeshError(f"unknown deform mode {mode!r}")
    if axis not in AXES:
        raise MeshError(f"unknown axis {axis!r}")
    f = _t(factor)
    v = mesh.vertices
    k = AXES.index(axis)
    i, j = (k + 1) % 3, (k + 2) % 3  # perpendicular plane
    lo, hi = mesh.bbox()
    smin, smax = float(lo[k]), float(hi[k])
    length = max(smax - smin, 1e-12)
    center = v.detach().mean(dim=0)
    s = v[:, k]
    t = (s - smin) / length  # normalized axial coordinate in [0,1]

    a = v[:, i] - center[i]
    b = v[:, j] - center[j]
    if mode == "twist":
        ang = f * t
        ca, sa = torch.cos(ang), torch.sin(ang)
        na = ca * a - sa * b
        nb = sa * a + ca * b
        cols = {k: s, i: na + center[i], j: nb + center[j]}
    elif mode == "stretch":
        cs = 0.5 * (smin + smax)
        cols = {k: cs + (s - cs) * f, i: v[:, i], j: v[:, j]}
    elif mode == "taper":
        scale = 1.0 + (f - 1.0) * t
        cols = {k: s, i: scale * a + center[i], j: scale * b + center[j]}
    else:  # bend: wrap the axial span onto an arc of total angle f
        h = a  # bend displaces along the first perpendicular axis
        if abs(float(f.detach())) < 1e-8:
            cols = {k: s, i: v[:, i], j: v[:, j]}
        else:
            radius = length / f
            theta = f * (s - smin) / length
            ns = smin + (radius - h) * torch.sin(theta)
            nh = radius - (radius - h) * torch.cos(theta)
            cols = {k: ns, i: nh + center[i], j: v[:, j]}
    out = torch.stack([cols[0], cols[1], cols[2]], dim=1)
    return mesh.with_vertices(out)


def mirror(mesh: Mesh, axis: str, weld_eps: float = 1e-7) -> Mesh:
    """Union the mesh with its reflection through the axis plane at the
    object origin (bbox center), welding coincident seam vertices."""
    if axis not in AXES:
        raise MeshError(f"unknown axis {axis!r}")
    k = AXES.index(axis)
    v = mesh.vertices
    plane = 0.0  # axis plane through the object origin
    sign = torch.ones(3, dtype=torch.float64)
    sign[k] = -1.0
    refl = v * sign
    shift = torch.zeros(3, dtype=torch.float64)
    shift[k] = 2.0 * plane
    refl = refl + shift

    vn = mesh.verts_np
    rn = refl.detach().cpu().numpy()
    # map each reflected vertex either to a coincident original or a new slot
    mapping = np.empty(mesh.num_vertices, dtype=np.int64)
    new_rows: list[int] = []
    for idx in range(mesh.num_vertices):
        d = np.abs(vn - rn[idx]).max(axis=1)
        hit = np.where(d <= weld_eps)[0]
        if len(hit):
            mapping[idx] = int(hit[0])
        else:
            mapping[idx] = mesh.num_vertices + len(new_rows)
            new_rows.append(idx)
    if new_rows:
        verts = torch.cat([v, refl.index_select(0, torch.tensor(new_rows, dtype=torch.long))])
    else:
        verts = v
    faces = list(mesh.faces)
    parents = list(range(len(faces)))
    existing = {tuple(sorted(f)) for f in faces}
    for fi, f in enumerate(mesh.faces):
        nf = tuple(int(mapping[i]) for i in reversed(f))  # flip orientation
        if tuple(sorted(nf)) in existing:
            continue
        faces.append(nf)
        parents.append(-1)
    out = Mesh(verts, faces, validate=False)
    out.face_parents = np.array(parents, dtype=np.int64)
    return out
