"""Exact mesh Boolean (union / difference) against convex primitives.

A BSP-tree clipper in the CSG.js style: both solids are converted to
oriented polygon soups, clipped against each other's trees, and merged.
The four primitives (cuboid, hexagonal prism, octagonal prism, cylinder)
are generated as unit solids and posed by a 9-parameter affine. The
solver runs once, on detached coordinates, at finalization.
"""

from __future__ import annotations

import numpy as np
import torch

from ..mesh import Face, Mesh, MeshError, edge_key
from .transform import _rotation_matrix

EPS = 1e-7          # plane-side classification tolerance
WELD_DECIMALS = 9   # vertex weld grid for BSP output
CYLINDER_SIDES = 32

PRIMITIVES = ("cuboid", "hex_prism", "oct_prism", "cylinder")
BOOLEAN_TYPES = ("union", "difference")

COPLANAR, FRONT, BACK, SPANNING = 0, 1, 2, 3


# -- primitives ---------------------------------------------------------


def _prism(sides: int) -> tuple[list, list]:
    """Regular prism: radius 0.5 in xy, z in [-0.5, 0.5], first vertex
    toward +x. Side quads wound outward, caps close the solid."""
    ang = 2 * np.pi * np.arange(sides) / sides
    ring = np.c_[0.5 * np.cos(ang), 0.5 * np.sin(ang)]
    verts = [(x, y, -0.5) for x, y in ring] + [(x, y, 0.5) for x, y in ring]
    faces = [tuple(range(sides - 1, -1, -1)), tuple(range(sides, 2 * sides))]
    for i in range(sides):
        j = (i + 1) % sides
        faces.append((i, j, sides + j, sides + i))
    return verts, faces


def primitive_mesh(kind: str, scale, translate, rotate) -> Mesh:
    """Posed convex primitive; differentiable in the nine affine values."""
    if kind not in PRIMITIVES:
        raise MeshError(f"unknown primitive kind {kind!r}")
    if kind == "cuboid":
        base = Mesh([(x - 0.5, y - 0.5, z - 0.5)
                     for x, y, z in [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                                     (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]],
                    [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
                     (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)])
    else:
        sides = {"hex_prism": 6, "oct_prism": 8, "cylinder": CYLINDER_SIDES}[kind]
        v, f = _prism(sides)
        base = Mesh(v, f)

    def as_t(x):
        return x if isinstance(x, torch.Tensor) else torch.as_tensor(
            np.asarray(x, dtype=np.float64))

    s, t, r = as_t(scale), as_t(translate), as_t(rotate)
    if (s.detach() <= 0).any():
        raise MeshError("primitive scale components must be positive")
    R = _rotation_matrix(r)
    verts = (base.vertices * s) @ R.T + t
    return base.with_vertices(verts)


# -- BSP solids ---------------------------------------------------------


class _Poly:
    __slots__ = ("verts", "normal", "w")

    def __init__(self, verts, normal=None, w=None):
        self.verts = verts
        if normal is None:
            n = np.cross(verts[1] - verts[0], verts[2] - verts[0])
            ln = np.linalg.norm(n)
            if ln < 1e-14:
                raise MeshError("degenerate polygon in boolean input")
            normal = n / ln
            w = float(normal @ verts[0])
        self.normal = normal
        self.w = w

    def flip(self):
        return _Poly(self.verts[::-1], -self.normal, -self.w)


def _split(plane_n, plane_w, poly, coplanar_front, coplanar_back, front, back):
    types = []
    kinds = 0
    for v in poly.verts:
        d = plane_n @ v - plane_w
        t = COPLANAR if abs(d) < EPS else (FRONT if d > 0 else BACK)
        types.append(t)
        kinds |= t
    if kinds == COPLANAR:
        (coplanar_front if plane_n @ poly.normal > 0 else coplanar_back).append(poly)
    elif kinds == FRONT:
        front.append(poly)
    elif kinds == BACK:
        back.append(poly)
    else:
        f, b = [], []
        n = len(poly.verts)
        for i in range(n):
            j = (i + 1) % n
            ti, tj = types[i], types[j]
            vi, vj = poly.verts[i], poly.verts[j]
            if ti != BACK:
                f.append(vi)
            if ti != FRONT:
                b.append(vi)
            if (ti | tj) == SPANNING:
                t = (plane_w - plane_n @ vi) / (plane_n @ (vj - vi))
                mid = vi + t * (vj - vi)
                f.append(mid)
                b.append(mid)
        if len(f) >= 3:
            front.append(_Poly(f, poly.normal, poly.w))
        if len(b) >= 3:
            back.append(_Poly(b, poly.normal, poly.w))


class _Node:
    __slots__ = ("plane", "front", "back", "polys")

    def __init__(self, polys=None):
        self.plane = None
        self.front = None
        self.back = None
        self.polys = []
        if polys:
            self.build(polys)

    def build(self, polys):
        if not polys:
            return
        if self.plane is None:
            self.plane = (polys[0].normal, polys[0].w)
        pn, pw = self.plane
        front, back = [], []
        for p in polys:
            _split(pn, pw, p, self.polys, self.polys, front, back)
        if front:
            if self.front is None:
                self.front = _Node()
            self.front.build(front)
        if back:
            if self.back is None:
                self.back = _Node()
            self.back.build(back)

    def invert(self):
        self.polys = [p.flip() for p in self.polys]
        if self.plane is not None:
            self.plane = (-self.plane[0], -self.plane[1])
        if self.front is not None:
            self.front.invert()
        if self.back is not None:
            self.back.invert()
        self.front, self.back = self.back, self.front

    def clip_polygons(self, polys):
        if self.plane is None:
            return list(polys)
        pn, pw = self.plane
        front, back = [], []
        for p in polys:
            _split(pn, pw, p, front, back, front, back)
        if self.front is not None:
            front = self.front.clip_polygons(front)
        back = self.back.clip_polygons(back) if self.back is not None else []
        return front + back

    def clip_to(self, other):
        self.polys = other.clip_polygons(self.polys)
        if self.front is not None:
            self.front.clip_to(other)
        if self.back is not None:
            self.back.clip_to(other)

    def all_polygons(self):
        out = list(self.polys)
        if self.front is not None:
            out.extend(self.front.all_polygons())
        if self.back is not None:
            out.extend(self.back.all_polygons())
        return out


def _mesh_polys(mesh: Mesh) -> list[_Poly]:
    """Fan-triangulated polygon soup (triangles are reliably planar)."""
    v = mesh.verts_np
    polys = []
    for _, a, b, c in mesh.fan_triangles:
        tri = [v[a].copy(), v[b].copy(), v[c].copy()]
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        ln = np.linalg.norm(n)
        if ln < 1e-14:
            continue  # zero-area slivers contribute nothing to the solid
        polys.append(_Poly(tri))
    if not polys:
        raise MeshError("boolean operand has no usable faces")
    return polys


def _polys_to_mesh(polys: list[_Poly]) -> Mesh:
    verts: list[np.ndarray] = []
    index: dict[tuple, int] = {}
    faces: list[Face] = []
    for p in polys:
        ids = []
        for pt in p.verts:
            key = tuple(np.round(pt, WELD_DECIMALS))
            i = index.get(key)
            if i is None:
                i = len(verts)
                index[key] = i
                verts.append(pt)
            ids.append(i)
        # welding can collapse consecutive corners
        cyc = [ids[i] for i in range(len(ids)) if ids[i] != ids[(i + 1) % len(ids)]]
        if len(set(cyc)) >= 3 and len(cyc) == len(set(cyc)):
            faces.append(tuple(cyc))
    if not faces:
        raise MeshError("boolean produced an empty solid")
    return Mesh(np.array(verts), faces, validate=False)


def heal_t_junctions(mesh: Mesh, tol: float = 1e-9) -> Mesh:
    """Insert vertices that lie on the interior of other faces' edges, so
    edge incidence counts (and the Euler characteristic) become exact."""
    v = mesh.verts_np
    out_faces: list[Face] = []
    for f in mesh.faces:
        cyc: list[int] = []
        n = len(f)
        for i in range(n):
            a, b = f[i], f[(i + 1) % n]
            pa, pb = v[a], v[b]
            d = pb - pa
            L2 = float(d @ d)
            cyc.append(a)
            if L2 < tol * tol:
                continue
            on_seg = []
            t_all = (v - pa) @ d / L2
            perp = v - pa - np.outer(t_all, d)
            dist2 = (perp ** 2).sum(axis=1)
            cand = np.where((dist2 < tol * tol) & (t_all > 1e-9) & (t_all < 1 - 1e-9))[0]
            for c in cand:
                if c != a and c != b:
                    on_seg.append((float(t_all[c]), int(c)))
            for _, c in sorted(on_seg):
                if cyc[-1] != c:
                    cyc.append(c)
        dedup = [cyc[i] for i in range(len(cyc)) if cyc[i] != cyc[(i + 1) % len(cyc)]]
        out_faces.append(tuple(dedup))
    return Mesh(mesh.vertices, out_faces, validate=False)


def genus(mesh: Mesh) -> int:
    """Genus from the Euler characteristic of a healed closed mesh."""
    m = heal_t_junctions(mesh)
    V = len({i for f in m.faces for i in f})
    E = len({edge_key(f[i], f[(i + 1) % len(f)]) for f in m.faces for i in range(len(f))})
    F = m.num_faces
    return round(1 - (V - E + F) / 2)


def mesh_volume(mesh: Mesh) -> float:
    v = mesh.verts_np
    total = 0.0
    for _, a, b, c in mesh.fan_triangles:
        total += np.linalg.det(np.stack([v[a], v[b], v[c]])) / 6.0
    return float(total)


def boolean_exact(mesh: Mesh, op: str, primitive: str, scale, translate, rotate) -> Mesh:
    """Union or difference of mesh with a posed convex primitive."""
    if op not in BOOLEAN_TYPES:
        raise MeshError(f"boolean type must be one of {BOOLEAN_TYPES}")
    prim = primitive_mesh(primitive, scale, translate, rotate)
    a = _Node(_mesh_polys(mesh))
    b = _Node(_mesh_polys(prim))
    if op == "union":
        a.clip_to(b)
        b.clip_to(a)
        b.invert()
        b.clip_to(a)
        b.invert()
        a.build(b.all_polygons())
    else:  # difference = ~(~A | B)
        a.invert()
        a.clip_to(b)
        b.clip_to(a)
        b.invert()
        b.clip_to(a)
        b.invert()
        a.build(b.all_polygons())
        a.invert()
    # BSP clipping leaves T-junctions where split edges meet unsplit
    # faces; heal them so the result is watertight (edge incidence and
    # the Euler characteristic are what downstream checks rely on)
    return heal_t_junctions(_polys_to_mesh(a.all_polygons()))
