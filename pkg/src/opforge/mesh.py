"""Quad-dominant polygon mesh, point clouds, topology queries and OBJ I/O.

Vertices live in a torch double tensor so positions can be differentiable
functions of upstream parameters; faces are plain index tuples. A Mesh is
treated as an immutable value: every operation returns a new Mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import torch

Face = tuple[int, ...]
Edge = tuple[int, int]


class MeshError(ValueError):
    pass


def edge_key(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


def _as_vertex_tensor(vertices) -> torch.Tensor:
    if isinstance(vertices, torch.Tensor):
        t = vertices.to(torch.float64)
    else:
        t = torch.as_tensor(np.asarray(vertices, dtype=np.float64))
    if t.ndim != 2 or t.shape[1] != 3:
        raise MeshError(f"vertices must be (V, 3), got {tuple(t.shape)}")
    return t


class Mesh:
    """Indexed polygon mesh (quads preferred, triangles permitted)."""

    def __init__(self, vertices, faces, validate: bool = True):
        self.vertices = _as_vertex_tensor(vertices)
        if isinstance(faces, tuple) and (
                not faces or (type(faces[0]) is tuple and type(faces[0][0]) is int)):
            self.faces: tuple[Face, ...] = faces   # already canonical
        else:
            self.faces = tuple(tuple(int(i) for i in f) for f in faces)
        if validate:
            self._validate()

    def _validate(self):
        nv = self.num_vertices
        if not torch.isfinite(self.vertices).all():
            raise MeshError("non-finite vertex coordinate")
        for fi, f in enumerate(self.faces):
            if len(f) < 3:
                raise MeshError(f"face {fi} has fewer than 3 vertices")
            if len(set(f)) != len(f):
                raise MeshError(f"face {fi} repeats a vertex")
            for i in f:
                if i < 0 or i >= nv:
                    raise MeshError(f"face {fi}: vertex index {i} out of range (V={nv})")

    # -- basic accessors ------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def verts_np(self) -> np.ndarray:
        return self.vertices.detach().cpu().numpy()

    @cached_property
    def edge_faces(self) -> dict[Edge, list[int]]:
        """Map undirected edge -> ids of incident faces (face order)."""
        out: dict[Edge, list[int]] = {}
        for fi, f in enumerate(self.faces):
            n = len(f)
            for i in range(n):
                out.setdefault(edge_key(f[i], f[(i + 1) % n]), []).append(fi)
        return out

    @cached_property
    def vertex_faces(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for fi, f in enumerate(self.faces):
            for v in f:
                out[v].append(fi)
        return out

    @cached_property
    def vertex_edges(self) -> list[list[Edge]]:
        out: list[list[Edge]] = [[] for _ in range(self.num_vertices)]
        for e in self.edge_faces:
            out[e[0]].append(e)
            out[e[1]].append(e)
        for lst in out:
            lst.sort()
        return out

    @cached_property
    def edges(self) -> list[Edge]:
        return sorted(self.edge_faces)

    @cached_property
    def boundary_edges(self) -> set[Edge]:
        return {e for e, fs in self.edge_faces.items() if len(fs) == 1}

    def is_manifold(self) -> bool:
        return all(len(fs) <= 2 for fs in self.edge_faces.values())

    # -- geometry -------------------------------------------------------

    @property
    def fan_triangles(self) -> list[tuple[int, int, int, int]]:
        """Fan triangulation (face_id, a, b, c), anchored at each face's
        lowest vertex index. Used for areas and sampling only."""
        return _fan_triangles(self.faces)[0]

    def face_normals_t(self) -> torch.Tensor:
        """Per-face area-weighted normals (not normalized), differentiable."""
        v = self.vertices
        normals = []
        for f in self.faces:
            idx = torch.tensor(f, dtype=torch.long)
            pts = v.index_select(0, idx)
            c = pts.mean(dim=0)
            n = torch.zeros(3, dtype=torch.float64)
            k = len(f)
            for i in range(k):
                n = n + torch.linalg.cross(pts[i] - c, pts[(i + 1) % k] - c)
            normals.append(0.5 * n)
        return torch.stack(normals)

    @cached_property
    def face_areas(self) -> np.ndarray:
        v = self.verts_np
        _, tris, fids = _fan_triangles(self.faces)
        if len(tris) == 0:
            return np.zeros(self.num_faces)
        cr = np.cross(v[tris[:, 1]] - v[tris[:, 0]], v[tris[:, 2]] - v[tris[:, 0]])
        ta = 0.5 * np.linalg.norm(cr, axis=1)
        areas = np.zeros(self.num_faces)
        np.add.at(areas, fids, ta)
        return areas

    @cached_property
    def face_normals_np(self) -> np.ndarray:
        n = self.face_normals_t().detach().cpu().numpy()
        lens = np.linalg.norm(n, axis=1)
        lens[lens < 1e-300] = 1.0
        return n / lens[:, None]

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.verts_np
        return v.min(axis=0), v.max(axis=0)

    def with_vertices(self, vertices) -> "Mesh":
        return Mesh(vertices, self.faces, validate=False)


def unit_cube() -> Mesh:
    """Axis-aligned unit cube on [0,1]^3, 8 vertices / 6 outward quads."""
    verts = [
        (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
    ]
    faces = [
        (0, 3, 2, 1),  # bottom (z=0)
        (4, 5, 6, 7),  # top (z=1)
        (0, 1, 5, 4),  # y=0
        (1, 2, 6, 5),  # x=1
        (2, 3, 7, 6),  # y=1
        (3, 0, 4, 7),  # x=0
    ]
    return Mesh(verts, faces)


# -- point clouds ------------------------------------------------------


@dataclass
class PointCloud:
    points: torch.Tensor                       # (N, 3) double
    normals: np.ndarray | None = None          # (N, 3) unit
    face_ids: np.ndarray | None = None         # (N,) host face id
    tri_corners: np.ndarray | None = None      # (N, 3) vertex ids of host triangle
    barycentric: np.ndarray | None = None      # (N, 3) nonneg, sums to 1
    weights: torch.Tensor | None = None        # (N,) in [0, 1]

    def __post_init__(self):
        self.points = _as_vertex_tensor(self.points)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64)
            lens = np.linalg.norm(self.normals, axis=1)
            if len(lens) and np.abs(lens - 1.0).max() > 1e-9:
                raise MeshError("point cloud normals must have unit length")
        if self.barycentric is not None:
            b = np.asarray(self.barycentric, dtype=np.float64)
            if (b < -1e-12).any() or np.abs(b.sum(axis=1) - 1.0).max() > 1e-9:
                raise MeshError("barycentric triples must be nonnegative and sum to 1")
            self.barycentric = b

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def points_np(self) -> np.ndarray:
        return self.points.detach().cpu().numpy()


# -- surface sampling --------------------------------------------------


@lru_cache(maxsize=512)
def _fan_triangles(faces: tuple[Face, ...]):
    """Fan triangulation plus flat index arrays, cached per face tuple
    (subdivision/extrusion topologies repeat across iterations)."""
    tris = []
    for fi, f in enumerate(faces):
        k = f.index(min(f))
        rot = f[k:] + f[:k]
        for i in range(1, len(rot) - 1):
            tris.append((fi, rot[0], rot[i], rot[i + 1]))
    tri_idx = np.array([(a, b, c) for _, a, b, c in tris], dtype=np.int64)
    fids = np.array([fid for fid, *_ in tris], dtype=np.int64)
    return tris, tri_idx, fids


def _allocate_counts(areas: np.ndarray, count: int) -> np.ndarray:
    """Stratified allocation proportional to area, deterministic remainder."""
    total = areas.sum()
    raw = areas / total * count
    counts = np.floor(raw).astype(np.int64)
    short = count - counts.sum()
    if short > 0:
        frac = raw - counts
        order = np.lexsort((np.arange(len(areas)), -frac))
        counts[order[:short]] += 1
    return counts


def sample_surface(mesh: Mesh, count: int, seed: int) -> PointCloud:
    """Area-weighted surface samples with differentiable provenance.

    Each point is an affine (barycentric) combination of its host
    triangle's vertices, so gradients flow to mesh vertices. Deterministic
    for a fixed seed (counter-based Philox draw).
    """
    if count < 1:
        raise MeshError("count must be >= 1")
    tris, tri_idx, fids = _fan_triangles(mesh.faces)
    v = mesh.verts_np
    cr = np.cross(v[tri_idx[:, 1]] - v[tri_idx[:, 0]], v[tri_idx[:, 2]] - v[tri_idx[:, 0]])
    areas = 0.5 * np.linalg.norm(cr, axis=1)
    if areas.sum() < 1e-12:
        raise MeshError("degenerate mesh: total surface area below 1e-12")
    counts = _allocate_counts(areas, count)

    rng = np.random.Generator(np.random.Philox(key=seed))
    uv = rng.random((count, 2))
    # fold the unit square onto the barycentric triangle
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    w = np.column_stack([1.0 - uv.sum(axis=1), uv[:, 0], uv[:, 1]])

    host = np.repeat(np.arange(len(tris)), counts)
    corners = tri_idx[host]
    bary = w
    pts = torch.einsum(
        "ni,nij->nj",
        torch.as_tensor(bary),
        mesh.vertices[torch.as_tensor(corners, dtype=torch.long)],
    )
    tri_n = cr / np.maximum(np.linalg.norm(cr, axis=1), 1e-300)[:, None]
    return PointCloud(
        points=pts,
        normals=tri_n[host],
        face_ids=fids[host],
        tri_corners=corners,
        barycentric=bary,
    )


def sample_faces(mesh: Mesh, face_ids, count: int, seed: int) -> PointCloud:
    """Sample only the given face subset (used for residual clouds)."""
    keep = set(int(f) for f in face_ids)
    sub_faces = [mesh.faces[f] for f in sorted(keep)]
    sub = Mesh(mesh.vertices, sub_faces, validate=False)
    pc = sample_surface(sub, count, seed)
    remap = np.array(sorted(keep), dtype=np.int64)
    pc.face_ids = remap[pc.face_ids]
    return pc


# -- OBJ / XYZ I/O -----------------------------------------------------


def load_obj(path: str) -> Mesh:
    verts: list[tuple[float, float, float]] = []
    faces: list[Face] = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                try:
                    x, y, z = (float(p) for p in parts[1:4])
                except (ValueError, IndexError):
                    raise MeshError(f"{path}:{ln}: malformed vertex record")
                if not all(math.isfinite(c) for c in (x, y, z)):
                    raise MeshError(f"{path}:{ln}: non-finite coordinate")
                verts.append((x, y, z))
            elif parts[0] == "f":
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError:
                    raise MeshError(f"{path}:{ln}: malformed face record")
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                if any(i < 0 or i >= len(verts) for i in idx):
                    raise MeshError(f"{path}:{ln}: face index out of range")
                faces.append(tuple(idx))
    try:
        return Mesh(verts, faces)
    except MeshError as e:
        raise MeshError(f"{path}: {e}")


def save_obj(mesh: Mesh, path: str) -> None:
    """Deterministic byte output: vertices then faces, 9 significant digits."""
    lines = []
    for x, y, z in mesh.verts_np:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for f in mesh.faces:
        lines.append("f " + " ".join(str(i + 1) for i in f))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_xyz(path: str) -> PointCloud:
    """Whitespace-separated XYZ[+NXNYNZ] text."""
    data = []
    with open(path, "r") as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise MeshError(f"{path}:{ln}: malformed point record")
            if len(vals) not in (3, 6):
                raise MeshError(f"{path}:{ln}: expected 3 or 6 columns")
            data.append(vals)
    if not data:
        raise MeshError(f"{path}: empty point cloud")
    arr = np.array(data)
    normals = None
    if arr.shape[1] == 6:
        normals = arr[:, 3:6]
        lens = np.maximum(np.linalg.norm(normals, axis=1), 1e-300)
        normals = normals / lens[:, None]
    return PointCloud(points=arr[:, :3], normals=normals)


def save_xyz(pc: PointCloud, path: str) -> None:
    lines = []
    pts = pc.points_np
    for i in range(len(pc)):
        row = f"{pts[i, 0]:.9g} {pts[i, 1]:.9g} {pts[i, 2]:.9g}"
        if pc.normals is not None:
            n = pc.normals[i]
            row += f" {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}"
        lines.append(row)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- edge rings and loops ----------------------------------------------


def _opposite_edge(face: Face, e: Edge) -> Edge | None:
    """Opposite edge of a quad; None for non-quads."""
    if len(face) != 4:
        return None
    n = 4
    for i in range(n):
        if edge_key(face[i], face[(i + 1) % n]) == e:
            return edge_key(face[(i + 2) % n], face[(i + 3) % n])
    return None


def edge_rings(mesh: Mesh) -> list[list[Edge]]:
    """Maximal edge rings: walks across opposite sides of quads.

    A ring is closed, or terminates at a boundary or non-quad face.
    """
    ef = mesh.edge_faces
    rings: list[list[Edge]] = []
    visited: set[Edge] = set()

    def walk(start: Edge, fid: int) -> tuple[list[Edge], bool]:
        """Walk from start across face fid; returns (edges, closed)."""
        seq = [start]
        e, f = start, fid
        while True:
            opp = _opposite_edge(mesh.faces[f], e)
            if opp is None:
                return seq, False
            if opp == seq[0] and len(seq) > 1:
                return seq, True
            if opp in seq:
                return seq, False
            seq.append(opp)
            nxt = [g for g in ef.get(opp, []) if g != f]
            if len(nxt) != 1:
                return seq, False
            e, f = opp, nxt[0]

    for e in mesh.edges:
        if e in visited:
            continue
        fs = ef[e]
        quad_fs = [f for f in fs if len(mesh.faces[f]) == 4]
        if not quad_fs:
            continue
        fwd, closed = walk(e, quad_fs[0])
        if closed:
            ring = fwd
        else:
            ring = fwd
            if len(quad_fs) > 1:
                back, _ = walk(e, quad_fs[1])
                ring = list(reversed(back[1:])) + fwd
        if len(ring) < 2:
            continue
        if visited.intersection(ring):
            continue
        visited.update(ring)
        rings.append(ring)
    return rings


def edge_loops(mesh: Mesh) -> list[list[Edge]]:
    """Maximal edge loops via shared-vertex continuation.

    At an interior degree-4 vertex the walk crosses to the unique edge
    sharing no face with the incoming edge; at degree-3 corners it hugs
    the face shared with the previous step; boundary edges continue along
    the boundary.
    """
    ef = mesh.edge_faces
    ve = mesh.vertex_edges

    def faces_of(e: Edge) -> set[int]:
        return set(ef.get(e, ()))

    def step(e: Edge, v: int, hug: int | None) -> tuple[Edge, int | None] | None:
        cand = [c for c in ve[v] if c != e]
        deg = len(ve[v])
        if e in mesh.boundary_edges:
            bnd = [c for c in cand if c in mesh.boundary_edges]
            if len(bnd) == 1:
                return bnd[0], None
            return None
        if deg == 4:
            no_share = [c for c in cand if not (faces_of(c) & faces_of(e))]
            if len(no_share) == 1:
                nxt = no_share[0]
                return nxt, None
            return None
        if deg == 3 and hug is not None:
            keep = [c for c in cand if hug in faces_of(c)]
            if len(keep) == 1:
                return keep[0], hug
        return None

    loops: list[list[Edge]] = []
    seen: set[frozenset] = set()

    def try_walk(start: Edge, v0: int, hug0: int | None):
        seq = [start]
        e, v, hug = start, v0, hug0
        while True:
            res = step(e, v, hug)
            if res is None:
                return None
            nxt, hug = res
            if nxt == seq[0]:
                return seq
            if nxt in seq or len(seq) > 4 * len(mesh.edges):
                return None
            seq.append(nxt)
            # advance to the far endpoint of nxt (nxt contains v)
            v = nxt[0] if nxt[1] == v else nxt[1]
            e = nxt

    for start in mesh.edges:
        for v0 in start:
            hugs: list[int | None] = [None] + list(faces_of(start))
            for hug0 in hugs:
                seq = try_walk(start, v0, hug0)
                if seq and len(seq) >= 3:
                    key = frozenset(seq)
                    if key not in seen:
                        seen.add(key)
                        loops.append(seq)
    return loops


# -- wiring statistics -------------------------------------------------


@dataclass
class WiringStats:
    degree_histogram: dict[int, int]
    degree4_interior_fraction: float
    face_area_variation_mean: float
    face_area_variation_median: float
    quad_fraction: float

    def to_dict(self) -> dict:
        return {
            "degree_histogram": {str(k): v for k, v in sorted(self.degree_histogram.items())},
            "degree4_interior_fraction": self.degree4_interior_fraction,
            "face_area_variation_mean": self.face_area_variation_mean,
            "face_area_variation_median": self.face_area_variation_median,
            "quad_fraction": self.quad_fraction,
        }


def wiring_stats(mesh: Mesh) -> WiringStats:
    degrees = [len(es) for es in mesh.vertex_edges]
    hist: dict[int, int] = {}
    for d in degrees:
        hist[d] = hist.get(d, 0) + 1

    boundary_verts = {v for e in mesh.boundary_edges for v in e}
    interior = [v for v in range(mesh.num_vertices) if v not in boundary_verts]
    if interior:
        frac4 = sum(1 for v in interior if degrees[v] == 4) / len(interior)
    else:
        frac4 = 0.0

    # per face: std of edge-adjacent neighbor areas relative to their mean
    areas = mesh.face_areas
    ef = mesh.edge_faces
    neighbors: list[set[int]] = [set() for _ in range(mesh.num_faces)]
    for fs in ef.values():
        for a in fs:
            for b in fs:
                if a != b:
                    neighbors[a].add(b)
    vals = []
    for fi in range(mesh.num_faces):
        nb = sorted(neighbors[fi])
        if not nb:
            continue
        nb_areas = areas[nb]
        ref = nb_areas.mean()
        if ref < 1e-300:
            continue
        vals.append(float(nb_areas.std() / ref))
    mean_v = float(np.mean(vals)) if vals else 0.0
    med_v = float(np.median(vals)) if vals else 0.0
    quad_frac = (
        sum(1 for f in mesh.faces if len(f) == 4) / mesh.num_faces if mesh.faces else 0.0
    )
    return WiringStats(hist, frac4, mean_v, med_v, quad_frac)


def euler_characteristic(mesh: Mesh) -> int:
    return mesh.num_vertices - len(mesh.edge_faces) + mesh.num_faces


def genus(mesh: Mesh) -> int:
    """Topological genus of a closed orientable surface, from V - E + F.

    Raises MeshError on meshes with boundary, where the characteristic
    alone does not determine the genus.
    """
    if mesh.boundary_edges:
        raise MeshError("genus is defined here only for closed meshes")
    return (2 - euler_characteristic(mesh)) // 2
