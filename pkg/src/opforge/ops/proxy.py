"""Movable extrude proxy: a conformal 2D chart of the input surface plus
an octagonal sub-mesh whose base slides across the chart.

The chart is built by unfolding the mesh into a disk along a
breadth-first dual spanning tree and flattening it with a least-squares
conformal map. Base vertices are 2D chart coordinates; their 3D
positions come from barycentric interpolation inside the host chart
triangle, so the base can cross face boundaries with smooth gradients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.sparse import coo_matrix, hstack, vstack
from scipy.sparse.linalg import lsqr

from ..autodiff import ParamHandle
from ..mesh import Mesh, MeshError, edge_key
from .extrude import _axis_rotation, _tangent_frame

BASE_SIDES = 8


def cross2d(p, q) -> float:
    return float(p[0] * q[1] - p[1] * q[0])
DEFAULT_DIAMETER = 0.15
FOLD_TOLERANCE = 0.05  # flipped chart area fraction treated as failure


@dataclass
class ChartTri:
    uv: np.ndarray        # (3, 2) chart coordinates
    vids: tuple[int, int, int]   # source 3D vertex ids
    face_id: int


@dataclass
class Chart:
    tris: list[ChartTri]
    face_uv_tris: dict[int, list[int]]  # face id -> indices into tris

    def bbox(self):
        pts = np.concatenate([t.uv for t in self.tris])
        return pts.min(axis=0), pts.max(axis=0)


def _dual_tree_cut(mesh: Mesh):
    """Unfold the mesh into a disk: faces glued only along BFS dual
    spanning-tree edges, every other shared vertex duplicated."""
    ef = mesh.edge_faces
    adj: dict[int, list[tuple[int, tuple]]] = {fi: [] for fi in range(mesh.num_faces)}
    for e, fs in ef.items():
        if len(fs) == 2:
            a, b = fs
            adj[a].append((b, e))
            adj[b].append((a, e))
    for lst in adj.values():
        lst.sort()

    cut_of: list[dict[int, int]] = [dict() for _ in range(mesh.num_faces)]
    cut_orig: list[int] = []

    def assign(fi, vid):
        cut_of[fi][vid] = len(cut_orig)
        cut_orig.append(vid)

    visited = [False] * mesh.num_faces
    order = []
    queue = [0]
    visited[0] = True
    for vid in mesh.faces[0]:
        assign(0, vid)
    while queue:
        fi = queue.pop(0)
        order.append(fi)
        for g, e in adj[fi]:
            if visited[g]:
                continue
            visited[g] = True
            for vid in e:
                cut_of[g][vid] = cut_of[fi][vid]
            for vid in mesh.faces[g]:
                if vid not in cut_of[g]:
                    assign(g, vid)
            queue.append(g)
    if not all(visited):
        raise MeshError("mesh must be connected for chart construction")
    pos = mesh.verts_np[cut_orig]
    cut_faces = [tuple(cut_of[fi][v] for v in mesh.faces[fi]) for fi in range(mesh.num_faces)]
    return pos, cut_faces


def _lscm(pos: np.ndarray, tris: list[tuple[int, int, int]]) -> np.ndarray:
    """Least-squares conformal flattening with two pinned vertices."""
    n = len(pos)
    rows, cols, re, im = [], [], [], []
    for ti, (i, j, k) in enumerate(tris):
        e1 = pos[j] - pos[i]
        l1 = np.linalg.norm(e1)
        if l1 < 1e-14:
            continue
        x_dir = e1 / l1
        d = pos[k] - pos[i]
        x2 = d @ x_dir
        y2 = np.linalg.norm(d - x2 * x_dir)
        area = abs(l1 * y2 / 2)
        if area < 1e-16:
            continue
        s = np.sqrt(area)
        w = [((x2 - l1), y2), ((0.0 - x2), -y2), ((l1 - 0.0), 0.0)]
        for (wr, wi), vid in zip(w, (i, j, k)):
            rows.append(ti)
            cols.append(vid)
            re.append(wr / s)
            im.append(wi / s)
    nt = len(tris)
    Mr = coo_matrix((re, (rows, cols)), shape=(nt, n)).tocsc()
    Mi = coo_matrix((im, (rows, cols)), shape=(nt, n)).tocsc()

    # pin the first vertex and the one farthest from it
    p0 = 0
    p1 = int(np.argmax(((pos - pos[p0]) ** 2).sum(axis=1)))
    pins = sorted({p0, p1})
    if len(pins) < 2:
        raise MeshError("chart needs two distinct pin vertices")
    free = np.array([v for v in range(n) if v not in pins])
    pin_uv = np.array([[0.0, 0.0], [1.0, 0.0]])

    Mfr, Mfi = Mr[:, free], Mi[:, free]
    Mpr, Mpi = Mr[:, pins], Mi[:, pins]
    A = vstack([hstack([Mfr, -Mfi]), hstack([Mfi, Mfr])]).tocsr()
    B = vstack([hstack([Mpr, -Mpi]), hstack([Mpi, Mpr])]).tocsr()
    b = -B @ pin_uv.T.flatten()
    sol = lsqr(A, b, atol=1e-14, btol=1e-14, iter_lim=20000)[0]
    uv = np.zeros((n, 2))
    nf = len(free)
    uv[free, 0] = sol[:nf]
    uv[free, 1] = sol[nf:]
    uv[pins] = pin_uv
    return uv


def build_chart(mesh: Mesh) -> Chart:
    """Flatten the mesh to a normalized 2D chart; raises on fold-over."""
    pos, cut_faces = _dual_tree_cut(mesh)
    areas = mesh.face_areas

    tris3: list[tuple[int, int, int]] = []
    tri_meta: list[tuple[tuple[int, int, int], int]] = []  # (orig vids, face id)
    for fi, (cf, of) in enumerate(zip(cut_faces, mesh.faces)):
        if areas[fi] < 1e-12:
            warnings.warn(f"face {fi} has zero area; excluded from chart")
            continue
        k = of.index(min(of))
        rot_c = cf[k:] + cf[:k]
        rot_o = of[k:] + of[:k]
        for i in range(1, len(rot_c) - 1):
            tris3.append((rot_c[0], rot_c[i], rot_c[i + 1]))
            tri_meta.append(((rot_o[0], rot_o[i], rot_o[i + 1]), fi))
    if not tris3:
        raise MeshError("no usable faces for chart construction")

    uv = _lscm(pos, tris3)

    # fold-over check on signed areas
    signed = np.array([
        cross2d(uv[b] - uv[a], uv[c] - uv[a]) / 2 for a, b, c in tris3
    ])
    dominant = 1.0 if signed.sum() >= 0 else -1.0
    flipped = np.abs(signed[np.sign(signed) == -dominant]).sum()
    total = np.abs(signed).sum()
    if total < 1e-14 or flipped / total > FOLD_TOLERANCE:
        raise MeshError("chart parameterization failed (fold-over beyond tolerance)")

    # normalize: bbox diagonal = 1
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    uv = (uv - lo) / diag

    tris = []
    face_uv_tris: dict[int, list[int]] = {}
    for (a, b, c), (vids, fi) in zip(tris3, tri_meta):
        face_uv_tris.setdefault(fi, []).append(len(tris))
        tris.append(ChartTri(uv=uv[[a, b, c]].copy(), vids=vids, face_id=fi))
    return Chart(tris=tris, face_uv_tris=face_uv_tris)


@dataclass
class ExtrudeProxy:
    chart: Chart
    mesh: Mesh
    uv: ParamHandle                 # (8, 2) base chart coordinates
    h: ParamHandle
    w: ParamHandle
    angles: ParamHandle             # (2,)
    beta_logit: ParamHandle
    outside_flag: bool = False

    def handles(self) -> list[ParamHandle]:
        return [self.uv, self.h, self.w, self.angles, self.beta_logit]

    @property
    def beta(self) -> torch.Tensor:
        return torch.sigmoid(self.beta_logit.tensor)

    def base_points(self):
        """3D base ring with chart-coordinate gradients, plus host faces."""
        pts, hosts = [], []
        for j in range(self.uv.tensor.shape[0]):
            fid, p, _ = proxy_locate(self, self.uv.tensor[j])
            pts.append(p)
            hosts.append(fid)
        return torch.stack(pts), hosts

    def prism(self) -> Mesh:
        """Closed octagonal prism: base ring on the surface, top ring
        displaced h along the average host normal, scaled by w and tilted
        by the two angles. Top face id is 1, matching extrude semantics."""
        base, hosts = self.base_points()
        c = base.mean(dim=0)
        n = torch.zeros(3, dtype=torch.float64)
        normals = self.mesh.face_normals_np
        for fid in hosts:
            n = n + torch.as_tensor(normals[fid])
        ln = torch.linalg.norm(n)
        if float(ln) < 1e-12:
            n = torch.tensor([0.0, 0.0, 1.0])
        else:
            n = n / ln
        n = n.detach()
        t1, t2 = _tangent_frame(n)
        off = base - c
        off_n = (off @ n)[:, None] * n
        off_t = off - off_n
        placed = self.w.tensor * off_t + off_n
        ang = self.angles.tensor
        R = _axis_rotation(t2, ang[1]) @ _axis_rotation(t1, ang[0])
        top = c + placed @ R.T + self.h.tensor * n
        k = base.shape[0]
        verts = torch.cat([base, top])
        faces = [tuple(range(k - 1, -1, -1)), tuple(range(k, 2 * k))]
        for i in range(k):
            j = (i + 1) % k
            faces.append((i, j, k + j, k + i))
        out = Mesh(verts, faces, validate=False)
        out.top_faces = (1,)
        return out


def proxy_locate(proxy: ExtrudeProxy, u: torch.Tensor):
    """Host triangle + 3D position for a chart coordinate.

    The host is found by signed edge tests on detached coordinates; the
    barycentric weights are recomputed differentiably, and 3D vertices
    enter as constants so gradients flow only through the weights.
    """
    u_np = u.detach().cpu().numpy()
    host = None
    for ti, tri in enumerate(proxy.chart.tris):
        a, b, c = tri.uv
        s = cross2d(b - a, c - a)
        if abs(s) < 1e-16:
            continue
        inside = True
        for i in range(3):
            p, q = tri.uv[i], tri.uv[(i + 1) % 3]
            if np.sign(s) * cross2d(u_np - p, q - p) > 1e-12:
                inside = False
                break
        if inside:
            host = ti
            break
    if host is None:
        proxy.outside_flag = True
        cents = np.array([t.uv.mean(axis=0) for t in proxy.chart.tris])
        host = int(np.argmin(((cents - u_np) ** 2).sum(axis=1)))
        u = torch.as_tensor(cents[host])  # projected; no gradient path
    tri = proxy.chart.tris[host]
    a, b, c = (torch.as_tensor(x) for x in tri.uv)

    def cross2(p, q):
        return p[0] * q[1] - p[1] * q[0]

    total = cross2(b - a, c - a)
    w0 = cross2(b - u, c - u) / total
    w1 = cross2(c - u, a - u) / total
    w2 = cross2(a - u, b - u) / total
    v = proxy.mesh.vertices.detach()
    p3 = w0 * v[tri.vids[0]] + w1 * v[tri.vids[1]] + w2 * v[tri.vids[2]]
    return tri.face_id, p3, torch.stack([w0, w1, w2])


def proxy_init(mesh: Mesh, center=None, diameter: float = DEFAULT_DIAMETER,
               seed: int = 0) -> ExtrudeProxy:
    """Build the chart and place a regular octagonal base on it.

    center is a chart coordinate; when omitted the base sits at the
    chart's densest region (mean of triangle centroids). Callers doing
    restarts pass their own centers.
    """
    chart = build_chart(mesh)
    if center is None:
        cents = np.array([t.uv.mean(axis=0) for t in chart.tris])
        center = cents.mean(axis=0)
    center = np.asarray(center, dtype=np.float64)
    ang = 2 * np.pi * (np.arange(BASE_SIDES) + 0.5) / BASE_SIDES
    ring = center + 0.5 * diameter * np.c_[np.cos(ang), np.sin(ang)]
    uv = ParamHandle("proxy_uv", ring, role="uv")
    h = ParamHandle("proxy_h", 0.1)
    w = ParamHandle("proxy_w", 1.0, lower=1e-3)
    angles = ParamHandle("proxy_angles", np.zeros(2))
    beta = ParamHandle("proxy_beta", -2.0, role="boolean")
    return ExtrudeProxy(chart=chart, mesh=mesh, uv=uv, h=h, w=w,
                        angles=angles, beta_logit=beta)


def proxy_candidates(proxy: ExtrudeProxy, mesh: Mesh) -> list[tuple[int, ...]]:
    """Faces covered by the base polygon, plus every connected
    combination of them; deterministic order, deduplicated."""
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    base_uv = proxy.uv.tensor.detach().cpu().numpy()
    base = Polygon(base_uv)
    if not base.is_valid:
        base = base.convex_hull
    if base.area < 1e-16:
        base = base.buffer(1e-6)

    covered = []
    for fi in sorted(proxy.chart.face_uv_tris):
        polys = []
        for ti in proxy.chart.face_uv_tris[fi]:
            t = Polygon(proxy.chart.tris[ti].uv)
            if t.is_valid and t.area > 0:
                polys.append(t)
        if not polys:
            continue
        img = unary_union(polys)
        inter = base.intersection(img).area
        if inter > 0.01 * min(base.area, img.area):
            covered.append(fi)

    if not covered:
        warnings.warn("proxy base covers no face; using the face under its centroid")
        cen = torch.as_tensor(base_uv.mean(axis=0))
        fid, _, _ = proxy_locate(proxy, cen)
        return [(fid,)]

    # connected subsets via shared mesh edges
    cov = set(covered)
    nbrs = {fi: set() for fi in cov}
    for e, fs in mesh.edge_faces.items():
        if len(fs) == 2 and fs[0] in cov and fs[1] in cov:
            nbrs[fs[0]].add(fs[1])
            nbrs[fs[1]].add(fs[0])

    found: set[tuple[int, ...]] = set()

    def grow(subset: frozenset):
        key = tuple(sorted(subset))
        if key in found:
            return
        found.add(key)
        frontier = set().union(*(nbrs[f] for f in subset)) - subset
        for f in sorted(frontier):
            grow(subset | {f})

    if len(cov) <= 12:
        for fi in covered:
            grow(frozenset([fi]))
    else:
        found.update((fi,) for fi in covered)
        found.add(tuple(sorted(cov)))
    return sorted(found, key=lambda t: (len(t), t))
