import numpy as np
import pytest
import torch

from opforge.mesh import MeshError, edge_key, sample_surface, unit_cube
from opforge.ops.bevel import _arc_frame, _arc_points, bevel

TOP_FRONT = edge_key(4, 5)  # between the z=1 and y=0 faces of the unit cube


@pytest.fixture
def cube():
    return unit_cube()


def random_dihedral(rng):
    """Unit edge frame plus two in-plane directions at a random angle."""
    e = rng.standard_normal(3)
    e /= np.linalg.norm(e)
    t = np.cross(e, rng.standard_normal(3))
    t /= np.linalg.norm(t)
    s = np.cross(e, t)
    ang = rng.uniform(0.2, np.pi - 0.2)
    d1 = torch.as_tensor(t)
    d2 = torch.as_tensor(np.cos(ang) * t + np.sin(ang) * s)
    v0 = torch.as_tensor(rng.standard_normal(3))
    w = torch.as_tensor(rng.uniform(0.05, 1.0))
    return v0, d1, d2, w


def test_arc_endpoints_and_radius_100_configs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        v0, d1, d2, w = random_dihedral(rng)
        pts = _arc_points(v0, d1, d2, w, 5)
        v1 = v0 + w * d1
        v2 = v0 + w * d2
        assert float(torch.linalg.norm(pts[0] - v1)) <= 1e-9
        assert float(torch.linalg.norm(pts[-1] - v2)) <= 1e-9
        frame = _arc_frame(v0, d1, d2, w)
        assert frame is not None
        o, r, *_ = frame
        for p in pts:
            assert abs(float(torch.linalg.norm(p - o)) - float(r)) <= 1e-9


def test_arc_uniform_angular_steps():
    rng = np.random.default_rng(12)
    v0, d1, d2, w = random_dihedral(rng)
    pts = _arc_points(v0, d1, d2, w, 7)
    chords = [float(torch.linalg.norm(pts[i + 1] - pts[i])) for i in range(7)]
    assert np.allclose(chords, chords[0], atol=1e-12)


def test_cube_edge_counts_and_euler(cube):
    for k in (1, 2, 5, 9):
        out = bevel(cube, [TOP_FRONT], 0.2, k)
        assert out.num_vertices == 2 * k + 8
        assert out.num_faces == 6 + k
        assert out.num_vertices - len(out.edges) + out.num_faces == 2


def test_cube_interior_point_on_bisecting_plane(cube):
    # 90 degree dihedral between z=1 and y=0: the bisecting plane
    # satisfies y = 1 - z along the beveled corner
    out = bevel(cube, [TOP_FRONT], 0.2, 2)
    mid = out.verts_np[-2 * 3 + 1::3]  # one interior point per endpoint arc
    arcs = out.verts_np[-6:]  # two arcs of 3 points each
    for arc in (arcs[:3], arcs[3:]):
        interior = arc[1]
        assert interior[1] == pytest.approx(1.0 - interior[2], abs=1e-12)


def test_cube_arc_points_on_cylinder(cube):
    w = 0.3
    out = bevel(cube, [TOP_FRONT], w, 5)
    arcs = out.verts_np[8 - 2:]  # 12 arc points appended after 6 survivors
    # arc center line: y = w, z = 1 - w
    d = np.sqrt((arcs[:, 1] - w) ** 2 + (arcs[:, 2] - (1 - w)) ** 2)
    assert np.allclose(d, w, atol=1e-12)


def test_zero_width_geometry_unchanged(cube):
    # identity up to duplicated-vertex welding: same position set, same area
    out = bevel(cube, [TOP_FRONT], 0.0, 3)
    welded = np.unique(np.round(out.verts_np, 12), axis=0)
    orig = np.unique(cube.verts_np, axis=0)
    assert np.array_equal(welded, orig)
    assert out.face_areas.sum() == pytest.approx(cube.face_areas.sum(), abs=1e-12)


def test_width_gradient_finite_diff(cube):
    from opforge.autodiff import ParamHandle, finite_diff_check
    w = ParamHandle("w", 0.15)

    def loss():
        return bevel(cube, [TOP_FRONT], w.tensor, 4).vertices.pow(2).sum()

    assert finite_diff_check(loss, [w]) < 1e-5


def test_width_clamped_flag(cube):
    out = bevel(cube, [TOP_FRONT], 5.0, 3)
    assert out.bevel_clamped
    assert out.verts_np.min() >= -1e-9  # offsets stayed inside the cube
    small = bevel(cube, [TOP_FRONT], 0.1, 3)
    assert not small.bevel_clamped


def test_two_disjoint_edges(cube):
    other = edge_key(3, 7)  # shares no endpoint with (4,5) and no face corner arcs collide
    out = bevel(cube, [TOP_FRONT, other], 0.1, 2)
    assert out.num_vertices == 8 - 4 + 4 * 3
    assert out.num_faces == 6 + 2 * 2


def test_invalid_selections(cube):
    with pytest.raises(MeshError, match="endpoint"):
        bevel(cube, [edge_key(4, 5), edge_key(5, 6)], 0.1, 2)
    with pytest.raises(MeshError, match="segment"):
        bevel(cube, [TOP_FRONT], 0.1, 0)
    with pytest.raises(MeshError, match="segment"):
        bevel(cube, [TOP_FRONT], 0.1, 10)
    with pytest.raises(MeshError, match="nonnegative"):
        bevel(cube, [TOP_FRONT], -0.1, 2)
    with pytest.raises(MeshError, match="not in mesh"):
        bevel(cube, [edge_key(0, 6)], 0.1, 2)
    with pytest.raises(MeshError, match="empty"):
        bevel(cube, [], 0.1, 2)


def test_coplanar_fallback_straight():
    # two coplanar quads: beveling their shared edge degenerates to a cut
    from opforge.mesh import Mesh
    m = Mesh(
        [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (2, 0, 0), (2, 1, 0)],
        [(0, 1, 2, 3), (1, 4, 5, 2)],
    )
    out = bevel(m, [edge_key(1, 2)], 0.2, 3)
    assert np.allclose(out.verts_np[:, 2], 0.0, atol=1e-12)
