import numpy as np
import pytest
import torch

from opforge.mesh import Mesh, MeshError, edge_key, edge_loops, edge_rings, unit_cube
from opforge.ops.cuts import knife_cut, loop_cut
from opforge.ops.transform import (
    edge_loop_affine,
    global_affine,
    mirror,
    simple_deform,
    vertex_displace,
)


@pytest.fixture
def cube():
    return unit_cube()


# -- vertex displace ---------------------------------------------------

def test_displace_zero_identity(cube):
    out = vertex_displace(cube, np.zeros((8, 3)))
    assert np.array_equal(out.verts_np, cube.verts_np)
    assert out.faces == cube.faces


def test_displace_uniform_equals_translate(cube):
    t = np.array([0.3, -0.1, 2.0])
    a = vertex_displace(cube, np.tile(t, (8, 1)))
    b = global_affine(cube, "translate", t)
    assert np.allclose(a.verts_np, b.verts_np, atol=1e-15)


def test_displace_length_mismatch(cube):
    with pytest.raises(MeshError):
        vertex_displace(cube, np.zeros((7, 3)))


def test_displace_gradient_all_ones(cube):
    th = torch.zeros((8, 3), requires_grad=True)
    out = vertex_displace(cube, th)
    g = torch.autograd.grad(out.vertices.sum(), th)[0]
    assert np.array_equal(g.numpy(), np.ones((8, 3)))


# -- global affine -----------------------------------------------------

def test_translate_zero_identity(cube):
    out = global_affine(cube, "translate", [0, 0, 0])
    assert np.allclose(out.verts_np, cube.verts_np)


def test_scale_two(cube):
    out = global_affine(cube, "scale", [2, 2, 2])
    span = out.verts_np.max(axis=0) - out.verts_np.min(axis=0)
    assert np.allclose(span, 2.0)


def test_rotate_roundtrip(cube):
    ang = [0.3, -0.8, 1.1]
    fwd = global_affine(cube, "rotate", ang)
    # inverse of Rz Ry Rx applied via composed single-axis inverse rotations
    back = global_affine(
        global_affine(global_affine(fwd, "rotate", [0, 0, -ang[2]]), "rotate", [0, -ang[1], 0]),
        "rotate", [-ang[0], 0, 0],
    )
    assert np.allclose(back.verts_np, cube.verts_np, atol=1e-9)


def test_zero_scale_rejected(cube):
    with pytest.raises(MeshError):
        global_affine(cube, "scale", [1, 0, 1])


# -- edge loop affine --------------------------------------------------

def top_loop():
    return [edge_key(4, 5), edge_key(5, 6), edge_key(6, 7), edge_key(7, 4)]


def test_loop_scale_identity(cube):
    out = edge_loop_affine(cube, top_loop(), "scale", [1, 1, 1])
    assert np.allclose(out.verts_np, cube.verts_np, atol=1e-15)


def test_loop_scale_frustum(cube):
    out = edge_loop_affine(cube, top_loop(), "scale", [0.5, 0.5, 1])
    top = out.verts_np[4:8]
    span = top.max(axis=0) - top.min(axis=0)
    assert np.allclose(span[:2], 0.5, atol=1e-12)
    # non-loop vertices bitwise unchanged
    assert np.array_equal(out.verts_np[:4], cube.verts_np[:4])


# -- simple deform -----------------------------------------------------

def tall_box():
    cube = unit_cube()
    return global_affine(cube, "scale", [1, 1, 4])


def test_twist_zero_identity(cube):
    out = simple_deform(cube, "twist", 0.0, "z")
    assert np.allclose(out.verts_np, cube.verts_np, atol=1e-12)


def test_twist_full_turn():
    box = tall_box()
    out = simple_deform(box, "twist", 2 * np.pi, "z")
    # top face rotated a full turn relative to bottom: positions match
    top_in = box.verts_np[box.verts_np[:, 2] > 3.9]
    top_out = out.verts_np[out.verts_np[:, 2] > 3.9]
    assert np.allclose(np.sort(top_in, axis=0), np.sort(top_out, axis=0), atol=1e-9)


def test_stretch_taper_identity(cube):
    for mode in ("stretch", "taper"):
        out = simple_deform(cube, mode, 1.0, "y")
        assert np.allclose(out.verts_np, cube.verts_np, atol=1e-12)


def test_bend_gradient_finite_diff():
    from opforge.autodiff import ParamHandle, finite_diff_check
    box = tall_box()
    f = ParamHandle("factor", 0.8)

    def loss():
        return simple_deform(box, "bend", f.tensor, "z").vertices.pow(2).sum()

    assert finite_diff_check(loss, [f]) < 1e-5


# -- mirror ------------------------------------------------------------

def test_mirror_symmetric_idempotent():
    cube = global_affine(unit_cube(), "translate", [-0.5, 0, 0])  # symmetric about x=0
    out = mirror(cube, "x")
    assert out.num_vertices == cube.num_vertices
    assert out.num_faces == cube.num_faces


def test_mirror_off_plane_two_cubes():
    cube = global_affine(unit_cube(), "translate", [2.0, 0, 0])
    out = mirror(cube, "x")
    assert out.num_vertices == 16
    assert out.num_faces == 12


def test_mirror_half_closed_euler():
    # open half box (no x=0 cap), mirrored in x -> closed box, Euler 2
    cube = unit_cube()
    faces = [f for i, f in enumerate(cube.faces) if i != 5]  # drop x=0 face
    half = Mesh(cube.verts_np, faces)
    out = mirror(half, "x")
    V = out.num_vertices
    E = len(out.edges)
    F = out.num_faces
    assert V - E + F == 2


# -- knife / loop cut --------------------------------------------------

def test_knife_unit_quad():
    sq = Mesh([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)], [(0, 1, 2, 3)])
    out = knife_cut(sq, (edge_key(0, 1), edge_key(2, 3)))
    assert out.num_faces == 2
    assert out.num_vertices == 6
    areas = out.face_areas
    assert np.allclose(sorted(areas), [0.5, 0.5], atol=1e-12)


def test_knife_cube_counts(cube):
    out = knife_cut(cube, (edge_key(4, 5), edge_key(6, 7)))
    assert out.num_vertices == 10
    assert out.num_faces == 7
    sizes = sorted(len(f) for f in out.faces)
    assert sizes.count(5) == 2  # two neighbors become pentagons


def test_knife_not_common_face(cube):
    with pytest.raises(MeshError):
        knife_cut(cube, (edge_key(0, 1), edge_key(6, 7)))


def test_knife_twice_changes_topology(cube):
    once = knife_cut(cube, (edge_key(4, 5), edge_key(6, 7)))
    # the same original edge pair no longer bounds a common face
    with pytest.raises(MeshError):
        knife_cut(once, (edge_key(4, 5), edge_key(6, 7)))


def test_loop_cut_cube(cube):
    rings = edge_rings(cube)
    vertical = next(
        r for r in rings
        if all((a < 4) != (b < 4) for a, b in r)  # edges linking bottom to top
    )
    out = loop_cut(cube, vertical)
    assert out.num_vertices == 12
    assert out.num_faces == 10  # 4 side faces become 8
    # new waist loop is discoverable
    new_mids = set(range(8, 12))
    loops = edge_loops(out)
    assert any(set(v for e in l for v in e) == new_mids for l in loops)


def test_loop_cut_invalid(cube):
    with pytest.raises(MeshError):
        loop_cut(cube, [(0, 1)])
