import numpy as np
import pytest
import torch

from opforge.mesh import Mesh, MeshError, unit_cube
from opforge.ops.proxy import (
    build_chart,
    proxy_candidates,
    proxy_init,
    proxy_locate,
)


@pytest.fixture
def cube():
    return unit_cube()


def face_center_uv(chart, fi):
    pts = np.concatenate([chart.tris[ti].uv for ti in chart.face_uv_tris[fi]])
    return pts.mean(axis=0)


def test_chart_cube_has_all_faces(cube):
    chart = build_chart(cube)
    assert sorted(chart.face_uv_tris) == list(range(6))
    from opforge.ops.proxy import cross2d
    total = sum(
        abs(cross2d(t.uv[1] - t.uv[0], t.uv[2] - t.uv[0])) / 2 for t in chart.tris
    )
    assert total > 0
    lo, hi = chart.bbox()
    assert np.linalg.norm(hi - lo) == pytest.approx(1.0, abs=1e-9)


def test_chart_excludes_degenerate_face():
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (1, 0.5, 0)]
    m = Mesh(verts, [(0, 1, 2, 3), (2, 1, 4)])  # triangle (2,1,4) has zero area
    with pytest.warns(UserWarning, match="zero area"):
        chart = build_chart(m)
    assert 1 not in chart.face_uv_tris
    assert 0 in chart.face_uv_tris


def test_chart_disconnected_rejected():
    verts = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
             (5, 0, 0), (6, 0, 0), (6, 1, 0), (5, 1, 0)]
    m = Mesh(verts, [(0, 1, 2, 3), (4, 5, 6, 7)])
    with pytest.raises(MeshError, match="connected"):
        build_chart(m)


def test_base_points_inside_chart(cube):
    proxy = proxy_init(cube)
    proxy.base_points()
    assert not proxy.outside_flag


def test_locate_triangle_centroid(cube):
    proxy = proxy_init(cube)
    tri = proxy.chart.tris[0]
    u = torch.as_tensor(tri.uv.mean(axis=0))
    fid, p, w = proxy_locate(proxy, u)
    assert np.allclose(w.detach().numpy(), [1 / 3] * 3, atol=1e-9)
    expect = cube.verts_np[list(tri.vids)].mean(axis=0)
    assert np.allclose(p.detach().numpy(), expect, atol=1e-9)


def test_locate_chart_vertex_one_hot(cube):
    proxy = proxy_init(cube)
    tri = proxy.chart.tris[0]
    fid, p, w = proxy_locate(proxy, torch.as_tensor(tri.uv[0].copy()))
    assert np.allclose(p.detach().numpy(), cube.verts_np[tri.vids[0]], atol=1e-9)
    wv = np.sort(w.detach().numpy())
    assert np.allclose(wv, [0, 0, 1], atol=1e-9)


def test_locate_gradient_finite_diff(cube):
    proxy = proxy_init(cube)
    tri = proxy.chart.tris[2]
    u0 = tri.uv.mean(axis=0)
    u = torch.tensor(u0, requires_grad=True)
    _, p, _ = proxy_locate(proxy, u)
    g = torch.autograd.grad(p.sum(), u)[0].numpy()
    eps = 1e-6
    num = np.zeros(2)
    for k in range(2):
        up = u0.copy(); up[k] += eps
        um = u0.copy(); um[k] -= eps
        _, pp, _ = proxy_locate(proxy, torch.as_tensor(up))
        _, pm, _ = proxy_locate(proxy, torch.as_tensor(um))
        num[k] = float((pp - pm).sum()) / (2 * eps)
    assert np.abs(g - num).max() / max(1.0, np.abs(num).max()) < 1e-5


def test_locate_outside_flagged(cube):
    proxy = proxy_init(cube)
    assert not proxy.outside_flag
    proxy_locate(proxy, torch.tensor([10.0, 10.0]))
    assert proxy.outside_flag


def test_candidates_single_face(cube):
    chart = build_chart(cube)
    center = face_center_uv(chart, 1)
    proxy = proxy_init(cube, center=center, diameter=0.02)
    cands = proxy_candidates(proxy, cube)
    assert cands == [(1,)]


def test_candidates_connected_combinations(cube):
    proxy = proxy_init(cube, diameter=3.0)  # covers the whole chart
    cands = proxy_candidates(proxy, cube)
    for fi in range(6):
        assert (fi,) in cands
    full = tuple(range(6))
    assert full in cands
    # all candidates are edge-connected sets
    for c in cands:
        if len(c) == 2:
            assert any(
                set(c) == set(fs) for fs in cube.edge_faces.values() if len(fs) == 2
            )


def test_candidates_empty_coverage_flagged(cube):
    proxy = proxy_init(cube, center=[20.0, 20.0], diameter=0.001)
    with pytest.warns(UserWarning, match="covers no face"):
        cands = proxy_candidates(proxy, cube)
    assert len(cands) == 1 and len(cands[0]) == 1


def test_prism_geometry_and_gradients(cube):
    chart = build_chart(cube)
    center = face_center_uv(chart, 1)  # top face (z=1)
    proxy = proxy_init(cube, center=center, diameter=0.05)
    proxy.h.set_value(0.5)
    prism = proxy.prism()
    assert prism.num_vertices == 16
    assert prism.num_faces == 10
    base = prism.verts_np[:8]
    top = prism.verts_np[8:]
    assert np.allclose(base[:, 2], 1.0, atol=1e-9)  # base rides the top face
    assert np.allclose(top[:, 2], 1.5, atol=1e-9)
    # each of the 8 top vertices moves by h along n = (0,0,1)
    g = torch.autograd.grad(prism.vertices.sum(), proxy.h.tensor)[0]
    assert float(g) == pytest.approx(8.0, abs=1e-9)
