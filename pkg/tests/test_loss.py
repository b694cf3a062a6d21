import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from opforge.loss import (
    LossInputError,
    aligned_mask,
    brute_force_chamfer,
    chamfer,
    chamfer_np,
    domain_rule_penalty,
    hinge,
    length_penalty,
    length_penalty_weight,
    reweighted_chamfer,
)
from opforge.mesh import PointCloud, sample_surface, unit_cube


def cloud(arr) -> PointCloud:
    return PointCloud(torch.as_tensor(np.asarray(arr, dtype=np.float64)))


def rand_cloud(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 3))


# -- chamfer against the quadratic oracle ------------------------------

def test_chamfer_matches_brute_force():
    a = rand_cloud(80, 0)
    b = rand_cloud(65, 1)
    got = float(chamfer(cloud(a), cloud(b)))
    assert got == pytest.approx(brute_force_chamfer(a, b), rel=1e-12)
    assert chamfer_np(a, b) == pytest.approx(brute_force_chamfer(a, b), rel=1e-12)


def test_chamfer_identical_zero():
    a = rand_cloud(50, 2)
    assert float(chamfer(cloud(a), cloud(a))) == 0.0


def test_chamfer_known_offset_planes():
    # two parallel unit grids offset by d in z: every NN pair is the
    # straight-across point, so each direction contributes d^2
    g = np.stack(np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5)), -1).reshape(-1, 2)
    a = np.c_[g, np.zeros(len(g))]
    d = 0.3
    b = np.c_[g, np.full(len(g), d)]
    assert float(chamfer(cloud(a), cloud(b))) == pytest.approx(2 * d * d, rel=1e-12)


def test_chamfer_empty_rejected():
    with pytest.raises(LossInputError):
        chamfer(cloud(np.zeros((0, 3))), cloud(rand_cloud(4, 3)))


def test_chamfer_gradient_frozen_match():
    a_np = rand_cloud(30, 4)
    b_np = rand_cloud(40, 5)
    a = torch.tensor(a_np, requires_grad=True)
    loss = chamfer(PointCloud(a), cloud(b_np))
    g = torch.autograd.grad(loss, a)[0].numpy()
    # forward direction: grad wrt a_i includes 2(a_i - b_nn)/N
    from scipy.spatial import cKDTree
    _, idx = cKDTree(b_np).query(a_np)
    expect = 2 * (a_np - b_np[idx]) / len(a_np)
    # backward direction adds terms only where a_i is some b's nearest
    _, ridx = cKDTree(a_np).query(b_np)
    for j, i in enumerate(ridx):
        expect[i] += 2 * (a_np[i] - b_np[j]) / len(b_np)
    assert np.allclose(g, expect, atol=1e-12)


def test_chamfer_on_sampled_surfaces_translation():
    cube = unit_cube()
    s1 = sample_surface(cube, 1500, seed=1)
    s2 = sample_surface(cube, 1500, seed=2)
    near = float(chamfer(s1, s2))
    shifted = PointCloud(s2.points + torch.tensor([5.0, 0.0, 0.0]))
    far = float(chamfer(s1, shifted))
    assert near < 5e-3  # on the order of the squared sample spacing
    assert far > 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 25), st.integers(3, 25))
def test_chamfer_symmetric_nonnegative(seed, n, m):
    a = rand_cloud(n, seed)
    b = rand_cloud(m, seed + 1)
    ab = float(chamfer(cloud(a), cloud(b)))
    ba = float(chamfer(cloud(b), cloud(a)))
    assert ab >= 0.0
    assert ab == pytest.approx(ba, rel=1e-12)


# -- reweighted objective ----------------------------------------------

def test_reweighted_beta_zero_is_plain_chamfer():
    a = rand_cloud(40, 6)
    b = rand_cloud(40, 7)
    mask = np.zeros(40, dtype=bool)
    mask[:10] = True
    out = reweighted_chamfer(cloud(a), cloud(b), [(mask, torch.tensor(0.0))])
    assert out.total == pytest.approx(float(chamfer(cloud(a), cloud(b))), rel=1e-12)


def test_reweighted_beta_one_excludes_top():
    a = rand_cloud(40, 8)
    b = rand_cloud(30, 9)
    mask = np.zeros(40, dtype=bool)
    mask[25:] = True
    out = reweighted_chamfer(cloud(a), cloud(b), [(mask, torch.tensor(1.0))])
    # forward: masked points dropped; backward: matched against survivors only
    d1 = ((a[:25, None] - b[None]) ** 2).sum(-1).min(1)
    d2 = ((b[:, None] - a[None, :25]) ** 2).sum(-1).min(1)
    assert out.total == pytest.approx(d1.sum() / 40 + d2.mean(), rel=1e-12)


def test_reweighted_single_node_blend_identity():
    # one node: the variant mixture must equal the two-way blend exactly
    a = rand_cloud(35, 10)
    b = rand_cloud(35, 11)
    mask = np.zeros(35, dtype=bool)
    mask[:12] = True
    beta = 0.4
    out = reweighted_chamfer(cloud(a), cloud(b), [(mask, torch.tensor(beta))])
    keep = a[~mask]
    d2_full = ((b[:, None] - a[None]) ** 2).sum(-1).min(1).mean()
    d2_excl = ((b[:, None] - keep[None]) ** 2).sum(-1).min(1).mean()
    d1 = ((a[:, None] - b[None]) ** 2).sum(-1).min(1)
    w = np.where(mask, 1 - beta, 1.0)
    expect = (w * d1).mean() + (1 - beta) * d2_full + beta * d2_excl
    assert out.total == pytest.approx(expect, rel=1e-12)


def test_reweighted_mask_shape_checked():
    a, b = rand_cloud(10, 12), rand_cloud(10, 13)
    with pytest.raises(LossInputError):
        reweighted_chamfer(cloud(a), cloud(b), [(np.zeros(9, dtype=bool), torch.tensor(0.5))])


def test_visibility_regularizer_added():
    a, b = rand_cloud(20, 14), rand_cloud(20, 15)
    vis = torch.full((20,), 0.5, dtype=torch.float64)
    out = reweighted_chamfer(cloud(a), cloud(b), vis1=vis)
    assert out.visibility_reg == pytest.approx(0.01 * 0.5, rel=1e-12)


def test_aligned_mask_coincident_cloud():
    a = rand_cloud(60, 16)
    n = np.tile([0.0, 0.0, 1.0], (60, 1))
    m1, m2 = aligned_mask(a, n, a, n)
    assert m1.all() and m2.all()
    # push one side far away: nothing aligns
    m1, m2 = aligned_mask(a, n, a + 100.0, n)
    assert not m1.any() and not m2.any()


# -- penalties ----------------------------------------------------------

def test_length_penalty_schedule():
    assert length_penalty_weight(0) == 0.05
    assert length_penalty_weight(1) == 0.025
    assert length_penalty_weight(2) == 0.0125
    assert length_penalty_weight(10) == 0.005  # floor


def test_length_penalty_sums_gates():
    g = [torch.tensor(0.9), torch.tensor(0.1)]
    assert float(length_penalty(g, 0)) == pytest.approx(0.05 * 1.0, rel=1e-12)
    assert float(length_penalty([], 0)) == 0.0


def test_hinge_regions():
    assert float(hinge(torch.tensor(0.5), low=0.0, high=1.0)) == 0.0
    assert float(hinge(torch.tensor(-0.2), low=0.0)) == pytest.approx(0.04)
    assert float(hinge(torch.tensor(1.3), high=1.0)) == pytest.approx(0.09)


def test_domain_rule_weight():
    t = [hinge(torch.tensor(-0.1), low=0.0)]
    assert float(domain_rule_penalty(t)) == pytest.approx(100.0 * 0.01)
    assert float(domain_rule_penalty([])) == 0.0
