"""Fit objective: Chamfer distance, boolean-reweighted terms, visibility
modulation, alignment amplification, and the sequence-length / domain-rule
penalties.

Distances use the per-point mean convention so tolerances are independent
of sample counts. Nearest neighbors come from an exact KD-tree query; the
matched index is frozen per evaluation and gradients flow through the
selected pair only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.spatial import cKDTree

from .mesh import PointCloud

TAU_V = 0.3          # visibility sigmoid temperature
OMEGA_ALIGN = 5.0    # aligned-region amplification
LAMBDA_V = 0.01      # visibility regularizer weight
RULE_WEIGHT = 100.0  # domain-rule hinge weight


class LossInputError(ValueError):
    pass


def _nn_sq(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Squared distance from each point of a to its nearest point of b.

    The argmin is found on detached coordinates (exact KD-tree); the
    distance itself is recomputed in torch so gradients reach both the
    query point and its frozen match.
    """
    tree = cKDTree(b.detach().cpu().numpy())
    _, idx = tree.query(a.detach().cpu().numpy(), k=1)
    nb = b.index_select(0, torch.as_tensor(idx, dtype=torch.long))
    d = a - nb
    return (d * d).sum(dim=1)


def chamfer(s1: PointCloud, s2: PointCloud) -> torch.Tensor:
    """Symmetric mean squared nearest-neighbor distance (both directions)."""
    if len(s1) == 0 or len(s2) == 0:
        raise LossInputError("empty point cloud")
    p1, p2 = s1.points, s2.points
    return _nn_sq(p1, p2).mean() + _nn_sq(p2, p1).mean()


def chamfer_np(a: np.ndarray, b: np.ndarray) -> float:
    t1 = cKDTree(b)
    t2 = cKDTree(a)
    d1, _ = t1.query(a, k=1)
    d2, _ = t2.query(b, k=1)
    return float((d1 ** 2).mean() + (d2 ** 2).mean())


def brute_force_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Quadratic-scan oracle for the accelerated search (small clouds)."""
    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


@dataclass
class LossBreakdown:
    chamfer_s1: float
    chamfer_s2: float
    visibility_reg: float
    length_penalty: float
    domain_penalty: float
    total_t: torch.Tensor = field(repr=False, default=None)

    @property
    def total(self) -> float:
        return float(self.total_t.detach())

    def to_dict(self) -> dict:
        return {
            "chamfer_s1": self.chamfer_s1,
            "chamfer_s2": self.chamfer_s2,
            "visibility_reg": self.visibility_reg,
            "length_penalty": self.length_penalty,
            "domain_penalty": self.domain_penalty,
            "total": self.total,
        }


def aligned_mask(
    s1_np: np.ndarray, s1_normals: np.ndarray | None,
    s2_np: np.ndarray, s2_normals: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Masks of well-aligned points on each side: nearest distance below
    twice the median point spacing and absolute normal cosine above 0.9."""
    t2 = cKDTree(s2_np)
    t1 = cKDTree(s1_np)
    d1, i1 = t2.query(s1_np, k=1)
    d2, i2 = t1.query(s2_np, k=1)
    spacing = np.median(t2.query(s2_np, k=2)[0][:, 1])
    thresh = 2.0 * spacing
    m1 = d1 < thresh
    m2 = d2 < thresh
    if s1_normals is not None and s2_normals is not None:
        c1 = np.abs((s1_normals * s2_normals[i1]).sum(axis=1))
        c2 = np.abs((s2_normals * s1_normals[i2]).sum(axis=1))
        m1 &= c1 > 0.9
        m2 &= c2 > 0.9
    return m1, m2


def reweighted_chamfer(
    s1: PointCloud,
    s2: PointCloud,
    top_sets: list[tuple[np.ndarray, torch.Tensor]] = (),
    vis1: torch.Tensor | None = None,
    vis2: torch.Tensor | None = None,
    align1: np.ndarray | None = None,
    align2: np.ndarray | None = None,
    weights1: torch.Tensor | None = None,
    length_penalty: torch.Tensor | None = None,
    domain_penalty: torch.Tensor | None = None,
    lambda_v: float = LAMBDA_V,
) -> LossBreakdown:
    """Boolean-reweighted Chamfer objective.

    top_sets pairs a boolean membership mask over s1 with that node's
    boolean weight (in [0,1]). For the s2 term, each subset of nodes
    contributes an exclude-variant distance weighted by the product of
    beta (excluded) / 1-beta (included) factors, which reduces exactly to
    the two-way blend for a single node.
    """
    n1, n2 = len(s1), len(s2)
    if n1 == 0 or n2 == 0:
        raise LossInputError("empty point cloud")
    for mask, _ in top_sets:
        if mask.shape != (n1,):
            raise LossInputError("top set mask must cover S1")

    # --- L~_S1: per-point distances to S2, top samples damped by 1-beta
    d1 = _nn_sq(s1.points, s2.points)
    w1 = torch.ones(n1, dtype=torch.float64)
    if weights1 is not None:
        w1 = w1 * weights1
    for mask, beta in top_sets:
        mt = torch.as_tensor(mask.astype(np.float64))
        w1 = w1 * (1.0 - mt * beta)
    if vis1 is not None:
        w1 = w1 * vis1
    if align1 is not None:
        a1 = torch.as_tensor(np.where(align1, OMEGA_ALIGN, 1.0))
        w1 = w1 * a1
    l_s1 = (w1 * d1).sum() / n1

    # --- L~_S2: exclude-variant mixture over top sets
    w2 = torch.ones(n2, dtype=torch.float64)
    if vis2 is not None:
        w2 = w2 * vis2
    if align2 is not None:
        w2 = w2 * torch.as_tensor(np.where(align2, OMEGA_ALIGN, 1.0))

    active = [(m, b) for m, b in top_sets]
    l_s2 = torch.zeros((), dtype=torch.float64)
    if not active:
        d2 = _nn_sq(s2.points, s1.points)
        l_s2 = (w2 * d2).sum() / n2
    else:
        if len(active) > 4:
            # keep the 4 most boolean-leaning nodes as explicit variants
            active = sorted(active, key=lambda mb: -float(mb[1].detach()))[:4]
        for excluded in itertools.product([False, True], repeat=len(active)):
            keep = np.ones(n1, dtype=bool)
            coeff = torch.ones((), dtype=torch.float64)
            for (mask, beta), exc in zip(active, excluded):
                if exc:
                    keep &= ~mask
                    coeff = coeff * beta
                else:
                    coeff = coeff * (1.0 - beta)
            if not keep.any():
                continue
            sub_idx = torch.as_tensor(np.where(keep)[0], dtype=torch.long)
            d2 = _nn_sq(s2.points, s1.points.index_select(0, sub_idx))
            l_s2 = l_s2 + coeff * (w2 * d2).sum() / n2

    vis_reg = torch.zeros((), dtype=torch.float64)
    if vis1 is not None:
        vis_reg = vis_reg + vis1.mean()
    if vis2 is not None:
        vis_reg = vis_reg + vis2.mean()
    vis_term = lambda_v * vis_reg

    lp = length_penalty if length_penalty is not None else torch.zeros(())
    dp = domain_penalty if domain_penalty is not None else torch.zeros(())
    total = l_s1 + l_s2 + vis_term + lp + dp
    return LossBreakdown(
        chamfer_s1=float(l_s1.detach()),
        chamfer_s2=float(l_s2.detach()),
        visibility_reg=float(vis_term.detach()),
        length_penalty=float(lp.detach()),
        domain_penalty=float(dp.detach()),
        total_t=total,
    )


# -- penalties ---------------------------------------------------------


def length_penalty_weight(stage: int) -> float:
    """Staged relaxation: 0.05 halved per growth stage, floored at 0.005."""
    if stage < 0:
        raise LossInputError("stage must be >= 0")
    return max(0.05 * (0.5 ** stage), 0.005)


def length_penalty(gammas: list[torch.Tensor], stage: int) -> torch.Tensor:
    lam = length_penalty_weight(stage)
    if not gammas:
        return torch.zeros(())
    return lam * torch.stack([g.reshape(()) for g in gammas]).sum()


def hinge(x: torch.Tensor, low: float | None = None, high: float | None = None) -> torch.Tensor:
    """Smooth (squared) hinge outside [low, high]."""
    out = torch.zeros((), dtype=torch.float64)
    if low is not None:
        out = out + torch.relu(low - x).pow(2)
    if high is not None:
        out = out + torch.relu(x - high).pow(2)
    return out


def domain_rule_penalty(terms: list[torch.Tensor]) -> torch.Tensor:
    """Sum of rule hinges, each weighted by RULE_WEIGHT.

    The rule set (evaluated by the graph module, which owns the
    parameters): extrude width in (0.05, 5); bevel width at most half the
    shortest adjacent edge; total blended subdivision level at most 4;
    boolean primitive scales at least 1e-3; non-self-intersecting proxy
    base polygon.
    """
    if not terms:
        return torch.zeros(())
    return RULE_WEIGHT * torch.stack([t.reshape(()) for t in terms]).sum()
