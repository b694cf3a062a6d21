"""Evaluation: geometric fidelity report and sequence similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .loss import LossInputError
from .mesh import Mesh, PointCloud, sample_surface, wiring_stats
from .sequence import DesignSequence

F1_THRESHOLDS = (0.01, 0.02)


def unit_normalize(points: np.ndarray) -> np.ndarray:
    """Center on the bounding-box midpoint and scale the diagonal to 1."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag < 1e-12:
        raise LossInputError("degenerate geometry cannot be unit-normalized")
    return (points - (lo + hi) / 2) / diag


@dataclass
class MetricsReport:
    chamfer: float            # on unit-normalized geometry
    chamfer_x100: float
    normal_consistency: float
    f1: dict[float, float]
    wiring: dict

    def to_dict(self) -> dict:
        return {
            "chamfer": self.chamfer,
            "chamfer_x100": self.chamfer_x100,
            "normal_consistency": self.normal_consistency,
            "f1": {str(t): v for t, v in self.f1.items()},
            "wiring": self.wiring,
        }


def _as_cloud(x, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray | None]:
    if isinstance(x, Mesh):
        pc = sample_surface(x, samples, seed)
        return pc.points_np, pc.normals
    if isinstance(x, PointCloud):
        return x.points_np, x.normals
    raise LossInputError(f"expected Mesh or PointCloud, got {type(x).__name__}")


def metrics_report(pred, target, samples: int = 4096, seed: int = 0) -> MetricsReport:
    # both sides share the sampling seed: identical meshes score perfectly
    p, pn = _as_cloud(pred, samples, seed)
    t, tn = _as_cloud(target, samples, seed)
    if len(p) == 0 or len(t) == 0:
        raise LossInputError("empty sampling")

    # joint normalization so both clouds live in the same unit frame
    both = np.concatenate([p, t])
    lo, hi = both.min(axis=0), both.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag < 1e-12:
        raise LossInputError("degenerate geometry cannot be unit-normalized")
    p = (p - (lo + hi) / 2) / diag
    t = (t - (lo + hi) / 2) / diag

    tp = cKDTree(t)
    tq = cKDTree(p)
    d_pt, i_pt = tp.query(p, k=1)
    d_tp, i_tp = tq.query(t, k=1)
    cd = float((d_pt ** 2).mean() + (d_tp ** 2).mean())

    if pn is not None and tn is not None:
        nc = 0.5 * (np.abs((pn * tn[i_pt]).sum(axis=1)).mean()
                    + np.abs((tn * pn[i_tp]).sum(axis=1)).mean())
    else:
        nc = float("nan")

    f1 = {}
    for tau in F1_THRESHOLDS:
        precision = float((d_pt <= tau).mean())
        recall = float((d_tp <= tau).mean())
        f1[tau] = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)

    wiring = wiring_stats(pred).to_dict() if isinstance(pred, Mesh) else {}
    return MetricsReport(
        chamfer=cd,
        chamfer_x100=100 * cd,
        normal_consistency=float(nc),
        f1=f1,
        wiring=wiring,
    )


# -- sequence similarity ------------------------------------------------


def lcs_length(a: list[str], b: list[str]) -> int:
    m, n = len(a), len(b)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        cur = [0] * (n + 1)
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[n]


def levenshtein(a: list[str], b: list[str]) -> int:
    m, n = len(a), len(b)
    prev = list(range(n + 1))
    for i in range(1, m + 1):
        cur = [i] + [0] * n
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[n]


@dataclass
class SequenceSimilarity:
    lcs: int
    normalized_lcs: float
    levenshtein: int
    levenshtein_similarity: float

    def to_dict(self) -> dict:
        return {
            "lcs": self.lcs,
            "normalized_lcs": self.normalized_lcs,
            "levenshtein": self.levenshtein,
            "levenshtein_similarity": self.levenshtein_similarity,
        }


def sequence_similarity(pred: DesignSequence, truth: DesignSequence) -> SequenceSimilarity:
    """Token-level similarity; the second argument is the reference whose
    length normalizes both scores."""
    a = pred.tokens() if isinstance(pred, DesignSequence) else list(pred)
    b = truth.tokens() if isinstance(truth, DesignSequence) else list(truth)
    l = lcs_length(a, b)
    d = levenshtein(a, b)
    n = len(b)
    return SequenceSimilarity(
        lcs=l,
        normalized_lcs=l / n if n else (1.0 if not a else 0.0),
        levenshtein=d,
        levenshtein_similarity=1.0 - d / n if n else (1.0 if not a else 0.0),
    )
