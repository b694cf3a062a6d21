"""Geometric agreement between two OBJ files.

Plain-text OBJ parsing plus a brute-force symmetric chamfer distance on
the vertex sets, unit-normalized over the joint bounding box. No library
imports beyond numpy (which Blender bundles), so the comparison runs the
same inside and outside Blender.
"""

from __future__ import annotations

import numpy as np


class CompareError(ValueError):
    pass


def load_obj_counts(path: str) -> tuple[np.ndarray, int]:
    """Vertex array and face count of an OBJ file."""
    verts = []
    faces = 0
    with open(path) as fh:
        for line in fh:
            if line.startswith("v "):
                parts = line.split()
                verts.append([float(parts[1]), float(parts[2]),
                              float(parts[3])])
            elif line.startswith("f "):
                faces += 1
    if not verts:
        raise CompareError(f"no vertices in {path}")
    return np.asarray(verts, dtype=np.float64), faces


def chamfer_vertices(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean-squared nearest-neighbor distance between vertex
    sets, in the unit-diagonal frame of their joint bounding box."""
    both = np.concatenate([a, b])
    lo, hi = both.min(axis=0), both.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag < 1e-12:
        diag = 1.0
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean()) / diag ** 2


def compare_objs(path_a: str, path_b: str) -> dict:
    va, fa = load_obj_counts(path_a)
    vb, fb = load_obj_counts(path_b)
    return {
        "chamfer": chamfer_vertices(va, vb),
        "vertex_delta": int(len(va) - len(vb)),
        "face_delta": int(fa - fb),
    }
