"""Per-operation gradient verification.

Each check builds a small mesh, draws random parameters in their safe
ranges, evaluates a smooth scalar probe of the output vertices, and
compares analytic gradients against central finite differences. Draws
avoid the known non-smooth points (integer subdivision levels, zero
bend angle, zero extrusion height).
"""

from __future__ import annotations

import numpy as np
import torch

from .autodiff import ParamHandle, finite_diff_check
from .mesh import unit_cube
from .ops.bevel import bevel
from .ops.extrude import extrude_exact
from .ops.proxy import proxy_init
from .ops.subdivision import subdivide_blend
from .ops.transform import (
    AXES,
    DEFORM_MODES,
    edge_loop_affine,
    global_affine,
    simple_deform,
    vertex_displace,
)

GRADCHECK_OPS = (
    "Extrude",
    "Bevel",
    "Subdivision",
    "SimpleDeform",
    "GlobalAffine",
    "EdgeLoopAffine",
    "VertexDisplace",
    "ExtrudeProxy",
)

_TOP_FACE = 1          # +z face of the unit cube
_TOP_EDGE = (4, 5)     # an edge of that face


def _probe(rng: np.random.Generator):
    """Random smooth scalar functional of a vertex array."""
    a = torch.as_tensor(rng.normal(size=3))
    b = torch.as_tensor(rng.normal(size=3))

    def f(verts: torch.Tensor) -> torch.Tensor:
        return (verts @ a).sum() + ((verts * verts) @ b).sum()

    return f


def _check_extrude(rng, eps):
    h = ParamHandle("h", rng.uniform(0.15, 0.5) * rng.choice([-1.0, 1.0]))
    w = ParamHandle("w", rng.uniform(0.4, 1.4))
    ang = ParamHandle("angles", rng.uniform(-0.3, 0.3, size=2))
    probe = _probe(rng)
    mesh = unit_cube()

    def loss():
        out = extrude_exact(mesh, [_TOP_FACE], h.tensor, w.tensor, ang.tensor)
        return probe(out.vertices)

    return finite_diff_check(loss, [h, w, ang], eps=eps)


def _check_bevel(rng, eps):
    width = ParamHandle("width", rng.uniform(0.03, 0.2))
    segments = int(rng.integers(1, 10))
    probe = _probe(rng)
    mesh = unit_cube()

    def loss():
        out = bevel(mesh, [_TOP_EDGE], width.tensor, segments)
        return probe(out.vertices)

    return finite_diff_check(loss, [width], eps=eps)


def _check_subdivision(rng, eps):
    # stay clear of integer levels, where the blend switches topology
    whole = int(rng.integers(0, 2))
    lvl = ParamHandle("level", whole + rng.uniform(0.1, 0.9))
    probe = _probe(rng)
    mesh = unit_cube()

    def loss():
        return probe(subdivide_blend(mesh, lvl.tensor).vertices)

    return finite_diff_check(loss, [lvl], eps=eps)


def _check_simple_deform(rng, eps):
    mode = DEFORM_MODES[int(rng.integers(len(DEFORM_MODES)))]
    axis = AXES[int(rng.integers(3))]
    if mode in ("stretch", "taper"):
        val = rng.uniform(0.6, 1.6)
    else:   # angle-like; keep away from the bend's zero-angle branch
        val = rng.uniform(0.15, 1.2) * rng.choice([-1.0, 1.0])
    f = ParamHandle("factor", val)
    probe = _probe(rng)
    mesh = unit_cube()

    def loss():
        return probe(simple_deform(mesh, mode, f.tensor, axis).vertices)

    return finite_diff_check(loss, [f], eps=eps)


def _affine_vec(rng, kind: str) -> np.ndarray:
    if kind == "translate":
        return rng.uniform(-0.5, 0.5, size=3)
    if kind == "scale":
        return rng.uniform(0.5, 1.6, size=3)
    return rng.uniform(-0.6, 0.6, size=3)      # rotate


def _check_global_affine(rng, eps):
    kind = ("translate", "scale", "rotate")[int(rng.integers(3))]
    vec = ParamHandle("vec", _affine_vec(rng, kind))
    probe = _probe(rng)
    mesh = unit_cube()

    def loss():
        return probe(global_affine(mesh, kind, vec.tensor).vertices)

    return finite_diff_check(loss, [vec], eps=eps)


def _check_edge_loop_affine(rng, eps):
    kind = ("translate", "scale", "rotate")[int(rng.integers(3))]
    vec = ParamHandle("vec", _affine_vec(rng, kind))
    probe = _probe(rng)
    mesh = unit_cube()
    loop = [(4, 5), (5, 6), (6, 7), (4, 7)]    # rim of the top face

    def loss():
        return probe(edge_loop_affine(mesh, loop, kind, vec.tensor).vertices)

    return finite_diff_check(loss, [vec], eps=eps)


def _check_vertex_displace(rng, eps):
    mesh = unit_cube()
    off = ParamHandle("offsets", rng.uniform(-0.2, 0.2, size=(8, 3)))
    probe = _probe(rng)

    def loss():
        return probe(vertex_displace(mesh, off.tensor).vertices)

    return finite_diff_check(loss, [off], eps=eps)


def _check_extrude_proxy(rng, eps):
    mesh = unit_cube()
    proxy = proxy_init(mesh, seed=int(rng.integers(1 << 16)))
    proxy.h.set_value(rng.uniform(0.15, 0.5))
    proxy.w.set_value(rng.uniform(0.5, 1.4))
    proxy.angles.set_value(rng.uniform(-0.2, 0.2, size=2))
    probe = _probe(rng)
    handles = [proxy.uv, proxy.h, proxy.w, proxy.angles]

    def loss():
        return probe(proxy.prism().vertices)

    return finite_diff_check(loss, handles, eps=eps)


_CHECKS = {
    "Extrude": _check_extrude,
    "Bevel": _check_bevel,
    "Subdivision": _check_subdivision,
    "SimpleDeform": _check_simple_deform,
    "GlobalAffine": _check_global_affine,
    "EdgeLoopAffine": _check_edge_loop_affine,
    "VertexDisplace": _check_vertex_displace,
    "ExtrudeProxy": _check_extrude_proxy,
}


def gradcheck_op(kind: str, draws: int = 20, seed: int = 0,
                 eps: float = 1e-5) -> float:
    """Worst relative error over the draws for one operation."""
    if kind not in _CHECKS:
        raise ValueError(f"unknown gradcheck op {kind!r} "
                         f"(choose from {', '.join(GRADCHECK_OPS)})")
    worst = 0.0
    for d in range(draws):
        rng = np.random.default_rng(seed * 100003 + d)
        worst = max(worst, float(_CHECKS[kind](rng, eps)))
    return worst


def gradcheck_all(draws: int = 20, seed: int = 0,
                  eps: float = 1e-5) -> dict[str, float]:
    return {k: gradcheck_op(k, draws=draws, seed=seed, eps=eps)
            for k in GRADCHECK_OPS}
