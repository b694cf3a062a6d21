"""Reverse-mode gradient engine, Adam, and a finite-difference harness.

Expressions are torch double tensors recorded by torch's dynamic autograd
tape (rebuilt every evaluation, which the topology-changing pipeline
requires). Parameters are registered through ParamHandle so gradient maps
and optimizer state traverse handles in a fixed, deterministic order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import torch

torch.set_default_dtype(torch.float64)

_id_counter = itertools.count()


class GradError(RuntimeError):
    pass


class ParamHandle:
    """A named learnable parameter (scalar or small tensor).

    role is one of: "theta" (continuous op parameter), "branch" (discrete
    branch weight), "gate" (gating weight), "boolean" (boolean-weight
    logit), "visibility" (per-point visibility logit), "uv" (proxy chart
    coordinate).
    """

    __slots__ = ("name", "role", "tensor", "uid", "lower", "upper")

    def __init__(self, name: str, value, role: str = "theta",
                 lower: float | None = None, upper: float | None = None):
        t = torch.as_tensor(np.asarray(value, dtype=np.float64))
        if not torch.isfinite(t).all():
            raise GradError(f"parameter {name!r} initialized with non-finite value")
        self.name = name
        self.role = role
        self.tensor = t.clone().requires_grad_(True)
        self.uid = next(_id_counter)
        self.lower = lower
        self.upper = upper

    @property
    def value(self):
        v = self.tensor.detach().cpu().numpy()
        return float(v) if v.ndim == 0 else v

    def set_value(self, value) -> None:
        with torch.no_grad():
            self.tensor.copy_(torch.as_tensor(np.asarray(value, dtype=np.float64)))

    def clamp_(self) -> None:
        if self.lower is None and self.upper is None:
            return
        with torch.no_grad():
            self.tensor.clamp_(min=self.lower, max=self.upper)

    def __repr__(self):
        return f"ParamHandle({self.name!r}, role={self.role!r})"


def backward(loss: torch.Tensor, handles: list[ParamHandle]) -> dict[ParamHandle, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every handle (0 if unreachable).

    Handles are traversed in registration (uid) order so merged gradient
    maps are reproducible.
    """
    if loss.ndim != 0:
        raise GradError("loss must be a scalar expression")
    if not torch.isfinite(loss):
        raise GradError("non-finite loss value")
    ordered = sorted(handles, key=lambda h: h.uid)
    grads = torch.autograd.grad(
        loss, [h.tensor for h in ordered], allow_unused=True, retain_graph=False
    )
    out: dict[ParamHandle, np.ndarray] = {}
    for h, g in zip(ordered, grads):
        if g is None:
            g_np = np.zeros(h.tensor.shape)
        else:
            if not torch.isfinite(g).all():
                raise GradError(f"non-finite gradient at parameter {h.name!r}")
            g_np = g.detach().cpu().numpy().reshape(h.tensor.shape)
        out[h] = np.asarray(g_np, dtype=np.float64)
    return out


# -- numerically safe primitives ---------------------------------------


def safe_arccos(x: torch.Tensor) -> torch.Tensor:
    """arccos with inputs clamped to avoid the endpoint singularity."""
    return torch.arccos(torch.clamp(x, -1.0 + 1e-9, 1.0 - 1e-9))


def sigmoid_t(x: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    return torch.sigmoid(x / tau)


# -- Adam --------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, grads: dict[ParamHandle, np.ndarray]) -> None:
    """Standard Adam update with bias correction, applied in uid order."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for h in sorted(grads, key=lambda h: h.uid):
        g = grads[h]
        if not np.isfinite(g).all():
            raise GradError(f"non-finite gradient for {h.name!r}")
        m = state.m.get(h.uid)
        v = state.v.get(h.uid)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[h.uid] = m
        state.v[h.uid] = v
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        upd = state.lr * mhat / (np.sqrt(vhat) + state.eps)
        with torch.no_grad():
            h.tensor -= torch.as_tensor(upd.reshape(h.tensor.shape))
        h.clamp_()


# -- finite differences ------------------------------------------------


def finite_diff_check(f, handles: list[ParamHandle], eps: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    f() evaluates the scalar loss from the handles' current values.
    """
    loss = f()
    analytic = backward(loss, handles)
    worst = 0.0
    for h in sorted(handles, key=lambda h: h.uid):
        flat = h.tensor.detach().cpu().numpy().ravel().copy()
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            h.set_value(flat.reshape(h.tensor.shape))
            with torch.no_grad():
                up = float(f())
            flat[i] = orig - eps
            h.set_value(flat.reshape(h.tensor.shape))
            with torch.no_grad():
                dn = float(f())
            flat[i] = orig
            h.set_value(flat.reshape(h.tensor.shape))
            if not (np.isfinite(up) and np.isfinite(dn)):
                raise GradError("non-finite evaluation during finite differencing")
            num[i] = (up - dn) / (2 * eps)
        a = np.asarray(analytic[h]).ravel()
        denom = np.maximum(1.0, np.abs(num))
        err = np.abs(a - num) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
