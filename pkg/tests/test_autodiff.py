import numpy as np
import pytest
import torch

from opforge.autodiff import (
    AdamState,
    GradError,
    ParamHandle,
    adam_step,
    backward,
    finite_diff_check,
    safe_arccos,
)


def test_identity_gradient():
    th = ParamHandle("theta", 0.3)
    grads = backward(th.tensor * 1.0, [th])
    assert grads[th] == pytest.approx(1.0)


def test_vertex_displace_all_ones():
    # loss = sum of components of (v + theta) -> d/dtheta = ones
    v = torch.zeros((5, 3))
    th = ParamHandle("offsets", np.zeros((5, 3)))
    loss = (v + th.tensor).sum()
    grads = backward(loss, [th])
    assert np.array_equal(grads[th], np.ones((5, 3)))


def test_sigmoid_gate_grad():
    w = ParamHandle("omega", 0.0, role="gate")
    grads = backward(torch.sigmoid(w.tensor), [w])
    assert grads[w] == pytest.approx(0.25)


def test_unused_param_zero():
    a = ParamHandle("a", 1.0)
    b = ParamHandle("b", 2.0)
    grads = backward(a.tensor ** 2, [a, b])
    assert grads[b] == 0.0


def test_softmax_probability_conservation():
    w = ParamHandle("w", np.array([0.3, -0.2, 1.1]), role="branch")
    total = np.zeros(3)
    for k in range(3):
        p_k = torch.softmax(w.tensor, dim=0)[k]
        total += backward(p_k, [w])[w]
    assert np.allclose(total, 0.0, atol=1e-12)


def test_adam_first_step_magnitude():
    th = ParamHandle("x", 5.0)
    st = AdamState(lr=0.01)
    adam_step(st, {th: np.asarray(3.7)})
    assert th.value == pytest.approx(5.0 - 0.01, abs=1e-6)


def test_adam_zero_grad_no_move():
    th = ParamHandle("x", 5.0)
    st = AdamState()
    adam_step(st, {th: np.asarray(0.0)})
    assert th.value == 5.0


def test_adam_deterministic_trajectories():
    def run():
        th = ParamHandle("x", 1.0)
        st = AdamState()
        traj = []
        for i in range(10):
            g = backward(th.tensor ** 2, [th])
            adam_step(st, g)
            traj.append(th.value)
        return traj

    assert run() == run()


def test_finite_diff_polynomial():
    th = ParamHandle("t", 1.5)
    err = finite_diff_check(lambda: th.tensor ** 2, [th])
    assert err < 1e-8


def test_finite_diff_trig_chain():
    a = ParamHandle("a", 0.4)
    b = ParamHandle("b", -0.7)

    def f():
        return torch.sin(a.tensor) * torch.exp(b.tensor) + safe_arccos(a.tensor * b.tensor)

    assert finite_diff_check(f, [a, b]) < 1e-7


def test_nonfinite_loss_rejected():
    th = ParamHandle("t", 0.0)
    with pytest.raises(GradError):
        backward(torch.log(th.tensor), [th])


def test_clamped_handle():
    th = ParamHandle("w", 0.5, lower=0.1, upper=0.9)
    st = AdamState(lr=10.0)
    adam_step(st, {th: np.asarray(100.0)})
    assert th.value >= 0.1
