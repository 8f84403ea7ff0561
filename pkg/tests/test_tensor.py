"""Unit tests for the autodiff toolkit.

Every numeric target here is an independent oracle: hand-derived closed
forms, or a brute-force numpy re-implementation written in this file.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chatmine import nn
from chatmine.errors import ContractViolation


def test_matmul_forward_and_backward_hand_case():
    # A @ B with A=[[1,2],[3,4]], B=[[5,6],[7,8]] -> [[19,22],[43,50]];
    # with upstream gradient all-ones, dA = 1 @ B^T, dB = A^T @ 1.
    A = nn.Parameter("A", np.array([[1.0, 2.0], [3.0, 4.0]]))
    B = nn.Parameter("B", np.array([[5.0, 6.0], [7.0, 8.0]]))
    out = A @ B
    assert np.array_equal(out.data, np.array([[19.0, 22.0], [43.0, 50.0]]))
    out.sum().backward()
    assert np.array_equal(A.grad, np.array([[11.0, 15.0], [11.0, 15.0]]))
    assert np.array_equal(B.grad, np.array([[4.0, 4.0], [6.0, 6.0]]))


def test_add_broadcast_backward():
    a = nn.Parameter("a", np.zeros((2, 3)))
    b = nn.Parameter("b", np.zeros(3))
    (a + b).sum().backward()
    assert np.array_equal(a.grad, np.ones((2, 3)))
    # the broadcast axis sums back: each b entry fed 2 rows
    assert np.array_equal(b.grad, np.full(3, 2.0))


def test_elementwise_activation_values():
    x = nn.tensor(np.array([-2.0, 0.0, 3.0]))
    assert np.array_equal(nn.relu(x).data, [0.0, 0.0, 3.0])
    assert np.allclose(nn.softsign(x).data, [-2.0 / 3.0, 0.0, 0.75])
    assert nn.sigmoid(nn.tensor(0.0)).data == pytest.approx(0.5)
    assert nn.sigmoid(nn.tensor(np.log(3.0))).data == pytest.approx(0.75)
    sp = nn.softplus(x).data
    assert np.allclose(sp, np.log1p(np.exp([-2.0, 0.0, 3.0])))


def test_softplus_is_stable_for_large_inputs():
    big = nn.softplus(nn.tensor(np.array([800.0, -800.0]))).data
    assert big[0] == pytest.approx(800.0)
    assert big[1] == pytest.approx(0.0)
    assert np.all(np.isfinite(big))


def test_softmax_rows_sum_to_one_and_match_numpy():
    rng = np.random.default_rng(0)
    z = rng.normal(size=7) * 10
    p = nn.softmax(nn.tensor(z)).data
    e = np.exp(z - z.max())
    assert np.allclose(p, e / e.sum(), atol=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_linear_shape_contract():
    W = nn.tensor(np.zeros((3, 4)))
    b = nn.tensor(np.zeros(3))
    with pytest.raises(ContractViolation):
        nn.linear(nn.tensor(np.zeros(5)), W, b)


def test_backward_requires_scalar():
    v = nn.Parameter("v", np.array([1.0, 2.0]))
    with pytest.raises(ContractViolation):
        (v * 2.0).backward()


# -- convolution + pooling -------------------------------------------------


def conv_pool_oracle(x, kernels, bias):
    """Brute-force stage: ReLU(w . window + b) then max, loops only."""
    n = len(x)
    m, h = kernels.shape
    out = np.zeros(m)
    for j in range(m):
        best = -np.inf
        for t in range(n - h + 1):
            a = max(0.0, float(np.dot(kernels[j], x[t : t + h]) + bias[j]))
            if a > best:
                best = a
        out[j] = best
    return out


def test_conv_pool_hand_case():
    # x=[1,2,3], kernel [1,1], bias 0: window sums are [3,5] -> pooled 5.
    # Gradient flows only through the winning window [2,3].
    x = nn.Parameter("x", np.array([1.0, 2.0, 3.0]))
    k = nn.Parameter("k", np.array([[1.0, 1.0]]))
    b = nn.Parameter("b", np.zeros(1))
    out = nn.conv1d_maxpool(x, k, b)
    assert np.array_equal(out.data, [5.0])
    out.sum().backward()
    assert np.array_equal(k.grad, [[2.0, 3.0]])
    assert np.array_equal(x.grad, [0.0, 1.0, 1.0])
    assert np.array_equal(b.grad, [1.0])


def test_conv_pool_tie_goes_to_first_window():
    x = nn.Parameter("x", np.array([1.0, 0.0, 1.0]))
    k = nn.Parameter("k", np.array([[1.0]]))
    out = nn.conv1d_maxpool(x, k, nn.tensor(np.zeros(1)))
    assert np.array_equal(out.data, [1.0])
    out.sum().backward()
    assert np.array_equal(x.grad, [1.0, 0.0, 0.0])


def test_conv_pool_matches_bruteforce_on_random_cases():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        m = int(rng.integers(1, 6))
        h = int(rng.integers(1, n + 1))
        x = rng.normal(size=n)
        k = rng.normal(size=(m, h))
        b = rng.normal(size=m)
        got = nn.conv1d_maxpool(nn.tensor(x), nn.tensor(k), nn.tensor(b)).data
        assert np.allclose(got, conv_pool_oracle(x, k, b), atol=1e-12)


def test_conv_pool_rejects_short_sequence():
    with pytest.raises(ContractViolation):
        nn.conv1d_maxpool(nn.tensor(np.zeros(2)), nn.tensor(np.zeros((1, 3))), nn.tensor(np.zeros(1)))


# -- losses ----------------------------------------------------------------


def test_cross_entropy_closed_forms():
    assert nn.cross_entropy(np.array([1.0, 0.0]), 0) == pytest.approx(0.0)
    assert nn.cross_entropy(np.array([0.5, 0.5]), 1) == pytest.approx(math.log(2.0))
    # the clamp keeps an impossible label finite
    assert nn.cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))


def test_fused_softmax_ce_matches_composition():
    rng = np.random.default_rng(1)
    for label in (0, 1):
        z = rng.normal(size=2) * 5
        fused = nn.softmax_cross_entropy(nn.tensor(z), label)
        e = np.exp(z - z.max())
        want = -math.log(e[label] / e.sum())
        assert float(fused.data) == pytest.approx(want, abs=1e-12)


def test_fused_softmax_ce_gradient_is_p_minus_onehot():
    z = nn.Parameter("z", np.array([0.2, -1.3, 0.7]))
    loss = nn.softmax_cross_entropy(z, 2)
    loss.backward()
    e = np.exp(z.data - z.data.max())
    p = e / e.sum()
    want = p.copy()
    want[2] -= 1.0
    assert np.allclose(z.grad, want, atol=1e-12)


# -- dropout ---------------------------------------------------------------


def test_dropout_identity_when_not_training():
    x = nn.tensor(np.arange(5.0))
    out = nn.dropout(x, 0.6, np.random.default_rng(0), training=False)
    assert out is x


def test_dropout_preserves_expectation():
    # inverted scaling: E[mask * x / (1-p)] == x
    rng = np.random.default_rng(11)
    n = 400_000
    out = nn.dropout(nn.tensor(np.ones(n)), 0.6, rng, training=True)
    assert float(out.data.mean()) == pytest.approx(1.0, abs=0.01)
    kept = out.data[out.data != 0.0]
    assert np.allclose(kept, 1.0 / 0.4)


def test_dropout_backward_uses_same_mask():
    x = nn.Parameter("x", np.ones(1000))
    out = nn.dropout(x, 0.5, np.random.default_rng(2), training=True)
    out.sum().backward()
    assert np.array_equal(x.grad, out.data)  # both are the scaled mask


def test_dropout_probability_contract():
    rng = np.random.default_rng(0)
    for bad in (1.0, 1.5, -0.1):
        with pytest.raises(ContractViolation):
            nn.dropout(nn.tensor(np.ones(3)), bad, rng)


# -- optimiser -------------------------------------------------------------


def test_adam_first_step_closed_form():
    # With one step the bias corrections cancel: delta = lr*g/(|g|+eps),
    # so each coordinate moves by ~lr against the gradient sign.
    p = nn.Parameter("p", np.array([1.0, 2.0, -3.0]))
    p.grad = np.array([1.0, -1.0, 4.0])
    state = nn.AdamState(lr=0.001, beta1=0.9)
    nn.adam_step({"p": p}, state)
    assert np.allclose(p.data, [1.0 - 0.001, 2.0 + 0.001, -3.0 - 0.001], atol=1e-6)
    assert p.grad is None
    assert state.step == 1


def test_adam_zero_gradient_leaves_parameter_unchanged():
    p = nn.Parameter("p", np.array([5.0]))
    p.grad = np.zeros(1)
    nn.adam_step({"p": p}, state=nn.AdamState())
    assert np.array_equal(p.data, [5.0])


def test_adam_moments_tracked_per_parameter_name():
    a = nn.Parameter("a", np.zeros(2))
    b = nn.Parameter("b", np.zeros(3))
    a.grad = np.ones(2)
    b.grad = np.ones(3)
    state = nn.AdamState()
    nn.adam_step({"a": a, "b": b}, state)
    assert set(state.m) == {"a", "b"}
    assert state.m["a"].shape == (2,)
    assert state.m["b"].shape == (3,)


def test_glorot_uniform_bounds():
    rng = np.random.default_rng(0)
    w = nn.glorot_uniform(rng, (200, 300), fan_in=300, fan_out=200)
    limit = math.sqrt(6.0 / 500.0)
    assert np.all(np.abs(w) <= limit)
    assert abs(float(w.mean())) < limit / 10.0


# -- graph behaviour -------------------------------------------------------


def test_gradient_accumulates_over_reused_tensor():
    x = nn.Parameter("x", np.array(3.0))
    y = x * x  # dy/dx = 2x through two paths
    y.backward()
    assert float(x.grad) == pytest.approx(6.0)


def test_concat_routes_gradients_to_parts():
    a = nn.Parameter("a", np.array([1.0, 2.0]))
    b = nn.Parameter("b", np.array([3.0]))
    out = nn.concat([a, b])
    (out * nn.tensor(np.array([10.0, 20.0, 30.0]))).sum().backward()
    assert np.array_equal(a.grad, [10.0, 20.0])
    assert np.array_equal(b.grad, [30.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_always_a_distribution(values):
    p = nn.softmax(nn.tensor(np.array(values))).data
    assert np.all(p >= 0.0)
    assert float(p.sum()) == pytest.approx(1.0, abs=1e-9)
