import math

import numpy as np
import pytest

from cmsenti.errors import ShapeError, ValidationError
from cmsenti.numeric import (
    AdamState,
    Tensor,
    adam_step,
    add,
    backward,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding,
    layer_norm,
    linear,
    matmul,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scale,
    set_finite_check,
    sigmoid,
    softmax,
    sub,
    tanh,
    tape,
    timestep,
    transpose,
)

from gradcheck import finite_difference_grads, rel_error

RNG = np.random.default_rng(20240)


def leaf(shape, rng=None, lo=-1.0, hi=1.0):
    rng = rng or RNG
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def check_op(build_loss, tensors, tol=1e-3):
    """Analytic grads via the tape vs the finite-difference oracle."""
    for t in tensors:
        t.zero_grad()
    with tape():
        loss = build_loss()
        backward(loss)
    analytic = [t.grad.copy() for t in tensors]
    numeric = finite_difference_grads(lambda: float(build_loss().data), tensors)
    for a, n in zip(analytic, numeric):
        assert rel_error(a, n) < tol


def weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return reduce_sum(mul(t, constant(w)))


# --- hand cases -------------------------------------------------------------


def test_linear_identity():
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    w = Tensor(np.eye(2))
    b = Tensor([0.0, 0.0])
    assert np.allclose(linear(x, w, b).data, x.data)


def test_linear_hand_case():
    x = Tensor([[1.0, 2.0]])
    w = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([0.0, 0.0])
    assert np.allclose(linear(x, w, b).data, [[7.0, 10.0]])


def test_linear_shape_error_names_both_shapes():
    x = Tensor(np.zeros((2, 3)))
    w = Tensor(np.zeros((4, 5)))
    with pytest.raises(ShapeError) as e:
        linear(x, w, Tensor(np.zeros(5)))
    assert "(2, 3)" in str(e.value) and "(4, 5)" in str(e.value)


def test_softmax_uniform():
    out = softmax(Tensor([0.0, 0.0, 0.0, 0.0]), axis=-1)
    assert np.allclose(out.data, [0.25, 0.25, 0.25, 0.25])


def test_softmax_against_scalar_oracle():
    # independent 64-bit oracle for the [1,2,3] case
    x = np.array([1.0, 2.0, 3.0], dtype=np.float64)
    e = np.exp(x)
    expected = e / e.sum()
    out = softmax(Tensor(x), axis=-1)
    assert np.allclose(out.data, expected, atol=1e-6)
    assert np.allclose(out.data, [0.0900, 0.2447, 0.6652], atol=5e-4)


def test_softmax_shift_invariance():
    x = RNG.normal(size=(4, 7))
    a = softmax(Tensor(x), axis=-1).data
    b = softmax(Tensor(x + 123.456), axis=-1).data
    assert np.allclose(a, b, atol=1e-6)


def test_softmax_rows_are_distributions():
    x = RNG.normal(size=(8, 11)) * 5
    out = softmax(Tensor(x), axis=-1).data
    assert np.all(out > 0) and np.all(out < 1)
    assert np.allclose(out.sum(axis=-1), 1.0, atol=1e-6)


def test_layer_norm_constant_slice_is_zero():
    x = Tensor(np.full((3, 4), 7.0))
    out = layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    assert np.allclose(out.data, 0.0)


def test_layer_norm_hand_case():
    out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-5)
    # mean 2, var 1 -> (x - 2) / sqrt(1 + 1e-5)
    assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-4)


def test_layer_norm_standardizes():
    x = Tensor(RNG.normal(size=(5, 64)) * 3 + 2)
    out = layer_norm(x, Tensor(np.ones(64)), Tensor(np.zeros(64))).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-5)
    assert np.allclose(out.var(axis=-1), 1.0, atol=1e-3)


def test_cross_entropy_uniform_logits():
    logits = Tensor(np.zeros((4, 2)))
    loss = cross_entropy(logits, np.array([0, 1, 0, 1]))
    assert math.isclose(float(loss.data), math.log(2), rel_tol=1e-6)


def test_cross_entropy_confident_case():
    # scalar oracle: -log sigmoid(20)
    expected = -math.log(1.0 / (1.0 + math.exp(-20.0)))
    loss = cross_entropy(Tensor([[10.0, -10.0]]), np.array([0]))
    assert math.isclose(float(loss.data), expected, rel_tol=1e-2)
    assert float(loss.data) < 1e-8


def test_cross_entropy_limit_to_zero():
    losses = [
        float(cross_entropy(Tensor([[s, 0.0, 0.0]]), np.array([0])).data)
        for s in (1.0, 5.0, 20.0)
    ]
    assert losses[0] > losses[1] > losses[2]
    assert losses[2] < 1e-7


def test_cross_entropy_rejects_bad_target():
    with pytest.raises(ValidationError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_matmul_inner_dim_check():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with tape():
        y = mul(x, x)
        with pytest.raises(ValidationError):
            backward(y)


def test_backward_sum_of_squares_exact():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    with tape():
        loss = reduce_sum(mul(x, x))
        backward(loss)
    assert np.array_equal(x.grad, np.array([2.0, -4.0, 6.0], dtype=np.float32))


def test_backward_multiple_uses_accumulate():
    # f(x) = sum(x*x + 3x): symbolic gradient 2x + 3
    x = Tensor([0.5, -1.5], requires_grad=True)
    with tape():
        loss = reduce_sum(add(mul(x, x), scale(x, 3.0)))
        backward(loss)
    assert np.allclose(x.grad, 2 * x.data + 3, atol=1e-6)


def test_tape_cleared_after_backward():
    x = Tensor([1.0], requires_grad=True)
    with tape() as t:
        loss = reduce_sum(mul(x, x))
        backward(loss)
        assert len(t) == 0


# --- finite-difference checks, one per differentiable op --------------------


def test_grad_add_sub_mul_broadcast():
    rng = np.random.default_rng(1)
    a = leaf((3, 4), rng)
    b = leaf((4,), rng)
    w = rng.normal(size=(3, 4))
    check_op(lambda: weighted_sum(add(a, b), w), [a, b])
    check_op(lambda: weighted_sum(sub(a, b), w), [a, b])
    check_op(lambda: weighted_sum(mul(a, b), w), [a, b])


def test_grad_scale():
    rng = np.random.default_rng(2)
    a = leaf((5,), rng)
    w = rng.normal(size=(5,))
    check_op(lambda: weighted_sum(scale(a, -2.5), w), [a])


def test_grad_matmul_batched():
    rng = np.random.default_rng(3)
    a = leaf((2, 3, 4), rng)
    b = leaf((2, 4, 5), rng)
    w = rng.normal(size=(2, 3, 5))
    check_op(lambda: weighted_sum(matmul(a, b), w), [a, b])


def test_grad_matmul_broadcast_rhs():
    rng = np.random.default_rng(4)
    a = leaf((2, 3, 4), rng)
    b = leaf((4, 5), rng)
    w = rng.normal(size=(2, 3, 5))
    check_op(lambda: weighted_sum(matmul(a, b), w), [a, b])


def test_grad_linear():
    rng = np.random.default_rng(5)
    x = leaf((2, 3, 4), rng)
    wt = leaf((4, 6), rng)
    b = leaf((6,), rng)
    w = rng.normal(size=(2, 3, 6))
    check_op(lambda: weighted_sum(linear(x, wt, b), w), [x, wt, b])


def test_grad_relu_away_from_kink():
    rng = np.random.default_rng(6)
    vals = rng.uniform(0.1, 1.0, size=(4, 4)) * rng.choice([-1.0, 1.0], size=(4, 4))
    x = Tensor(vals, requires_grad=True)
    w = rng.normal(size=(4, 4))
    check_op(lambda: weighted_sum(relu(x), w), [x])


def test_grad_sigmoid_tanh():
    rng = np.random.default_rng(7)
    x = leaf((3, 3), rng, -2, 2)
    w = rng.normal(size=(3, 3))
    check_op(lambda: weighted_sum(sigmoid(x), w), [x])
    check_op(lambda: weighted_sum(tanh(x), w), [x])


def test_grad_softmax():
    rng = np.random.default_rng(8)
    x = leaf((3, 5), rng, -2, 2)
    w = rng.normal(size=(3, 5))
    check_op(lambda: weighted_sum(softmax(x, axis=-1), w), [x])


def test_grad_layer_norm():
    rng = np.random.default_rng(9)
    x = leaf((2, 3, 6), rng, -2, 2)
    g = leaf((6,), rng, 0.5, 1.5)
    b = leaf((6,), rng)
    w = rng.normal(size=(2, 3, 6))
    check_op(lambda: weighted_sum(layer_norm(x, g, b), w), [x, g, b])


def test_grad_cross_entropy():
    rng = np.random.default_rng(10)
    x = leaf((6, 5), rng, -2, 2)
    targets = rng.integers(0, 5, size=6)
    check_op(lambda: cross_entropy(x, targets), [x])


def test_grad_cross_entropy_weighted():
    rng = np.random.default_rng(11)
    x = leaf((6, 4), rng, -2, 2)
    targets = rng.integers(0, 4, size=6)
    weights = np.array([1.0, 0.0, 2.0, 1.0, 0.0, 0.5])
    check_op(lambda: cross_entropy(x, targets, weights), [x])


def test_grad_dropout_fixed_mask():
    rng = np.random.default_rng(12)
    x = leaf((8, 8), rng)
    w = rng.normal(size=(8, 8))

    def loss():
        drop_rng = np.random.default_rng(99)  # same mask every call
        return weighted_sum(dropout(x, 0.4, True, drop_rng), w)

    check_op(loss, [x])


def test_grad_embedding():
    rng = np.random.default_rng(13)
    table = leaf((7, 4), rng)
    ids = np.array([[0, 3, 3], [6, 1, 0]])
    w = rng.normal(size=(2, 3, 4))
    check_op(lambda: weighted_sum(embedding(table, ids), w), [table])


def test_grad_concat_reshape_transpose_timestep():
    rng = np.random.default_rng(14)
    a = leaf((2, 3, 4), rng)
    b = leaf((2, 3, 2), rng)
    w = rng.normal(size=(2, 3, 6))
    check_op(lambda: weighted_sum(concat([a, b], axis=-1), w), [a, b])

    c = leaf((2, 6), rng)
    w2 = rng.normal(size=(3, 4))
    check_op(lambda: weighted_sum(reshape(c, (3, 4)), w2), [c])

    d = leaf((2, 3, 4), rng)
    w3 = rng.normal(size=(3, 2, 4))
    check_op(lambda: weighted_sum(transpose(d, (1, 0, 2)), w3), [d])

    e = leaf((2, 5, 3), rng)
    w4 = rng.normal(size=(2, 3))
    check_op(lambda: weighted_sum(timestep(e, 2), w4), [e])


def test_grad_reductions():
    rng = np.random.default_rng(15)
    x = leaf((3, 4), rng)
    w = rng.normal(size=(4,))
    check_op(lambda: weighted_sum(reduce_sum(x, axis=0), w), [x])
    check_op(lambda: weighted_sum(reduce_mean(x, axis=0), w), [x])
    check_op(lambda: reduce_mean(x), [x])


# --- dropout ----------------------------------------------------------------


def test_dropout_inference_identity():
    x = Tensor(RNG.normal(size=(10, 10)))
    out = dropout(x, 0.5, training=False)
    assert out is x


def test_dropout_p_zero_identity():
    x = Tensor(RNG.normal(size=(10,)))
    assert dropout(x, 0.0, training=True, rng=np.random.default_rng(0)) is x


def test_dropout_rejects_p_one():
    with pytest.raises(ValidationError):
        dropout(Tensor(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))


def test_dropout_survivor_statistics():
    n = 100_000
    x = Tensor(np.ones(n))
    out = dropout(x, 0.5, training=True, rng=np.random.default_rng(77))
    survivors = out.data != 0
    frac = survivors.mean()
    assert abs(frac - 0.5) < 0.01
    assert np.allclose(out.data[survivors], 2.0)


# --- adam -------------------------------------------------------------------


def test_adam_zero_grad_fresh_state_no_change():
    p = Tensor([1.0, 2.0], requires_grad=True)
    p.grad = np.zeros(2, dtype=np.float32)
    before = p.data.copy()
    state = AdamState.for_params([p], lr=0.1)
    adam_step([p], state)
    assert np.array_equal(p.data, before)
    assert p.grad is None
    assert state.t == 1


def test_adam_hand_case():
    # bias-corrected first step: m_hat = v_hat = 1 -> p -= lr / (1 + eps)
    p = Tensor([1.0], requires_grad=True)
    p.grad = np.array([1.0], dtype=np.float32)
    state = AdamState.for_params([p], lr=0.0005)
    adam_step([p], state)
    assert math.isclose(float(p.data[0]), 1.0 - 0.0005 / (1.0 + 1e-8), rel_tol=1e-6)
    assert math.isclose(float(p.data[0]), 0.9995, abs_tol=1e-7)


def test_adam_lr_zero_bit_identical():
    p = Tensor(RNG.normal(size=(4, 4)), requires_grad=True)
    before = p.data.copy()
    state = AdamState.for_params([p], lr=0.0)
    for _ in range(5):
        p.grad = RNG.normal(size=(4, 4)).astype(np.float32)
        adam_step([p], state)
    assert np.array_equal(p.data, before)


def test_adam_deterministic_across_runs():
    def run():
        rng = np.random.default_rng(21)
        p = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        state = AdamState.for_params([p], lr=0.01)
        for _ in range(10):
            p.grad = rng.normal(size=(3, 3)).astype(np.float32)
            adam_step([p], state)
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_adam_shape_mismatch():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    state = AdamState.for_params([p], lr=0.1)
    p.grad = np.zeros(3, dtype=np.float32)
    with pytest.raises(ShapeError):
        adam_step([p], state)


# --- finite guard -----------------------------------------------------------


def test_finite_check_mode_catches_nan():
    set_finite_check(True)
    try:
        bad = Tensor([np.inf, 1.0])
        ok = Tensor([1.0, 1.0])
        with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
            sub(bad, bad)  # inf - inf -> nan
        add(ok, ok)
    finally:
        set_finite_check(False)
