import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from msreinflect.errors import IndexOutOfRange, NonDeterministicLoss, ShapeMismatch
from msreinflect.numerics import Parameter, Tape, Tensor, grad_check, softmax_array, zero_grads

STEP = 1e-5


def fd_check(build, arrays, rng, tol=1e-6):
    """Compare tape gradients of ``r . build(*inputs)`` with central differences.

    ``build(tape, *params)`` returns a tensor; ``r`` is a fixed random
    projection so every output entry contributes.
    """
    params = [Parameter(a.copy(), f"p{i}") for i, a in enumerate(arrays)]
    out_shape = build(Tape(record=False), *params).shape
    r = rng.normal(size=out_shape)

    def scalar():
        return float(np.sum(r * build(Tape(record=False), *params).value))

    tape = Tape()
    out = build(tape, *params)
    loss = tape.sum(tape.mul(out, Tensor(r)))
    tape.backward(loss)
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + STEP
            up = scalar()
            flat[i] = orig - STEP
            down = scalar()
            flat[i] = orig
            num = (up - down) / (2 * STEP)
            ana = p.grad.reshape(-1)[i]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
    assert worst < tol, worst


@pytest.fixture
def r():
    return np.random.default_rng(7)


# ---- affine ---------------------------------------------------------------


def test_affine_identity_and_constant():
    t = Tape(record=False)
    v = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(t.affine(Tensor(v), Tensor(np.eye(3)), Tensor(np.zeros(3))).value, v)
    c = np.array([4.0, 5.0])
    out = t.affine(Tensor(v), Tensor(np.zeros((2, 3))), Tensor(c))
    assert np.array_equal(out.value, c[None])


def test_affine_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Tape().affine(Tensor(np.ones((1, 3))), Tensor(np.ones((2, 4))))


def test_affine_backward(r):
    fd_check(lambda t, x, W, b: t.affine(x, W, b), [r.normal(size=(3, 4)), r.normal(size=(2, 4)), r.normal(size=2)], r)


def test_affine_batched_backward(r):
    fd_check(lambda t, x, W: t.affine(x, W), [r.normal(size=(2, 3, 4)), r.normal(size=(5, 4))], r)


# ---- elementwise ----------------------------------------------------------


def test_sigmoid_tanh_at_zero():
    t = Tape(record=False)
    assert t.sigmoid(Tensor([0.0])).value[0] == 0.5
    assert t.tanh(Tensor([0.0])).value[0] == 0.0


def test_sigmoid_extremes_are_finite():
    v = Tape(record=False).sigmoid(Tensor([-1000.0, 1000.0])).value
    assert np.all(np.isfinite(v)) and v[0] == 0.0 and v[1] == 1.0


def test_mul_by_zero_has_zero_gradient():
    x = Parameter(np.array([1.0, -2.0]), "x")
    t = Tape()
    out = t.mul(x, Tensor(np.zeros(2)))
    assert np.all(out.value == 0)
    t.backward(t.sum(out))
    assert np.all(x.grad == 0)


def test_binary_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Tape().add(Tensor(np.ones(2)), Tensor(np.ones(3)))
    with pytest.raises(ShapeMismatch):
        Tape().mul(Tensor(np.ones((2, 1))), Tensor(np.ones(2)))


@pytest.mark.parametrize("op", ["sigmoid", "tanh"])
def test_unary_backward(op, r):
    fd_check(lambda t, a: getattr(t, op)(a), [r.normal(size=(3, 4))], r)


@pytest.mark.parametrize("op", ["add", "mul"])
def test_binary_backward(op, r):
    fd_check(lambda t, a, b: getattr(t, op)(a, b), [r.normal(size=(3, 4)), r.normal(size=(3, 4))], r)


def test_interpolate_backward(r):
    fd_check(lambda t, z, a, b: t.interpolate(t.sigmoid(z), a, b), [r.normal(size=(2, 3)) for _ in range(3)], r)


def test_structural_backward(r):
    fd_check(lambda t, a, b: t.concat([a, b], axis=-1), [r.normal(size=(2, 3)), r.normal(size=(2, 2))], r)
    fd_check(lambda t, a, b: t.stack([a, b], axis=1), [r.normal(size=(2, 3)), r.normal(size=(2, 3))], r)
    fd_check(lambda t, a: t.take(a, 1, axis=1), [r.normal(size=(2, 3, 2))], r)
    fd_check(lambda t, a: t.take(a, slice(1, 3), axis=2), [r.normal(size=(2, 3, 4))], r)
    fd_check(lambda t, a: t.reshape(a, (3, 4)), [r.normal(size=(2, 6))], r)
    fd_check(lambda t, a: t.permute_rows(a, np.array([[2, 0, 1], [1, 1, 0]])), [r.normal(size=(2, 3, 2))], r)
    keep = np.array([True, False, True])
    fd_check(lambda t, a, b: t.where_rows(keep, a, b), [r.normal(size=(3, 2)), r.normal(size=(3, 2))], r)


def test_embed_backward_with_repeats(r):
    fd_check(lambda t, E: t.embed(E, [[0, 2, 2], [1, 0, 3]]), [r.normal(size=(4, 3))], r)


def test_embed_out_of_range():
    with pytest.raises(IndexOutOfRange):
        Tape().embed(Tensor(np.ones((3, 2))), [3])


# ---- softmax --------------------------------------------------------------


def test_softmax_examples():
    t = Tape(record=False)
    assert np.allclose(t.softmax(Tensor([0.0, 0.0])).value, [0.5, 0.5], atol=0, rtol=1e-15)
    assert np.allclose(t.softmax(Tensor([math.log(2), 0.0])).value, [2 / 3, 1 / 3], rtol=1e-14)
    big = t.softmax(Tensor([1000.0, 0.0])).value
    assert np.all(np.isfinite(big)) and big[0] == 1.0 and big[1] < 1e-300


def test_softmax_mask_gives_exact_zero():
    y = softmax_array(np.array([[1.0, 5.0, 2.0]]), np.array([[True, False, True]]))
    assert y[0, 1] == 0.0
    assert abs(y.sum() - 1.0) < 1e-15


def test_softmax_backward(r):
    fd_check(lambda t, z: t.softmax(z), [r.normal(size=(3, 5))], r)
    mask = np.array([[True, True, False, True], [False, True, True, True]])
    fd_check(lambda t, z: t.softmax(z, mask=mask), [r.normal(size=(2, 4))], r)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)), st.randoms(use_true_random=False))
def test_softmax_sums_to_one_and_is_equivariant(z, rnd):
    y = softmax_array(z)
    assert np.all(y >= 0) and abs(y.sum() - 1.0) < 1e-12
    perm = list(range(len(z)))
    rnd.shuffle(perm)
    # Equal up to summation-order rounding.
    assert np.max(np.abs(softmax_array(z[perm]) - y[perm])) <= 1e-15


# ---- cross entropy --------------------------------------------------------


def test_cross_entropy_uniform_and_limit():
    t = Tape(record=False)
    for gold in range(4):
        assert abs(float(t.cross_entropy(Tensor(np.zeros(4)), gold).value) - math.log(4)) < 1e-15
    assert float(t.cross_entropy(Tensor([50.0, 0.0, 0.0]), 0).value) < 1e-20


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    z = Parameter(np.array([0.3, -1.0, 2.0]), "z")
    t = Tape()
    t.backward(t.cross_entropy(z, 1))
    expect = softmax_array(np.array([0.3, -1.0, 2.0]))
    expect[1] -= 1
    assert np.allclose(z.grad, expect, rtol=1e-14, atol=1e-16)


def test_cross_entropy_backward(r):
    gold = np.array([0, 3, 1])
    w = np.array([0.5, 1.0, 2.0])
    fd_check(lambda t, z: t.cross_entropy(z, gold, w), [r.normal(size=(3, 4))], r)


def test_cross_entropy_bad_gold():
    with pytest.raises(IndexOutOfRange):
        Tape().cross_entropy(Tensor(np.zeros(3)), 3)


# ---- attention ops --------------------------------------------------------


def test_additive_scores_backward(r):
    fd_check(lambda t, q, k, v: t.additive_scores(q, k, v),
             [r.normal(size=(2, 3)), r.normal(size=(2, 4, 3)), r.normal(size=3)], r)


def test_weighted_sum_backward(r):
    fd_check(lambda t, w, v: t.weighted_sum(w, v), [r.normal(size=(2, 4)), r.normal(size=(2, 4, 3))], r)


# ---- accumulation and gradient checking -----------------------------------


def test_two_backward_passes_accumulate_exactly_twice(r):
    W = Parameter(r.normal(size=(3, 3)), "W")
    x = r.normal(size=(2, 3))

    def run():
        t = Tape()
        t.backward(t.sum(t.tanh(t.affine(Tensor(x), W))))

    run()
    once = W.grad.copy()
    run()
    assert np.array_equal(W.grad, 2 * once)
    zero_grads([W])
    assert np.all(W.grad == 0)
    zero_grads([W])
    assert np.all(W.grad == 0)


def test_backward_needs_scalar():
    t = Tape()
    with pytest.raises(ShapeMismatch):
        t.backward(t.tanh(Parameter(np.ones(2), "a")))


def test_grad_check_quadratic(r):
    theta = Parameter(r.normal(size=5), "theta")
    err = grad_check(lambda t: t.mul(t.sum(t.mul(theta, theta)), Tensor(0.5)), [theta])
    assert err < 1e-9


def test_grad_check_negative_control(r):
    theta = Parameter(r.normal(size=4), "theta")

    def wrong(t):
        # Correct value, backward scaled by 3.
        y = t.sum(t.mul(theta, theta))
        out = t._out(y.value, (y,))
        return t._push(out, lambda g: y._accumulate(3 * g))

    assert grad_check(wrong, [theta]) > 1e-2


def test_grad_check_detects_nondeterminism():
    theta = Parameter(np.ones(2), "theta")
    calls = iter(range(100))

    def noisy(t):
        return t.sum(t.mul(theta, Tensor(np.full(2, 1.0 + next(calls)))))

    with pytest.raises(NonDeterministicLoss):
        grad_check(noisy, [theta])


def test_grad_check_restores_values(r):
    v = r.normal(size=3)
    theta = Parameter(v.copy(), "theta")
    grad_check(lambda t: t.sum(t.tanh(theta)), [theta])
    assert np.array_equal(theta.value, v)
