import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aamtsa import autodiff as ad
from aamtsa.autodiff import Parameter, Tensor


def naive_matmul(a, b):
    n, m = a.shape
    m2, p = b.shape
    assert m == m2
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            s = 0.0
            for k in range(m):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


# ---------------------------------------------------------------- linear

def test_linear_identity():
    y = ad.linear(Tensor([1.0, 2.0]), Tensor(np.eye(2)), Tensor([0.0, 0.0]))
    np.testing.assert_array_equal(y.data, [1.0, 2.0])


def test_linear_all_ones():
    y = ad.linear(Tensor([1.0, 1.0]), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(y.data, [2.0, 2.0])


def test_linear_matches_triple_loop():
    rng = np.random.default_rng(3)
    x, W, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=2)
    y = ad.linear(Tensor(x), Tensor(W), Tensor(b))
    np.testing.assert_allclose(y.data, naive_matmul(x, W) + b, atol=1e-12, rtol=0)


def test_linear_shape_mismatch():
    with pytest.raises(ValueError):
        ad.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


# ---------------------------------------------------------------- softmax

def test_softmax_symmetric():
    np.testing.assert_allclose(ad.softmax_lastdim(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_exact_ratios():
    p = ad.softmax_lastdim(Tensor(np.log([1.0, 2.0, 3.0]))).data
    np.testing.assert_allclose(p, [1 / 6, 1 / 3, 1 / 2], atol=1e-15)


def test_softmax_no_overflow():
    # exp(-1000) underflows to exactly 0 in float64; [1, 0] is the exact limit
    p = ad.softmax_lastdim(Tensor([1000.0, 0.0])).data
    hi = 1.0 / (1.0 + math.exp(-1000.0))
    assert abs(p[0] - hi) < 1e-15 and p[1] < 1e-300


def test_softmax_empty_last_dim():
    with pytest.raises(ValueError):
        ad.softmax_lastdim(Tensor(np.zeros((2, 0))))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3))
def test_softmax_rows_and_shift(seed, c):
    x = np.random.default_rng(seed).normal(scale=5, size=(4, 7))
    p = ad.softmax_lastdim(Tensor(x)).data
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-9)
    np.testing.assert_allclose(ad.softmax_lastdim(Tensor(x + c)).data, p, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- layer norm

def test_layer_norm_constant_slice():
    y = ad.layer_norm(Tensor(np.full(5, 3.0)), Tensor(np.ones(5)), Tensor(np.zeros(5)))
    np.testing.assert_array_equal(y.data, np.zeros(5))


def test_layer_norm_already_normalised():
    y = ad.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)
    np.testing.assert_allclose(y.data, [1.0, -1.0], atol=1e-15)


def test_layer_norm_two_pass_oracle():
    rng = np.random.default_rng(5)
    x, g, b = rng.normal(size=9), rng.normal(size=9), rng.normal(size=9)
    mean = sum(x) / 9
    var = sum((xi - mean) ** 2 for xi in x) / 9
    expect = [(xi - mean) / math.sqrt(var + 1e-5) * gi + bi for xi, gi, bi in zip(x, g, b)]
    y = ad.layer_norm(Tensor(x), Tensor(g), Tensor(b))
    np.testing.assert_allclose(y.data, expect, atol=1e-12, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_layer_norm_moments(seed):
    x = np.random.default_rng(seed).normal(loc=3.0, scale=4.0, size=(3, 16))
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=0.0).data
    assert np.abs(y.mean(-1)).max() < 1e-9
    assert np.abs(y.var(-1) - 1).max() < 1e-6


# ---------------------------------------------------------------- gelu / concat / CE

def test_gelu_values():
    assert ad.gelu(Tensor(0.0)).data == 0.0
    assert abs(ad.gelu(Tensor(-10.0)).data) < 1e-8
    # Phi(1) = 0.5 * (1 + erf(1/sqrt 2))
    assert abs(ad.gelu(Tensor(1.0)).data - 0.5 * (1 + math.erf(1 / math.sqrt(2)))) < 1e-15
    assert abs(ad.gelu(Tensor(1.0)).data - 0.841345) < 1e-6


def test_concat_values_and_identity():
    np.testing.assert_array_equal(ad.concat_lastdim([Tensor([1.0, 2.0]), Tensor([3.0])]).data,
                                  [1.0, 2.0, 3.0])
    x = Tensor([[1.0, 2.0]])
    np.testing.assert_array_equal(ad.concat_lastdim([x, Tensor(np.zeros((1, 0)))]).data, x.data)


def test_concat_split_round_trip():
    x = np.random.default_rng(1).normal(size=(2, 3, 7))
    parts = ad.split_lastdim(Tensor(x), [2, 4, 1])
    np.testing.assert_array_equal(ad.concat_lastdim(parts).data, x)


def test_concat_incompatible():
    with pytest.raises(ValueError):
        ad.concat_lastdim([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))])


def test_cross_entropy_uniform():
    loss = ad.cross_entropy(Tensor(np.zeros((3, 8))), [0, 4, 7])
    assert abs(loss.item() - math.log(8)) < 1e-12
    assert abs(loss.item() - 2.07944) < 1e-5


def test_cross_entropy_saturated():
    z = np.zeros((1, 8))
    z[0, 2] = 1e6
    assert ad.cross_entropy(Tensor(z), [2]).item() < 1e-12


def test_cross_entropy_lse_oracle():
    rng = np.random.default_rng(8)
    z = rng.normal(size=(4, 8))
    t = rng.integers(0, 8, size=4)
    per = [math.log(sum(math.exp(v) for v in row)) - row[ti] for row, ti in zip(z, t)]
    assert abs(ad.cross_entropy(Tensor(z), t).item() - sum(per) / 4) < 1e-10
    assert abs(ad.cross_entropy(Tensor(z), t, reduction="sum").item() - sum(per)) < 1e-10


def test_cross_entropy_bad_target():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor(np.zeros((1, 8))), [8])


# ---------------------------------------------------------------- backward

def test_backward_linear_scalar():
    x = Parameter(np.array(3.0))
    ad.backward(ad.scale(x, 2.0))
    assert x.grad == 2.0


def test_backward_ce_closed_form():
    z = Parameter(np.zeros((1, 8)))
    ad.backward(ad.cross_entropy(z, [3]))
    expect = np.full(8, 1 / 8)
    expect[3] -= 1
    np.testing.assert_allclose(z.grad[0], expect, atol=1e-15)


def test_backward_non_scalar_root():
    x = Parameter(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(ad.scale(x, 2.0))


def test_shared_parameter_accumulates():
    rng = np.random.default_rng(0)
    w = Parameter(rng.normal(size=(3, 3)))
    x = Tensor(rng.normal(size=(2, 3)))
    y = ad.sum_all(ad.linear(x, w)) + ad.sum_all(ad.mul(ad.linear(x, w), ad.linear(x, w)))
    ad.backward(y)
    # d/dW [sum(xW) + sum((xW)^2)] = x^T (1 + 2 xW)
    np.testing.assert_allclose(w.grad, x.data.T @ (1 + 2 * x.data @ w.data), atol=1e-12)


def test_retained_graph_accumulates_twice():
    x = Parameter(np.array([1.0, 2.0]))
    y = ad.sum_all(ad.mul(x, x))
    ad.backward(y)
    ad.backward(y)
    np.testing.assert_allclose(x.grad, 4 * x.data)


def test_trace_visits_in_insertion_order():
    x = Parameter(np.ones(2))
    a = ad.scale(x, 2.0)
    b = ad.mul(a, a)
    c = ad.sum_all(b)
    nodes = ad.trace(c)
    assert [n.op for n in nodes] == ["scale", "mul", "sum"]
    assert [n.seq for n in nodes] == sorted(n.seq for n in nodes)


def test_no_grad_records_nothing():
    x = Parameter(np.ones(2))
    with ad.no_grad():
        y = ad.scale(x, 2.0)
    assert y.node is None


def test_non_finite_is_error():
    with pytest.raises(ad.NonFiniteError):
        ad.mul(Tensor([np.inf]), Tensor([1.0]))


def test_zero_grad():
    p = Parameter(np.ones(3))
    ad.backward(ad.sum_all(p))
    p.zero_grad()
    np.testing.assert_array_equal(p.grad, 0.0)


def test_rng_determinism():
    a = ad.xavier_uniform(ad.make_rng(0), 4, 5)
    b = ad.xavier_uniform(ad.make_rng(0), 4, 5)
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- grad_check

def test_grad_check_quadratic():
    th = Parameter(np.array([0.3, -1.2, 2.0]))
    rep = ad.grad_check(lambda: ad.scale(ad.sum_all(ad.mul(th, th)), 0.5), [th])
    assert rep.passed and rep.max_rel_err < 1e-9


def _rand(rng, *shape):
    return Parameter(rng.normal(size=shape))


PRIMITIVES = {
    "linear": lambda r: (lambda x, W, b: ad.linear(x, W, b), [_rand(r, 3, 4), _rand(r, 4, 2), _rand(r, 2)]),
    "matmul": lambda r: (ad.matmul, [_rand(r, 2, 3, 4), _rand(r, 4, 5)]),
    "add_bcast": lambda r: (ad.add, [_rand(r, 2, 3, 4), _rand(r, 1, 4)]),
    "sub": lambda r: (ad.sub, [_rand(r, 3, 4), _rand(r, 4)]),
    "mul_bcast": lambda r: (ad.mul, [_rand(r, 2, 3, 1), _rand(r, 3, 4)]),
    "softmax": lambda r: (ad.softmax_lastdim, [_rand(r, 3, 5)]),
    "layer_norm": lambda r: (ad.layer_norm, [_rand(r, 2, 3, 6), _rand(r, 6), _rand(r, 6)]),
    "gelu": lambda r: (ad.gelu, [_rand(r, 4, 3)]),
    "concat": lambda r: (lambda a, b: ad.concat_lastdim([a, b]), [_rand(r, 2, 3), _rand(r, 2, 2)]),
    "getitem": lambda r: (lambda a: a[:, 0, :], [_rand(r, 2, 3, 4)]),
    "transpose": lambda r: (ad.transpose, [_rand(r, 2, 3, 4)]),
    "reshape": lambda r: (lambda a: ad.reshape(a, (4, 6)), [_rand(r, 2, 3, 4)]),
    "sum_axis": lambda r: (lambda a: ad.sum_axis(a, 1), [_rand(r, 2, 3, 4)]),
    "embedding": lambda r: (lambda t: ad.embedding(t, [2, 0, 2]), [_rand(r, 4, 3)]),
    "attention1": lambda r: (ad.attention, [_rand(r, 2, 3, 4), _rand(r, 2, 5, 4), _rand(r, 2, 5, 4)]),
    "attention2": lambda r: (lambda q, k, v: ad.attention(q, k, v, n_heads=2),
                             [_rand(r, 2, 3, 4), _rand(r, 2, 3, 4), _rand(r, 2, 3, 4)]),
    "cross_entropy": lambda r: (lambda z: ad.cross_entropy(z, [1, 0, 7]), [_rand(r, 3, 8)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_many_seeds(name):
    for seed in range(50):
        rng = np.random.default_rng(seed)
        fn, params = PRIMITIVES[name](rng)
        # random projection makes every output coordinate matter
        out_shape = fn(*params).shape
        w = Tensor(rng.normal(size=out_shape))

        def f():
            return ad.sum_all(ad.mul(fn(*params), w))

        rep = ad.grad_check(f, params, h=1e-5, tol=1e-4)
        assert rep.passed, (name, seed, rep)


def test_attention_matches_composed_oracle():
    rng = np.random.default_rng(2)
    q, k, v = rng.normal(size=(3, 6)), rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
    s = q @ k.T / math.sqrt(6)
    p = np.exp(s - s.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    out = ad.attention(Tensor(q), Tensor(k), Tensor(v))
    np.testing.assert_allclose(out.data, p @ v, atol=1e-12)
