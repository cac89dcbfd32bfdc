"""Dense float64 tensors with reverse-mode differentiation.

Every differentiable primitive the model needs lives here. Ops record a
:class:`Node` on their output whenever an input requires a gradient; the
node's sequence number is its insertion order, and :func:`backward` walks
the reachable nodes in reverse insertion order, visiting each exactly once.

Graph policy: the graph is *retained* after :func:`backward`. Calling it
again on the same root accumulates a second copy of every gradient into the
leaves. Intermediate gradients live only for the duration of the call.
"""

from __future__ import annotations

import contextlib
import itertools
import math

import numpy as np
from scipy.special import erf

DTYPE = np.float64

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_seq = itertools.count()
_grad_enabled = True


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class Node:
    __slots__ = ("op", "inputs", "backward_fn", "seq")

    def __init__(self, op, inputs, backward_fn):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.seq = next(_seq)

    def __repr__(self):
        return f"Node({self.op!r}, seq={self.seq})"


class Tensor:
    """An immutable value plus, for op outputs, the node that produced it."""

    __slots__ = ("data", "node", "requires_grad", "grad", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.node = None
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad_fn={self.node.op if self.node else None})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


class Parameter(Tensor):
    """A named leaf tensor whose gradient accumulates across backward calls."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled():
    return _grad_enabled


def _make(op, data, inputs, backward_fn):
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op, inputs, backward_fn)
    else:
        out.requires_grad = False
        out.node = None
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return _make("scale", x.data * c, (x,), lambda g: (g * c,))


def gelu(x):
    """x * Phi(x) with the exact erf form of the normal CDF."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return _make("gelu", xd * cdf, (x,), backward)


# ---------------------------------------------------------------- reductions

def sum_all(x):
    x = as_tensor(x)
    shape = x.shape
    return _make("sum", np.asarray(x.data.sum()), (x,),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x):
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return _make("mean", np.asarray(x.data.mean()), (x,),
                 lambda g: (np.full(shape, float(g) / n),))


def sum_axis(x, axis):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make("sum_axis", x.data.sum(axis=axis), (x,), backward)


# ---------------------------------------------------------------- shape ops

def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    inv = np.argsort(axes)
    return _make("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x, index):
    x = as_tensor(x)
    shape = x.shape

    idx = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in idx)

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return _make("getitem", np.array(x.data[index]), (x,), backward)


def concat(xs, axis=-1):
    """Concatenate along ``axis``; zero-width members are allowed."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("concat needs at least one tensor")
    nd = xs[0].ndim
    ax = axis % nd
    lead = [x.shape[:ax] + x.shape[ax + 1:] for x in xs]
    if any(x.ndim != nd for x in xs) or any(s != lead[0] for s in lead):
        raise ValueError(f"concat: incompatible shapes {[x.shape for x in xs]} on axis {axis}")
    widths = [x.shape[ax] for x in xs]
    cuts = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _make("concat", np.concatenate([x.data for x in xs], axis=ax), tuple(xs), backward)


def concat_lastdim(xs):
    return concat(xs, axis=-1)


def split_lastdim(x, widths):
    """Inverse of :func:`concat_lastdim` for the given widths."""
    out, start = [], 0
    for w in widths:
        out.append(getitem(x, (Ellipsis, slice(start, start + w))))
        start += w
    return out


def embedding(table, ids):
    """Row lookup ``table[ids]`` with scatter-add backward."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding id out of range [0, {n}): {ids.min()}..{ids.max()}")
    shape = table.shape

    def backward(g):
        out = np.zeros(shape, dtype=DTYPE)
        np.add.at(out, ids, g)
        return (out,)

    return _make("embedding", table.data[ids], (table,), backward)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """Batched ``a @ b`` with numpy broadcasting over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ValueError(f"matmul: inner dims disagree {ad.shape} @ {bd.shape}")

    def backward(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make("matmul", ad @ bd, (a, b), backward)


def linear(x, W, b=None):
    """``x @ W + b`` over the last axis of ``x``."""
    x, W = as_tensor(x), as_tensor(W)
    xd, Wd = x.data, W.data
    if xd.shape[-1] != Wd.shape[0]:
        raise ValueError(f"linear: input width {xd.shape[-1]} != weight rows {Wd.shape[0]}")
    y = xd @ Wd
    inputs = (x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (Wd.shape[1],):
            raise ValueError(f"linear: bias shape {b.shape} != ({Wd.shape[1]},)")
        y = y + b.data
        inputs = (x, W, b)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ Wd.T
        gW = xd.reshape(-1, xd.shape[-1]).T @ g2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    return _make("linear", y, inputs, backward)


# ---------------------------------------------------------------- normalisers

def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_lastdim(x):
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("softmax over an empty last dimension")
    p = _softmax(x.data)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make("softmax", p, (x,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise the last axis with biased variance, then ``gamma*xhat + beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    d = xd.shape[-1]
    if d < 1:
        raise ValueError("layer_norm needs d >= 1")
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def backward(g):
        gxhat = g * gd
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        return (gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0))

    return _make("layer_norm", xhat * gd + beta.data, (x, gamma, beta), backward)


def attention(q, k, v, n_heads=1, weights_out=None):
    """Multi-head scaled dot-product attention, heads split over the last axis.

    ``q`` is ``[..., Tq, d]``, ``k``/``v`` are ``[..., Tk, d]``. Each head of
    width ``d/n_heads`` is scaled by ``1/sqrt(d/n_heads)``. If ``weights_out``
    is a list, the ``[..., heads, Tq, Tk]`` attention weights are appended.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"attention: shape mismatch q{q.shape} k{k.shape} v{v.shape}")
    if d % n_heads:
        raise ValueError(f"attention: width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    inv_scale = 1.0 / math.sqrt(dh)

    def heads(a):
        return np.swapaxes(a.reshape(a.shape[:-1] + (n_heads, dh)), -2, -3)

    def merge(a):
        a = np.swapaxes(a, -2, -3)
        return a.reshape(a.shape[:-2] + (d,))

    qh, kh, vh = heads(q.data), heads(k.data), heads(v.data)
    p = _softmax((qh @ np.swapaxes(kh, -1, -2)) * inv_scale)
    if weights_out is not None:
        weights_out.append(p)

    def backward(g):
        gh = heads(g)
        gv = np.swapaxes(p, -1, -2) @ gh
        gp = gh @ np.swapaxes(vh, -1, -2)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * inv_scale
        gq = gs @ kh
        gk = np.swapaxes(gs, -1, -2) @ qh
        return (_unbroadcast(merge(gq), q.shape), _unbroadcast(merge(gk), k.shape),
                _unbroadcast(merge(gv), v.shape))

    return _make("attention", merge(p @ vh), (q, k, v), backward)


def cross_entropy(logits, targets, reduction="mean"):
    """Softmax cross-entropy against integer class targets.

    ``reduction="sum"`` gives the batch-summed form; ``"mean"`` divides by B.
    """
    logits = as_tensor(logits)
    z = logits.data
    if z.ndim != 2:
        raise ValueError(f"cross_entropy expects [B, C] logits, got {z.shape}")
    B, C = z.shape
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != B:
        raise ValueError(f"cross_entropy: {t.shape[0]} targets for batch of {B}")
    if t.size and (t.min() < 0 or t.max() >= C):
        raise ValueError(f"cross_entropy: target out of range [0, {C})")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1))
    nll = lse - zs[np.arange(B), t]
    div = B if reduction == "mean" else 1

    def backward(g):
        p = np.exp(zs - lse[:, None])
        p[np.arange(B), t] -= 1.0
        return (p * (float(g) / div),)

    return _make("cross_entropy", np.asarray(nll.sum() / div), (logits,), backward)


# ---------------------------------------------------------------- backward

def trace(root):
    """Nodes reachable from ``root`` in insertion (topological) order."""
    seen, stack, nodes = set(), [root], []
    while stack:
        t = stack.pop()
        n = t.node
        if n is None or id(n) in seen:
            continue
        seen.add(id(n))
        nodes.append(n)
        stack.extend(n.inputs)
    nodes.sort(key=lambda n: n.seq)
    return nodes


def backward(root):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf."""
    if root.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not np.isfinite(root.data).all():
        raise NonFiniteError("backward from a non-finite root")
    if root.node is None:
        if root.requires_grad:
            _accumulate(root, np.ones_like(root.data))
        return
    grads = {id(root.node): np.ones_like(root.data)}
    for node in reversed(trace(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.node is None:
                _accumulate(inp, gi)
            else:
                key = id(inp.node)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi


def _accumulate(leaf, g):
    if leaf.grad is None:
        leaf.grad = np.array(g, dtype=DTYPE)
    else:
        leaf.grad = leaf.grad + g


# ---------------------------------------------------------------- init / rng

def make_rng(seed):
    """Deterministic generator; same seed and call sequence, same stream."""
    return np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)


def xavier_uniform(rng, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def normal_init(rng, shape, std=0.02):
    return rng.normal(0.0, std, size=shape)


# ---------------------------------------------------------------- grad check

class GradCheckReport:
    """Outcome of a central-difference comparison."""

    def __init__(self, max_rel_err, per_param, tol, n_coords):
        self.max_rel_err = max_rel_err
        self.per_param = per_param
        self.tol = tol
        self.n_coords = n_coords

    @property
    def passed(self):
        return self.max_rel_err < self.tol

    def __repr__(self):
        return (f"GradCheckReport(passed={self.passed}, max_rel_err={self.max_rel_err:.3e}, "
                f"coords={self.n_coords})")


def grad_check(f, params, h=1e-5, tol=1e-4, max_coords=None, rng=None, floor=1e-6):
    """Compare analytic gradients of scalar ``f()`` with central differences.

    ``params`` are the Parameters (or requires-grad Tensors) to perturb. The
    relative error per coordinate is ``|a - n| / max(|a|, |n|, floor)``. With
    ``max_coords`` set, at most that many coordinates per parameter are
    sampled (using ``rng``).
    """
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    out = f()
    if not np.isfinite(out.data).all():
        raise NonFiniteError("grad_check: f is non-finite")
    backward(out)
    analytic = [p.grad.copy() for p in params]
    rng = rng if rng is not None else make_rng(0)
    worst, per_param, count = 0.0, {}, 0
    with no_grad():
        for i, p in enumerate(params):
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                idx = rng.choice(flat.size, size=max_coords, replace=False)
            pw = 0.0
            for j in idx:
                orig = flat[j]
                flat[j] = orig + h
                fp = float(f().data)
                flat[j] = orig - h
                fm = float(f().data)
                flat[j] = orig
                if not (math.isfinite(fp) and math.isfinite(fm)):
                    raise NonFiniteError("grad_check: f is non-finite under perturbation")
                num = (fp - fm) / (2 * h)
                a = analytic[i].reshape(-1)[j]
                err = abs(a - num) / max(abs(a), abs(num), floor)
                pw = max(pw, err)
                count += 1
            per_param[getattr(p, "name", "") or f"param{i}"] = pw
            worst = max(worst, pw)
    return GradCheckReport(worst, per_param, tol, count)
