"""Finite-difference gradient suite over every primitive and the assembled model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def _rand(rng, *shape):
    return Parameter(rng.normal(size=shape))


PRIMITIVES = {
    "linear": lambda r: (ad.linear, [_rand(r, 3, 4), _rand(r, 4, 2), _rand(r, 2)]),
    "matmul": lambda r: (ad.matmul, [_rand(r, 2, 3, 4), _rand(r, 4, 5)]),
    "add": lambda r: (ad.add, [_rand(r, 2, 3, 4), _rand(r, 1, 4)]),
    "sub": lambda r: (ad.sub, [_rand(r, 3, 4), _rand(r, 4)]),
    "mul": lambda r: (ad.mul, [_rand(r, 2, 3, 1), _rand(r, 3, 4)]),
    "softmax": lambda r: (ad.softmax_lastdim, [_rand(r, 3, 5)]),
    "layer_norm": lambda r: (ad.layer_norm, [_rand(r, 2, 3, 6), _rand(r, 6), _rand(r, 6)]),
    "gelu": lambda r: (ad.gelu, [_rand(r, 4, 3)]),
    "concat": lambda r: (lambda a, b: ad.concat_lastdim([a, b]), [_rand(r, 2, 3), _rand(r, 2, 2)]),
    "getitem": lambda r: (lambda a: a[:, 0, :], [_rand(r, 2, 3, 4)]),
    "transpose": lambda r: (ad.transpose, [_rand(r, 2, 3, 4)]),
    "reshape": lambda r: (lambda a: ad.reshape(a, (4, 6)), [_rand(r, 2, 3, 4)]),
    "sum_axis": lambda r: (lambda a: ad.sum_axis(a, 1), [_rand(r, 2, 3, 4)]),
    "embedding": lambda r: (lambda t: ad.embedding(t, [2, 0, 2]), [_rand(r, 4, 3)]),
    "attention": lambda r: (ad.attention, [_rand(r, 2, 3, 4), _rand(r, 2, 5, 4), _rand(r, 2, 5, 4)]),
    "attention_2head": lambda r: (lambda q, k, v: ad.attention(q, k, v, n_heads=2),
                                  [_rand(r, 2, 3, 4), _rand(r, 2, 3, 4), _rand(r, 2, 3, 4)]),
    "cross_entropy": lambda r: (lambda z: ad.cross_entropy(z, [1, 0, 7]), [_rand(r, 3, 8)]),
}


@dataclass
class SuiteLine:
    name: str
    max_rel_err: float
    passed: bool


def check_primitive(name, seed, h=1e-5, tol=1e-4):
    rng = np.random.default_rng(seed)
    fn, params = PRIMITIVES[name](rng)
    # a random projection makes every output coordinate count
    w = Tensor(rng.normal(size=fn(*params).shape))
    return ad.grad_check(lambda: ad.sum_all(ad.mul(fn(*params), w)), params, h=h, tol=tol)


def check_model(variant="full", dim=8, seq_len=4, n_layers=1, n=3, seed=0, h=1e-5, tol=1e-4,
                max_coords=None):
    """Grad-check the end-to-end loss of a small model on synthetic inputs."""
    from .dataset.synth import SynthConfig, synthesize
    from .features import FeatureBundle
    from .model import ModelConfig, flatten, init_params, model_forward
    from .variants import variant_config

    heads = 2 if dim % 2 == 0 else 1
    d_in = max(dim, 8)  # the generator needs one direction per class
    base = ModelConfig(d=dim, d_in=d_in, n_layers=n_layers, n_heads_self=heads)
    cfg = variant_config(variant, base)
    _, arrays = synthesize(SynthConfig(n_samples=n, dim=d_in, seed=seed,
                                       seq_len={"text": seq_len, "audio": seq_len, "video": seq_len}))
    bundle = FeatureBundle.from_arrays(arrays)
    params = init_params(cfg, seed)
    return ad.grad_check(lambda: model_forward(bundle, params, cfg).loss, list(flatten(params).values()),
                         h=h, tol=tol, max_coords=max_coords, rng=np.random.default_rng(seed))


def run_suite(dim=8, seeds=range(5), variants=("full", "Var-TA", "Var-A"), max_coords=None):
    """One :class:`SuiteLine` per primitive (worst over ``seeds``) and per model variant."""
    lines = []
    for name in PRIMITIVES:
        worst = max(check_primitive(name, s).max_rel_err for s in seeds)
        lines.append(SuiteLine(name, float(worst), bool(worst < 1e-4)))
    for v in variants:
        rep = check_model(v, dim=dim, max_coords=max_coords)
        lines.append(SuiteLine(f"model:{v}", float(rep.max_rel_err), bool(rep.passed)))
    return lines
