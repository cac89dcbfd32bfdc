"""The audio-centric asymmetric attention network.

Branches ``text``, ``audio``, ``video`` and ``instr`` each carry a token
sequence with a CLS row at position 0. Every interaction layer runs, per
branch, a single-head cross-attention whose keys/values come from another
branch (see :data:`KV_SOURCE`), then residual multi-head self-attention, then
a residual position-wise GELU FFN. CLS rows of the final layer feed a
softmax-gated fusion, a final MLP that splices in the instructional CLS, and
a linear 8-way classifier.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .features import (
    FeatureBundle, embed_instructional, init_instructional, init_projection,
    instructional_sequence, prepend_cls, project_inputs,
)

BRANCHES = ("text", "audio", "video", "instr")
GATED = ("text", "audio", "video")

# query branch -> branch providing keys/values
KV_SOURCE = {"text": "audio", "video": "audio", "instr": "audio", "audio": "text"}

CHECKPOINT_FORMAT = "aamtsa-checkpoint/1"


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d: int = 32
    d_in: int = 32
    n_layers: int = 3
    n_heads_self: int = 4
    d_ff: int = 0  # 0 means 4 * d
    n_classes: int = 8
    use_text: bool = True
    use_audio: bool = True
    use_video: bool = True
    video_flavor: str = "desc"
    use_instructional: bool = True
    use_cross_modal: bool = True
    use_hier_fusion: bool = True
    strict_paper: bool = False
    cross_residual: bool = False
    instr_from_stack: bool = True
    n_stages: int = 4
    n_subjects: int = 11
    d_e: int = 0  # 0 means d
    ln_eps: float = 1e-5

    @property
    def ff_width(self):
        return self.d_ff or 4 * self.d

    @property
    def embed_width(self):
        return self.d_e or self.d

    @property
    def sublayer_norm(self):
        return not self.strict_paper

    def gated_branches(self):
        return [b for b in GATED if getattr(self, f"use_{b}")]

    def active_branches(self):
        out = self.gated_branches()
        if self.use_instructional:
            out.append("instr")
        return out

    def validate(self):
        if self.d < 1 or self.d % self.n_heads_self:
            raise ConfigError(f"d={self.d} must be positive and divisible by n_heads_self={self.n_heads_self}")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if not self.gated_branches():
            raise ConfigError("at least one of text/audio/video must be enabled")
        if self.video_flavor not in ("desc", "raw"):
            raise ConfigError(f"video_flavor must be 'desc' or 'raw', got {self.video_flavor!r}")
        routing(self)
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown ModelConfig keys {unknown}")
        return cls(**d)


def routing(config):
    """Cross-attention source per active branch (``None``: no cross block).

    Audio is the hub: text, video and instr query it, so requesting
    cross-attention without audio is an error. Audio queries text; when text
    is disabled, audio simply skips its cross block.
    """
    active = set(config.active_branches())
    route = {}
    for b in config.active_branches():
        src = KV_SOURCE[b]
        if not config.use_cross_modal or len(active) == 1:
            route[b] = None
        elif src in active:
            route[b] = src
        elif b == "audio":
            route[b] = None
        else:
            raise ConfigError(f"branch {b!r} cross-attends to disabled branch {src!r}")
    return route


def dataflow_edges(config):
    """``(query, source)`` pairs of the cross-modal dataflow graph."""
    return sorted((b, s) for b, s in routing(config).items() if s is not None)


# ---------------------------------------------------------------- parameters

def _P(rng, shape, name, kind):
    if kind == "xavier":
        data = ad.xavier_uniform(rng, *shape)
    elif kind == "normal":
        data = ad.normal_init(rng, shape)
    elif kind == "ones":
        data = np.ones(shape)
    else:
        data = np.zeros(shape)
    return Parameter(data, name)


def _norm_params(d, name):
    return {"gamma": Parameter(np.ones(d), f"{name}.gamma"), "beta": Parameter(np.zeros(d), f"{name}.beta")}


def init_params(config, seed=0):
    """Build the nested parameter dict for ``config`` from one seeded stream."""
    config.validate()
    rng = ad.make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    d, dff = config.d, config.ff_width
    route = routing(config)
    params = {}

    identity_in = config.strict_paper and config.d_in == d
    params["inputs"] = {} if identity_in else {
        b: init_projection(rng, config.d_in, d, f"inputs.{b}") for b in config.gated_branches()}
    if config.use_instructional:
        params["instr_embed"] = init_instructional(rng, config.n_stages, config.n_subjects, d,
                                                   config.embed_width)
    params["cls"] = {b: _P(rng, (d,), f"cls.{b}", "normal") for b in config.active_branches()}

    layers = []
    for l in range(config.n_layers):
        lp = {}
        for b in config.active_branches():
            pre = f"layers.{l}.{b}"
            bp = {}
            if route[b] is not None:
                bp["cross"] = {k: _P(rng, (d, d), f"{pre}.cross.{k}", "xavier") for k in ("W_q", "W_k", "W_v")}
            bp["self"] = {k: _P(rng, (d, d), f"{pre}.self.{k}", "xavier") for k in ("W_q", "W_k", "W_v", "W_o")}
            bp["ffn"] = {
                "W1": _P(rng, (d, dff), f"{pre}.ffn.W1", "xavier"), "b1": _P(rng, (dff,), f"{pre}.ffn.b1", "zeros"),
                "W2": _P(rng, (dff, d), f"{pre}.ffn.W2", "xavier"), "b2": _P(rng, (d,), f"{pre}.ffn.b2", "zeros"),
            }
            if config.sublayer_norm:
                bp["norm"] = {s: _norm_params(d, f"{pre}.norm.{s}")
                              for s in (("cross",) if route[b] is not None else ()) + ("self", "ffn")}
            lp[b] = bp
        layers.append(lp)
    params["layers"] = layers

    # output layers use the small normal init so initial logits are near-uniform
    head = {}
    gated = config.gated_branches()
    k = len(gated)
    C = config.n_classes
    if not config.use_hier_fusion and len(config.active_branches()) > 1:
        w = len(config.active_branches()) * d
        head["concat"] = {"W": _P(rng, (w, C), "head.concat.W", "normal"), "b": _P(rng, (C,), "head.concat.b", "zeros")}
    else:
        if k >= 2:
            head["gate"] = {
                "W1": _P(rng, (k * d, d), "head.gate.W1", "xavier"), "b1": _P(rng, (d,), "head.gate.b1", "zeros"),
                "W2": _P(rng, (d, k), "head.gate.W2", "xavier"), "b2": _P(rng, (k,), "head.gate.b2", "zeros"),
            }
        if config.use_instructional:
            head["final"] = {"W": _P(rng, (2 * d, d), "head.final.W", "xavier"), "b": _P(rng, (d,), "head.final.b", "zeros")}
        elif k >= 2:
            head["final"] = {"W": _P(rng, (d, d), "head.final.W", "xavier"), "b": _P(rng, (d,), "head.final.b", "zeros")}
        head["classifier"] = {"W": _P(rng, (d, C), "head.classifier.W", "normal"),
                              "b": _P(rng, (C,), "head.classifier.b", "zeros")}
    params["head"] = head
    return params


def flatten(params, prefix=""):
    """Depth-first ``{dotted.name: Parameter}`` in construction order."""
    out = {}
    items = enumerate(params) if isinstance(params, list) else params.items()
    for k, v in items:
        name = f"{prefix}{k}"
        if isinstance(v, Parameter):
            out[name] = v
        else:
            out.update(flatten(v, name + "."))
    return out


def count_params(params):
    return int(sum(p.size for p in flatten(params).values()))


# ---------------------------------------------------------------- blocks

def _ln(x, p, eps):
    return ad.layer_norm(x, p["gamma"], p["beta"], eps)


def cross_attention(q_seq, kv_seq, p, weights_out=None):
    """Single-head ``Softmax(Q K^T / sqrt(d)) V``; queries from ``q_seq``."""
    if q_seq.shape[-1] != kv_seq.shape[-1]:
        raise ValueError(f"cross_attention: width {q_seq.shape[-1]} != {kv_seq.shape[-1]}")
    q = ad.linear(q_seq, p["W_q"])
    k = ad.linear(kv_seq, p["W_k"])
    v = ad.linear(kv_seq, p["W_v"])
    return ad.attention(q, k, v, n_heads=1, weights_out=weights_out)


def self_attention_block(seq, p, n_heads, norm=None, eps=1e-5):
    """``seq + W_o MHA(seq)``, then optional post-norm."""
    if seq.shape[-1] % n_heads:
        raise ValueError(f"width {seq.shape[-1]} not divisible by {n_heads} heads")
    a = ad.attention(ad.linear(seq, p["W_q"]), ad.linear(seq, p["W_k"]), ad.linear(seq, p["W_v"]), n_heads)
    y = ad.add(seq, ad.linear(a, p["W_o"]))
    return _ln(y, norm, eps) if norm is not None else y


def ffn_block(seq, p, norm=None, eps=1e-5):
    """``seq + W2 GELU(W1 seq + b1) + b2`` per position, then optional post-norm."""
    if seq.shape[-1] != p["W1"].shape[0]:
        raise ValueError(f"ffn_block: width {seq.shape[-1]} != W1 rows {p['W1'].shape[0]}")
    h = ad.gelu(ad.linear(seq, p["W1"], p["b1"]))
    y = ad.add(seq, ad.linear(h, p["W2"], p["b2"]))
    return _ln(y, norm, eps) if norm is not None else y


def interaction_layer(states, lp, config, route=None, weights=None):
    """One synchronous layer: every cross block reads the layer-input states."""
    route = route if route is not None else routing(config)
    for b, src in route.items():
        if src is not None and src not in states:
            raise ConfigError(f"branch {b!r} needs states of {src!r}")
    eps = config.ln_eps
    new = {}
    for b, x in states.items():
        bp = lp[b]
        norms = bp.get("norm", {})
        src = route.get(b)
        if src is not None:
            wl = [] if weights is not None else None
            c = cross_attention(x, states[src], bp["cross"], weights_out=wl)
            if weights is not None:
                weights.setdefault(b, []).append(wl[0])
            if config.cross_residual:
                c = ad.add(c, x)
            x = _ln(c, norms["cross"], eps) if "cross" in norms else c
        x = self_attention_block(x, bp["self"], config.n_heads_self, norms.get("self"), eps)
        x = ffn_block(x, bp["ffn"], norms.get("ffn"), eps)
        new[b] = x
    return new


def initial_states(bundle, params, config):
    """Projected, CLS-prefixed sequences per active branch (layer-0 states)."""
    seqs = {}
    for b in config.gated_branches():
        x = bundle.modality(b, config.video_flavor)
        if x is None:
            raise ConfigError(f"bundle lacks features for active branch {b!r}")
        seqs[b] = x
    proj = project_inputs(seqs, params["inputs"], config.d,
                          strict=config.strict_paper and config.d_in == config.d)
    states = {b: prepend_cls(proj[b], params["cls"][b]) for b in config.gated_branches()}
    h_d = None
    if config.use_instructional:
        h_d = embed_instructional(bundle.stage_id, bundle.subject_id, params["instr_embed"], config.ln_eps)
        states["instr"] = instructional_sequence(h_d, params["cls"]["instr"])
    return states, h_d


def forward_stack(bundle, params, config, weights=None):
    """Run the interaction stack; return CLS rows and the raw instructional vector."""
    states, h_d = initial_states(bundle, params, config)
    route = routing(config)
    for lp in params["layers"]:
        states = interaction_layer(states, lp, config, route, weights)
    cls = {b: ad.getitem(s, (slice(None), 0)) for b, s in states.items()}
    return cls, h_d


def gated_fusion(cls_list, p):
    """Softmax gates over the concatenated CLS rows; returns ``(h_fused, gates)``."""
    if len(cls_list) < 2:
        raise ValueError("gated fusion needs at least two modalities")
    logits = ad.linear(ad.gelu(ad.linear(ad.concat_lastdim(cls_list), p["W1"], p["b1"])), p["W2"], p["b2"])
    gates = ad.softmax_lastdim(logits)
    fused = None
    for i, c in enumerate(cls_list):
        term = ad.mul(ad.getitem(gates, (Ellipsis, slice(i, i + 1))), c)
        fused = term if fused is None else ad.add(fused, term)
    return fused, gates


def fuse_final(h_fused, cls_d, p):
    """``GELU([h_fused ; cls_d] W + b)``; with ``cls_d=None`` the no-instruction head."""
    x = h_fused if cls_d is None else ad.concat_lastdim([h_fused, cls_d])
    if x.shape[-1] != p["W"].shape[0]:
        raise ValueError(f"fuse_final: input width {x.shape[-1]} != W rows {p['W'].shape[0]}")
    return ad.gelu(ad.linear(x, p["W"], p["b"]))


def classify(h_final, p):
    """Linear map to class logits; returns ``(logits, probs)``."""
    logits = ad.linear(h_final, p["W"], p["b"])
    return logits, ad.softmax_lastdim(logits)


def predict_labels(probs):
    """Argmax with lowest-index tie-break."""
    return np.argmax(np.asarray(probs), axis=-1)


@dataclass
class ForwardResult:
    logits: ad.Tensor
    probs: ad.Tensor
    gates: np.ndarray | None
    loss: ad.Tensor | None
    cls: dict


def model_forward(bundle, params, config, labels=None, reduction="mean", weights=None):
    """End-to-end forward; ``labels`` (or ``bundle.label``) adds the CE loss."""
    cls, h_d = forward_stack(bundle, params, config, weights)
    head = params["head"]
    gated = config.gated_branches()
    gates = None
    if "concat" in head:
        order = config.active_branches()
        logits = ad.linear(ad.concat_lastdim([cls[b] for b in order]), head["concat"]["W"], head["concat"]["b"])
        probs = ad.softmax_lastdim(logits)
    else:
        if len(gated) >= 2:
            h, g = gated_fusion([cls[b] for b in gated], head["gate"])
            gates = g.data
        else:
            h = cls[gated[0]]
        if config.use_instructional:
            cls_d = cls["instr"] if config.instr_from_stack else h_d
            h = fuse_final(h, cls_d, head["final"])
        elif "final" in head:
            h = fuse_final(h, None, head["final"])
        logits, probs = classify(h, head["classifier"])
    if labels is None:
        labels = bundle.label
    loss = ad.cross_entropy(logits, labels, reduction) if labels is not None else None
    return ForwardResult(logits, probs, gates, loss, cls)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, params, config, extra=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "params": {name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                   for name, p in flatten(params).items()},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))
    return path


def load_checkpoint(path):
    """Return ``(params, config, extra)`` rebuilt from a checkpoint file."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    config = ModelConfig.from_dict(doc["config"])
    params = init_params(config, seed=0)
    flat = flatten(params)
    stored = doc["params"]
    if set(stored) != set(flat):
        raise ValueError(f"{path}: parameter names do not match config "
                         f"(missing {sorted(set(flat) - set(stored))[:3]}, extra {sorted(set(stored) - set(flat))[:3]})")
    for name, p in flat.items():
        rec = stored[name]
        arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        if arr.shape != p.shape:
            raise ValueError(f"{path}: {name} has shape {arr.shape}, expected {p.shape}")
        p.data = arr
        p.zero_grad()
    return params, config, doc.get("extra")


def copy_values(params):
    return {name: p.data.copy() for name, p in flatten(params).items()}


def restore_values(params, values):
    for name, p in flatten(params).items():
        p.data = values[name].copy()
