"""Feature bundles, input projection, CLS tokens and the instructional embedder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor

VIDEO_FLAVORS = ("desc", "raw")


@dataclass
class FeatureBundle:
    """A batch of samples; every sequence field is ``[B, T, d_in]``.

    Both video flavors are carried; the model picks one per variant.
    """

    text: np.ndarray
    audio: np.ndarray
    video_desc: np.ndarray
    video_raw: np.ndarray
    stage_id: np.ndarray
    subject_id: np.ndarray
    label: np.ndarray | None = None

    def __post_init__(self):
        seqs = (self.text, self.audio, self.video_desc, self.video_raw)
        B = len(self.stage_id)
        for s in seqs:
            if s.ndim != 3 or s.shape[0] != B or s.shape[1] < 1:
                raise ValueError(f"sequence fields must be non-empty [B, T, d_in], got {s.shape}")
        if len({s.shape[2] for s in seqs}) != 1:
            raise ValueError("all modalities must share the feature dim d_in")

    def __len__(self):
        return len(self.stage_id)

    @property
    def d_in(self):
        return self.text.shape[2]

    def video(self, flavor):
        if flavor not in VIDEO_FLAVORS:
            raise ValueError(f"video flavor must be one of {VIDEO_FLAVORS}, got {flavor!r}")
        return self.video_desc if flavor == "desc" else self.video_raw

    def modality(self, branch, flavor="desc"):
        if branch == "video":
            return self.video(flavor)
        return getattr(self, branch)

    def select(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureBundle(
            self.text[idx], self.audio[idx], self.video_desc[idx], self.video_raw[idx],
            self.stage_id[idx], self.subject_id[idx],
            None if self.label is None else self.label[idx],
        )

    @classmethod
    def from_arrays(cls, arrays):
        return cls(arrays["text"], arrays["audio"], arrays["video_desc"], arrays["video_raw"],
                   np.asarray(arrays["stage_id"]), np.asarray(arrays["subject_id"]),
                   None if arrays.get("label") is None else np.asarray(arrays["label"]))


# ---------------------------------------------------------------- instructional embedder

def init_instructional(rng, n_stages, n_subjects, d, d_e=None, prefix="instr_embed"):
    d_e = d_e or d
    return {
        "E_stage": Parameter(ad.normal_init(rng, (n_stages, d_e)), f"{prefix}.E_stage"),
        "E_subject": Parameter(ad.normal_init(rng, (n_subjects, d_e)), f"{prefix}.E_subject"),
        "W_c": Parameter(ad.xavier_uniform(rng, 2 * d_e, d), f"{prefix}.W_c"),
        "b_c": Parameter(np.zeros(d), f"{prefix}.b_c"),
        "gamma": Parameter(np.ones(d), f"{prefix}.gamma"),
        "beta": Parameter(np.zeros(d), f"{prefix}.beta"),
    }


def embed_instructional(stage_id, subject_id, p, eps=1e-5):
    """LayerNorm(GELU([e_stage ; e_subject] W_c + b_c)) for each id pair."""
    e_l = ad.embedding(p["E_stage"], stage_id)
    e_s = ad.embedding(p["E_subject"], subject_id)
    h = ad.gelu(ad.linear(ad.concat_lastdim([e_l, e_s]), p["W_c"], p["b_c"]))
    return ad.layer_norm(h, p["gamma"], p["beta"], eps)


# ---------------------------------------------------------------- projection / CLS

def init_projection(rng, d_in, d, prefix):
    return {"W": Parameter(ad.xavier_uniform(rng, d_in, d), f"{prefix}.W"),
            "b": Parameter(np.zeros(d), f"{prefix}.b")}


def project_inputs(seqs, params, d, strict=False):
    """Affine-map each ``[B, T, d_in]`` sequence to width ``d``.

    ``seqs`` maps branch name to array; ``params`` maps branch name to a
    projection (or is missing the branch). With ``strict`` and ``d_in == d``
    sequences pass through unchanged.
    """
    out = {}
    for name, x in seqs.items():
        x = ad.as_tensor(x)
        if strict and x.shape[-1] == d and name not in params:
            out[name] = x
            continue
        if name not in params:
            raise ValueError(f"no input projection for {name!r} (d_in={x.shape[-1]}, d={d})")
        p = params[name]
        if p["W"].shape[0] != x.shape[-1]:
            raise ValueError(f"{name}: d_in {x.shape[-1]} != projection rows {p['W'].shape[0]}")
        out[name] = ad.linear(x, p["W"], p["b"])
    return out


def _broadcast_rows(cls, B):
    d = cls.shape[-1]
    return ad.add(Tensor(np.zeros((B, 1, d))), cls)


def prepend_cls(seq, cls):
    """``[B, T, d]`` -> ``[B, T+1, d]`` with ``cls`` at row 0. 2-D input is unbatched."""
    seq = ad.as_tensor(seq)
    if seq.ndim == 2:
        return ad.getitem(prepend_cls(ad.reshape(seq, (1,) + seq.shape), cls), 0)
    if seq.shape[-2] < 1:
        raise ValueError("prepend_cls needs a non-empty sequence")
    if seq.shape[-1] != cls.shape[-1]:
        raise ValueError(f"cls width {cls.shape[-1]} != sequence width {seq.shape[-1]}")
    return ad.concat([_broadcast_rows(cls, seq.shape[0]), seq], axis=-2)


def instructional_sequence(h_d, cls):
    """``[B, d]`` -> ``[B, 2, d]`` holding rows (cls, h_d); ``[d]`` -> ``[2, d]``."""
    h_d = ad.as_tensor(h_d)
    if h_d.shape[-1] != cls.shape[-1]:
        raise ValueError(f"cls width {cls.shape[-1]} != h_d width {h_d.shape[-1]}")
    if h_d.ndim == 1:
        return ad.getitem(instructional_sequence(ad.reshape(h_d, (1, h_d.shape[0])), cls), 0)
    B, d = h_d.shape
    return ad.concat([_broadcast_rows(cls, B), ad.reshape(h_d, (B, 1, d))], axis=-2)
