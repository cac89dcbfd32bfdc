"""
Inside the fusion model
=======================

Inspect the audio-centric routing, run one forward pass, and look at the
per-sample fusion gates.
"""

import numpy as np

from aamtsa import autodiff as ad
from aamtsa.experiment import synthetic_bundle
from aamtsa.model import ModelConfig, count_params, dataflow_edges, flatten, init_params, model_forward
from aamtsa.variants import variant_config

cfg = ModelConfig()
print("cross-attention edges (source -> query branch):")
for src, dst in dataflow_edges(cfg):
    print(f"  {src:>5} -> {dst}")

params = init_params(cfg, seed=0)
print("parameters:", count_params(params))
for v in ("Var-A", "Var-TA", "Var-CIHF", "Var-FEAC"):
    print(f"  {v:<9} {count_params(init_params(variant_config(v), 0)):7d}")

bundle = synthetic_bundle(n=8, seed=0)
out = model_forward(bundle, params, cfg, labels=bundle.label)
print("untrained loss", round(out.loss.item(), 4), "(ln 8 =", round(np.log(8), 4), ")")
print("gates over (text, audio, video):")
print(np.round(out.gates, 3))

# Audio never queries video or the instructional branch, so its CLS has no
# gradient path to them.
ad.backward(ad.sum_all(out.cls["audio"]))
grads = flatten(params)
print("audio CLS depends on video input projection:", bool(np.abs(grads["inputs.video.W"].grad).sum()))
print("audio CLS depends on text input projection: ", bool(np.abs(grads["inputs.text.W"].grad).sum()))
