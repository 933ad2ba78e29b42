"""Finite-difference check of every gradient tensor for each ablation variant."""
import numpy as np

from fouriergnn.model import FourierGNN, ModelConfig
from fouriergnn.training import ABLATIONS, finite_difference_check, make_ablation_variant

cfg = ModelConfig(n_vars=3, n_steps=4, horizon=2, embed_dim=3, n_layers=3, reduce_dim=2, ffn_dim1=5, ffn_dim2=4)
rng = np.random.default_rng(0)
base = FourierGNN.init(cfg, 0)
for kind in ABLATIONS:
    model = make_ablation_variant(base, kind, seed=1)
    for name, value in model.params.items():
        if name.endswith(("bias", "b1", "b2", "b3")):
            value += rng.normal(size=value.shape) * 0.3  # exercise bias paths
    rows = finite_difference_check(model, rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 2)))
    per_tensor = {}
    for r in rows:
        per_tensor[r["name"]] = max(per_tensor.get(r["name"], 0.0), r["rel_error"])
    print(f"{kind:15s} worst {max(per_tensor.values()):.2e}  " +
          "  ".join(f"{k}={v:.1e}" for k, v in per_tensor.items()))
