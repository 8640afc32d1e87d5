"""Node-only message passing versus the two-level model on synthetic pairs.

Every pair is 1-WL equivalent, so a node-only network gives both members
bitwise identical logits. The two-level model also reads the generated
graph of paths, circuits and trees and can tell the members apart.

Pass an epoch count to shorten the run, e.g. ``python3 train_spng.py 60``.
"""
import sys

import numpy as np

from tlgnn.model import TlgnnConfig, attention_report, evaluate, prepare, train
from tlgnn.png import generate_spng

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
ds, pairs = generate_spng(100, seed=0)
print(f"{len(pairs)} pairs, {sum(p.certified for p in pairs)} certified")

for variant in ("node-only", "tlgnn"):
    config = TlgnnConfig.for_variant(variant, epochs=epochs)
    inputs = [prepare(g, config) for g in ds]
    params, curve = train(inputs, config)
    _, acc, logits = evaluate(params, config, inputs)
    tied = sum(np.array_equal(logits[2 * k], logits[2 * k + 1]) for k in range(len(pairs)))
    print(f"{variant:10s} train accuracy {acc:.3f}, pairs with identical logits {tied}/{len(pairs)}")

for layer, a, b in attention_report(params):
    print(f"layer {layer}: node weight {a:.3f}, subgraph weight {b:.3f}")
