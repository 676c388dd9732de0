#!/usr/bin/env python3
"""The three patch networks: shape traces, parameter tallies, inference,
and the snapshot file format.
"""

import tempfile
from pathlib import Path

import numpy as np

from aedl import (
    build_dccnn,
    build_hresnet,
    build_wcrn,
    forward_batch,
    init_params,
    load_params,
    parameter_count,
    save_params,
    trace_shapes,
)

CHANNELS, CLASSES = 6, 11

for build in (build_wcrn, build_dccnn, build_hresnet):
    graph = build(CHANNELS, CLASSES)
    print(f"== {graph.name} (input {'x'.join(map(str, graph.input_shape))}) ==")
    for row, shape in trace_shapes(graph).items():
        print(f"  row {row:>3}: {'x'.join(map(str, shape))}")
    print(f"  trainable parameters: {parameter_count(graph):,}")

print("\n== inference ==")
graph = build_wcrn(CHANNELS, CLASSES)
rng = np.random.default_rng(1)
params = init_params(graph, rng)
batch = rng.standard_normal((4, 5, 5, CHANNELS))
probs = forward_batch(graph, params, batch)
print("probabilities, first patch:", np.round(probs[0], 4))
print("row sums:", np.round(probs.sum(axis=1), 10))

print("\n== snapshot round trip ==")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "snapshot.aedl"
    save_params(params, path)
    size = path.stat().st_size
    restored = load_params(path)
    same = forward_batch(graph, restored, batch).tobytes() == probs.tobytes()
    print(f"wrote {size:,} bytes, outputs after reload bit-identical: {same}")
