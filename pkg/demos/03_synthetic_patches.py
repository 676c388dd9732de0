#!/usr/bin/env python3
"""Synthetic speckled patch datasets: generation, mirroring, splits,
normalization, and the on-disk format.
"""

import tempfile
from pathlib import Path

import numpy as np

from aedl import (
    SyntheticSpec,
    augment_mirror,
    generate_synthetic,
    load_dataset,
    move_to_labeled,
    normalize_channels,
    save_dataset,
    seed_split,
)

spec = SyntheticSpec(
    class_count=3, patch_size=5, channels=6, instances_per_class=300,
    covariance_scale=1.0, speckle_intensity=0.5, class_separation=2.0, seed=42,
)
ds = generate_synthetic(spec)
print(f"generated {len(ds)} patches of shape {ds.patches.shape[1:]}")
for k in range(ds.class_count):
    block = ds.patches[ds.labels == k]
    print(f"  class {k}: mean {np.round(block.mean(axis=(0, 1, 2)), 2)}")

print("\n== mirroring quadruples the pool ==")
patch = np.arange(4.0).reshape(1, 2, 2, 1)
views, _ = augment_mirror(patch, np.array([0]))
names = ["original", "horizontal", "vertical", "diagonal"]
for name, view in zip(names, views):
    print(f"  {name:>10}: {view[..., 0].tolist()}")

print("\n== pools ==")
ds = seed_split(ds, per_class=5, candidate_size=500, test_size=300, seed=0)
split = ds.split
print(f"labeled {len(split.labeled)}, candidates {len(split.candidate)}, "
      f"test {len(split.test)}")
ds = move_to_labeled(ds, split.candidate[:5])
print(f"after moving 5 candidates: labeled {len(ds.split.labeled)}, "
      f"candidates {len(ds.split.candidate)}")

ds, stats = normalize_channels(ds)
pool = np.concatenate([ds.split.labeled, ds.split.candidate])
print(f"pool channel means after normalization: "
      f"{np.abs(ds.patches[pool].mean(axis=(0, 1, 2))).max():.2e} "
      f"(test pool never touches the statistics)")

print("\n== file format ==")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "patches.psar"
    raw = generate_synthetic(spec)
    save_dataset(raw, path)
    back = load_dataset(path)
    print(f"wrote {path.stat().st_size:,} bytes; "
          f"reload bit-identical: {back.patches.tobytes() == raw.patches.tobytes()}")
