#!/usr/bin/env python3
"""A complete (small) active-learning experiment: committee-driven selection
against random selection, with learning curves and sample-efficiency ratios.

The full-size protocol lives in the acceptance suite; this demo uses a
reduced budget so it finishes in under a minute.
"""

from dataclasses import replace

import numpy as np

from aedl import ExperimentConfig, SyntheticSpec, run_monte_carlo, samples_to_target

spec = SyntheticSpec(
    class_count=3, patch_size=5, channels=6, instances_per_class=800,
    covariance_scale=1.0, speckle_intensity=0.5,
    class_means=((0.0,) * 6, (0.5, 0, 0, 0, 0, 0), (0, 2.5, 0, 0, 0, 0)),
    seed=7,
)
config = ExperimentConfig(
    network="wcrn", strategy="aedl-bt", synthetic=spec,
    per_class_seed=5, batch_per_round=5, round_count=6,
    candidate_size=800, test_size=1200,
    initial_epochs=25, finetune_epochs=10, snapshot_interval_epochs=2,
    committee_size=5, monte_carlo_runs=3, seed=0,
)

results = {}
for strategy in ("aedl-bt", "bt", "rs"):
    results[strategy] = run_monte_carlo(replace(config, strategy=strategy))
    print(f"{strategy}: done ({len(results[strategy].seeds)} seeded runs)")

print("\nlabels   " + "  ".join(f"{s:>8}" for s in results))
grid = results["rs"].labeled_counts
for i, count in enumerate(grid):
    row = "  ".join(f"{results[s].mean_oa[i]:8.4f}" for s in results)
    print(f"{count:>6}   {row}")

target = 0.84
print(f"\nsamples needed to reach {target:.0%} OA (mean curves):")
for strategy, result in results.items():
    crossing = samples_to_target(result.mean_curve, result.mean_curve, target)
    label = f"{crossing.samples_a:.1f}" if crossing.samples_a else "not reached"
    print(f"  {strategy:>8}: {label}")

pair = samples_to_target(results["aedl-bt"].mean_curve, results["rs"].mean_curve, target)
if pair.ratio is not None:
    print(f"\ncommittee selection used {pair.ratio:.0%} of the labels random "
          f"selection needed at {target:.0%} OA")
