#!/usr/bin/env python3
"""Candidate scoring and selection: entropy, margin, random, and why a
committee average can rank candidates differently than any single model.
"""

import numpy as np

from aedl import (
    ProbabilityMatrix,
    agreement_histogram,
    score_bt_margin,
    score_entropy,
    select,
)

rows = np.array(
    [
        [0.34, 0.33, 0.33],  # near-uniform: maximally uncertain
        [0.98, 0.01, 0.01],  # confident
        [0.48, 0.47, 0.05],  # two-way tie: small margin
        [0.70, 0.20, 0.10],
    ]
)
probs = ProbabilityMatrix.from_values(rows, instance_ids=[101, 102, 103, 104])

print("id   entropy   margin")
for i, instance in enumerate(probs.instance_ids):
    print(f"{instance}   {score_entropy(probs)[i]:.4f}    {score_bt_margin(probs)[i]:.4f}")

print("\nmaximum entropy picks:", select("me", probs, batch=2).chosen_ids.tolist())
print("breaking ties picks:  ", select("bt", probs, batch=2).chosen_ids.tolist())
print("random picks (seed 7):", select("rs", probs.instance_ids, batch=2, seed=7).chosen_ids.tolist())

print("\n== committee averaging can flip the ranking ==")
member1 = np.array([[0.50, 0.50], [0.75, 0.25]])
member2 = np.array([[0.95, 0.05], [0.65, 0.35]])
mean = (member1 + member2) / 2
ids = [0, 1]
pick1 = select("bt", ProbabilityMatrix.from_values(member1, ids), 1).chosen_ids[0]
pick_mean = select("bt", ProbabilityMatrix.from_values(mean, ids), 1).chosen_ids[0]
print(f"member 1 alone would pick candidate {pick1}; "
      f"the two-member average picks candidate {pick_mean}")
print("averaged rows:", np.round(mean, 3).tolist())

print("\n== committee disagreement histogram ==")
# 5 members predicting labels for 8 instances.
preds = np.array(
    [
        [0, 1, 2, 0, 1, 2, 0, 1],
        [0, 1, 2, 0, 1, 2, 1, 1],
        [0, 1, 2, 0, 1, 0, 2, 1],
        [0, 1, 2, 0, 2, 0, 0, 2],
        [0, 1, 2, 1, 2, 1, 1, 0],
    ]
)
hist = agreement_histogram(preds)
for m in range(1, 6):
    bar = "#" * int(hist.counts[m])
    print(f"majority {m}/5: {bar} ({hist.counts[m]})")
print(f"fully agreed on {hist.full_agreement_fraction:.0%} of instances")
