"""
Screening candidate pairs with the residual test
================================================

Build a small dataset where x3's dependence on x1 is the same in both
training environments while x2's intercept moves, then run the residual
distribution test over every candidate pair and print the verdicts.
"""

import numpy as np

from invarbin import (
    Environment,
    MultiEnvDataset,
    ROLE_TEST,
    ROLE_TRAIN,
    enumerate_pairs,
    residual_distribution_test,
)

rng = np.random.default_rng(4)
blocks, ys, labels = [], [], []
for label, x2_offset in (("p", 0.0), ("q", 1.5), ("t", 0.5)):
    n = 1500
    x1 = rng.standard_normal(n)
    y = (x1 + 0.8 * rng.standard_normal(n) > 0).astype(np.int64)
    # stable mechanism: slope on x1 switches with the class, same everywhere
    x3 = (1.0 + y) * x1 + 0.4 * rng.standard_normal(n)
    # unstable mechanism: intercept moves between environments
    x2 = 0.7 * x1 + x2_offset + 0.4 * rng.standard_normal(n)
    blocks.append(np.column_stack([x1, x2, x3]))
    ys.append(y)
    labels.extend([label] * n)

d = MultiEnvDataset(
    features=np.vstack(blocks),
    response=np.concatenate(ys),
    env_of=np.asarray(labels, dtype=object),
    environments=(
        Environment("p", ROLE_TRAIN),
        Environment("q", ROLE_TRAIN),
        Environment("t", ROLE_TEST),
    ),
    column_names=("x1", "x2", "x3"),
)

print(f"{'pair':<18} {'verdict':<10} worst adjusted p")
for pair in enumerate_pairs(3, max_subset_size=2):
    report = residual_distribution_test(d, pair, alpha=0.1)
    names = "{" + ",".join(d.column_names[j] for j in pair.s) + "}"
    shown = f"({d.column_names[pair.k]}, {names})"
    if report.verdict == "skipped":
        print(f"{shown:<18} {report.verdict:<10} {report.reason}")
        continue
    worst = min(p for by in report.pvals.values() for p in by.values())
    print(f"{shown:<18} {report.verdict:<10} {worst:.4f}")
