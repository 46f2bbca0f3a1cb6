"""
From a raw UCI file to an environment-split prediction
======================================================

Walks the census table through the whole pipeline by hand: derive an
environment column (college graduates are the unlabeled target split,
everyone else lands in a training environment by birthplace), sniff and
one-hot encode the columns, then compare the ensemble against pooled
logistic regression on the held-out split.

Needs 'adult.data' from https://archive.ics.uci.edu/dataset/2/adult in
the working directory (or pointed at by INVARBIN_CENSUS_PATH).
"""

import csv
import os
import sys

import numpy as np

from invarbin import (
    accuracy,
    encode_table,
    fit_bimp,
    fit_lr_baseline,
    predict,
    predict_bimp,
    sniff_table,
    test_subset,
)

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]

path = os.environ.get("INVARBIN_CENSUS_PATH", "adult.data")
if not os.path.exists(path):
    print(f"census file not found at {path!r}; download 'adult.data' from")
    print("https://archive.ics.uci.edu/dataset/2/adult and re-run.")
    sys.exit(0)

rows = []
with open(path, newline="", encoding="utf-8") as fh:
    for line_no, rec in enumerate(csv.reader(fh, skipinitialspace=True), start=1):
        if not rec or len(rec) != len(COLUMNS):
            continue
        if "?" in rec:
            continue  # the file marks missing entries with '?'
        graduated = float(rec[COLUMNS.index("education-num")]) >= 13
        born_us = rec[COLUMNS.index("native-country")] == "United-States"
        env = "test" if graduated else ("env_yes" if born_us else "env_no")
        rows.append((line_no, rec + [env]))

header = COLUMNS + ["__env__"]
spec = sniff_table(
    header,
    rows,
    env_column="__env__",
    response_column="income",
    test_env="test",
    response_map={">50K": 1, "<=50K": 0, ">50K.": 1, "<=50K.": 0},
    exclude=("income", "education", "education-num", "native-country"),
)
d = encode_table(header, rows, spec)
held_out = test_subset(d)
print(f"{d.n} rows, {d.m} encoded columns, {held_out.n} in the held-out split")

model = fit_bimp(d, variant="linear")
if model.abstained:
    print("ensemble abstained")
else:
    pred = predict_bimp(model, held_out.features)
    print(
        f"bimp-linear: accuracy {accuracy(pred.labels, held_out.response):.3f} "
        f"({len(model.pair_models)} pairs kept)"
    )

lr = fit_lr_baseline(d)
probs = predict(lr, held_out.features)
print(f"lr: accuracy {accuracy((probs >= 0.5).astype(np.int64), held_out.response):.3f}")
