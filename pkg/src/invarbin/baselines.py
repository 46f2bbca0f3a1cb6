"""Reference methods: pooled logistic regression and an invariant-set search.

The pooled baseline ignores environments entirely.  The invariant-set
search mirrors the classical approach of keeping every feature subset whose
pooled logistic fit leaves environment-indistinguishable deviance
residuals, then intersecting the accepted subsets; it abstains rather than
guess when the intersection is empty or nothing is accepted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import MultiEnvDataset, feature_groups, training_subset
from .errors import ValidationError
from .regression import LogisticModel, fit_logistic, predict
from .stats import bonferroni_combine, welch_t_test
from ._workers import map_ordered

_DEFAULT_SUBSET_CAP = 3


def fit_lr_baseline(d: MultiEnvDataset) -> LogisticModel:
    """Logistic regression on all features over pooled training rows."""
    train = training_subset(d)
    return fit_logistic(train.features, train.response)


def deviance_residuals(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Signed square-root deviance contributions of a binary fit."""
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(y, dtype=float)
    if probs.shape != y.shape:
        raise ValidationError("probs and y must have the same shape")
    if np.any((probs <= 0.0) | (probs >= 1.0)):
        raise ValidationError("probs must lie strictly inside (0, 1)")
    inner = y * np.log(probs) + (1.0 - y) * np.log(1.0 - probs)
    return np.sign(y - probs) * np.sqrt(-2.0 * inner)


@dataclass(frozen=True)
class IcpResult:
    """Outcome of the invariant-set search.

    ``accepted`` lists the subsets (as column-index tuples) that passed;
    ``intersection`` is their common part and ``model`` the final logistic
    fit on it, or None when the search abstained.  ``pvals`` maps each
    tested subset to its combined p-value.
    """

    accepted: tuple[tuple[int, ...], ...]
    intersection: tuple[int, ...]
    model: LogisticModel | None
    abstained: bool
    alpha: float
    pvals: Mapping[tuple[int, ...], float]


def _subsets(
    m: int, max_subset_size: int | None, groups: Sequence[Sequence[int]] | None
) -> list[tuple[int, ...]]:
    if groups is None:
        groups = [(j,) for j in range(m)]
    cap = _DEFAULT_SUBSET_CAP if max_subset_size is None else max_subset_size
    cap = min(cap, len(groups))
    out: list[tuple[int, ...]] = []
    for size in range(cap + 1):
        for chosen in itertools.combinations(range(len(groups)), size):
            out.append(tuple(sorted(j for i in chosen for j in groups[i])))
    return out


def fit_icp(
    d: MultiEnvDataset,
    alpha: float = 0.1,
    max_subset_size: int | None = None,
    group_one_hot: bool = True,
    n_workers: int = 1,
) -> IcpResult:
    """Search feature subsets whose pooled fit is environment-invariant.

    For each subset (including the empty one, up to ``max_subset_size``
    groups), a pooled logistic model is fit and its deviance residuals are
    compared per environment (inside vs outside) with Welch t-tests,
    Bonferroni-combined over environments.  Subsets with combined p-value
    above ``alpha`` are accepted.  The final predictor uses the intersection
    of accepted subsets; an empty intersection or empty acceptance list
    means abstention.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    train = training_subset(d)
    labels = train.train_labels
    if len(labels) < 2:
        raise ValidationError("invariant-set search needs at least two training environments")

    groups = None
    if group_one_hot:
        grouped = feature_groups(d)
        if any(len(g) > 1 for g in grouped):
            groups = grouped
    subsets = _subsets(train.m, max_subset_size, groups)
    env_arr = train.env_of

    def test_subset_cols(cols: tuple[int, ...]) -> float:
        X = train.features[:, list(cols)] if cols else train.features[:, :0]
        model = fit_logistic(X, train.response)
        residuals = deviance_residuals(predict(model, X), train.response)
        per_env = []
        for label in labels:
            inside = residuals[env_arr == label]
            outside = residuals[env_arr != label]
            per_env.append(welch_t_test(inside, outside).p_value)
        return bonferroni_combine(per_env)

    pvals_list = map_ordered(test_subset_cols, subsets, n_workers)
    pvals = dict(zip(subsets, pvals_list))
    accepted = tuple(cols for cols in subsets if pvals[cols] > alpha)

    if not accepted:
        return IcpResult(
            accepted=(), intersection=(), model=None, abstained=True, alpha=alpha, pvals=pvals
        )
    common = set(accepted[0])
    for cols in accepted[1:]:
        common &= set(cols)
    intersection = tuple(sorted(common))
    if not intersection:
        return IcpResult(
            accepted=accepted,
            intersection=(),
            model=None,
            abstained=True,
            alpha=alpha,
            pvals=pvals,
        )
    model = fit_logistic(train.features[:, list(intersection)], train.response)
    return IcpResult(
        accepted=accepted,
        intersection=intersection,
        model=model,
        abstained=False,
        alpha=alpha,
        pvals=pvals,
    )


def predict_baseline(fitted, X) -> np.ndarray | None:
    """Hard labels from a baseline fit; None when the fit abstained.

    Accepts a LogisticModel (thresholds its probabilities at 1/2, ties to
    class 1) or an IcpResult (predicts on the intersection columns).
    """
    X = np.asarray(X, dtype=float)
    if isinstance(fitted, LogisticModel):
        return (predict(fitted, X) >= 0.5).astype(np.int64)
    if isinstance(fitted, IcpResult):
        if fitted.abstained:
            return None
        cols = list(fitted.intersection)
        return (predict(fitted.model, X[:, cols]) >= 0.5).astype(np.int64)
    raise ValidationError(f"unknown baseline fit: {type(fitted).__name__}")
