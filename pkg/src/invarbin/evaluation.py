"""Scoring helpers and replicate aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def accuracy(labels, y) -> float:
    """Fraction of exact label matches."""
    labels = np.asarray(labels)
    y = np.asarray(y)
    if labels.shape != y.shape or labels.ndim != 1:
        raise ValidationError("labels and y must be 1-D with equal length")
    if labels.size == 0:
        raise ValidationError("cannot score zero samples")
    return float(np.mean(labels == y))


def mse(probs, y) -> float:
    """Mean squared error of probability predictions against {0,1} outcomes."""
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(y, dtype=float)
    if probs.shape != y.shape or probs.ndim != 1:
        raise ValidationError("probs and y must be 1-D with equal length")
    if probs.size == 0:
        raise ValidationError("cannot score zero samples")
    return float(np.mean((probs - y) ** 2))


@dataclass(frozen=True)
class RunSummary:
    """One method's outcome on one replicate.

    ``accuracy`` and ``mse`` are None when the method abstained; ``n_pairs``
    is meaningful for the ensemble methods (0 otherwise); ``seconds`` is
    wall-clock time and is written as 0.0 unless timing was requested, so
    default outputs stay byte-identical across reruns.
    """

    method: str
    replicate: int
    accuracy: float | None
    mse: float | None
    abstained: bool
    n_pairs: int = 0
    seconds: float = 0.0


@dataclass(frozen=True)
class MethodAggregate:
    """Distribution summary of one method across replicates.

    Quartiles are computed over non-abstaining replicates only and are None
    when every replicate abstained.
    """

    method: str
    n_replicates: int
    n_abstained: int
    abstention_rate: float
    acc_median: float | None
    acc_q1: float | None
    acc_q3: float | None
    mse_median: float | None
    mse_q1: float | None
    mse_q3: float | None


def _quartiles(values: list[float]) -> tuple[float | None, float | None, float | None]:
    if not values:
        return None, None, None
    q1, q2, q3 = np.percentile(np.asarray(values, dtype=float), [25.0, 50.0, 75.0])
    return float(q2), float(q1), float(q3)


def aggregate_replicates(summaries) -> tuple[MethodAggregate, ...]:
    """Aggregate per-replicate summaries into per-method distribution stats.

    The result is sorted by method name and does not depend on the input
    order of the summaries.
    """
    summaries = list(summaries)
    if not summaries:
        raise ValidationError("nothing to aggregate")
    by_method: dict[str, list[RunSummary]] = {}
    for s in summaries:
        by_method.setdefault(s.method, []).append(s)
    out = []
    for method in sorted(by_method):
        rows = by_method[method]
        n = len(rows)
        abstained = sum(r.abstained for r in rows)
        accs = sorted(r.accuracy for r in rows if not r.abstained and r.accuracy is not None)
        mses = sorted(r.mse for r in rows if not r.abstained and r.mse is not None)
        acc_median, acc_q1, acc_q3 = _quartiles(accs)
        mse_median, mse_q1, mse_q3 = _quartiles(mses)
        out.append(
            MethodAggregate(
                method=method,
                n_replicates=n,
                n_abstained=abstained,
                abstention_rate=abstained / n,
                acc_median=acc_median,
                acc_q1=acc_q1,
                acc_q3=acc_q3,
                mse_median=mse_median,
                mse_q1=mse_q1,
                mse_q3=mse_q3,
            )
        )
    return tuple(out)
