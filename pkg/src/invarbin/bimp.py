"""Matching-pairs classifier for an unseen environment.

A pair (k, S) predicts the class probability at x through the ratio

    (E[X_k | X_S = x] - h(x, 0)) / (h(x, 1) - h(x, 0))

where h(x, y) estimates the class-conditional expectation of column k given
the columns in S, fitted once on pooled training data, and the leading term
is refit on the target environment's features alone.  Pairs whose
class-conditional mechanism is not environment-constant are weeded out by
the residual-distribution test; the survivors are ranked by their training
prediction error and averaged.

The ratio is undefined where its denominator vanishes; such rows are
tracked explicitly (degenerate mask) rather than silently clamped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import MultiEnvDataset, test_subset, training_subset
from .errors import (
    DegeneratePairError,
    DegenerateResponseError,
    InsufficientDataError,
    ValidationError,
)
from .invariance import (
    SCOPE_ENV,
    InvarianceReport,
    Pair,
    batched_residual_tests,
)
from .regression import fit_ols, fit_spline_additive, model_to_dict, predict

VARIANT_LINEAR = "linear"
VARIANT_GAM = "gam"

_DEFAULT_SUBSET_CAP = 3
_DEGENERATE_DROP_FRACTION = 0.5


def bimp_ratio(marginal: float, h0: float, h1: float, eps_den: float) -> float | None:
    """Scalar matching ratio, clamped to [0, 1]; None when degenerate.

    ``eps_den`` is the absolute tolerance below which the denominator
    h1 - h0 counts as vanished.
    """
    for name, v in (("marginal", marginal), ("h0", h0), ("h1", h1)):
        if not math.isfinite(v):
            raise ValidationError(f"{name} must be finite, got {v!r}")
    if not (math.isfinite(eps_den) and eps_den >= 0.0):
        raise ValidationError(f"eps_den must be a non-negative float, got {eps_den!r}")
    den = h1 - h0
    if abs(den) <= eps_den:
        return None
    return min(1.0, max(0.0, (marginal - h0) / den))


def _as_groups(m: int, groups: Sequence[Sequence[int]] | None) -> tuple[tuple[int, ...], ...]:
    if groups is None:
        return tuple((j,) for j in range(m))
    seen: set[int] = set()
    out = []
    for group in groups:
        g = tuple(int(j) for j in group)
        if not g:
            raise ValidationError("feature groups must be non-empty")
        for j in g:
            if j < 0 or j >= m:
                raise ValidationError(f"group column {j} outside range(0, {m})")
            if j in seen:
                raise ValidationError(f"column {j} appears in two groups")
            seen.add(j)
        out.append(g)
    if len(seen) != m:
        raise ValidationError("feature groups must cover every column")
    return tuple(out)


def enumerate_pairs(
    m: int,
    max_subset_size: int | None = None,
    groups: Sequence[Sequence[int]] | None = None,
) -> tuple[Pair, ...]:
    """All candidate pairs in deterministic graded-lexicographic order.

    k sweeps the columns in ascending order; for each k the conditioning
    sets are unions of whole groups not containing k, enumerated by group
    count (empty set first) and lexicographically within a count.  Without
    explicit groups every column is its own group.  ``max_subset_size``
    bounds the number of groups in a conditioning set; the default is
    min(3, available groups).
    """
    if m < 1:
        raise ValidationError(f"need at least one column, got m = {m}")
    if max_subset_size is not None and max_subset_size < 0:
        raise ValidationError(f"max_subset_size must be non-negative, got {max_subset_size}")
    grouped = _as_groups(m, groups)
    pairs: list[Pair] = []
    for k in range(m):
        candidates = [g for g in grouped if k not in g]
        cap = _DEFAULT_SUBSET_CAP if max_subset_size is None else max_subset_size
        cap = min(cap, len(candidates))
        for size in range(cap + 1):
            for chosen in itertools.combinations(range(len(candidates)), size):
                columns = tuple(sorted(j for i in chosen for j in candidates[i]))
                pairs.append(Pair(k=k, s=columns))
    return tuple(pairs)


@dataclass(frozen=True)
class PairModel:
    """Everything needed to evaluate one pair on target rows.

    ``h0``/``h1`` are pooled-training least-squares fits of column k on the
    conditioning columns within each class; ``marginal`` is the fit of k on
    the conditioning columns over the target environment's features (least
    squares or additive splines, per ``variant``).  ``eps_abs`` is the
    realized absolute degeneracy tolerance.
    """

    pair: Pair
    h0: object
    h1: object
    marginal: object
    eps_abs: float
    variant: str


def _marginal_fitter(variant: str):
    if variant == VARIANT_LINEAR:
        return fit_ols
    if variant == VARIANT_GAM:
        return fit_spline_additive
    raise ValidationError(f"unknown variant {variant!r}")


def _slice(features: np.ndarray, cols: tuple[int, ...]) -> np.ndarray:
    return features[:, list(cols)] if cols else features[:, :0]


def fit_pair_model(
    d: MultiEnvDataset,
    pair: Pair,
    variant: str = VARIANT_LINEAR,
    eps_den: float = 1e-6,
    target_features: np.ndarray | None = None,
) -> PairModel:
    """Fit h0, h1 on pooled training rows and the marginal on target rows.

    ``target_features`` defaults to the feature matrix of the dataset's
    test environment.  ``eps_den`` is relative: the absolute degeneracy
    tolerance becomes eps_den times the pooled-training standard deviation
    of column k (or eps_den itself when that deviation is zero).
    """
    fitter = _marginal_fitter(variant)
    if not eps_den > 0.0:
        raise ValidationError(f"eps_den must be positive, got {eps_den!r}")
    train = training_subset(d)
    if pair.k >= train.m or (pair.s and max(pair.s) >= train.m):
        raise ValidationError(f"pair {pair} references columns beyond m = {train.m}")
    if target_features is None:
        target_features = test_subset(d).features
    target_features = np.asarray(target_features, dtype=float)
    if target_features.ndim != 2 or target_features.shape[1] != train.m:
        raise ValidationError("target features must be 2-D with matching column count")

    classes = np.unique(train.response)
    if classes.size < 2:
        raise DegenerateResponseError("training rows contain a single class")

    hs = {}
    for y in (0, 1):
        mask = train.response == y
        hs[y] = fit_ols(_slice(train.features[mask], pair.s), train.features[mask, pair.k])
    spread = float(np.std(train.features[:, pair.k]))
    eps_abs = eps_den * spread if spread > 0.0 else eps_den
    marginal = fitter(_slice(target_features, pair.s), target_features[:, pair.k])
    return PairModel(
        pair=pair, h0=hs[0], h1=hs[1], marginal=marginal, eps_abs=eps_abs, variant=variant
    )


def _pair_values(model: PairModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s_block = _slice(X, model.pair.s)
    mv = predict(model.marginal, s_block)
    h0v = predict(model.h0, s_block)
    h1v = predict(model.h1, s_block)
    den = h1v - h0v
    degenerate = np.abs(den) <= model.eps_abs
    probs = np.full(X.shape[0], np.nan)
    ok = ~degenerate
    probs[ok] = np.clip((mv[ok] - h0v[ok]) / den[ok], 0.0, 1.0)
    return probs, degenerate


def predict_pair(model: PairModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Per-row ratio predictions and the degenerate-row mask.

    Degenerate rows carry NaN in the first array and True in the second.
    Raises when every row is degenerate, since the pair then says nothing.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite entries")
    probs, degenerate = _pair_values(model, X)
    if X.shape[0] and bool(np.all(degenerate)):
        raise DegeneratePairError(f"all {X.shape[0]} rows are degenerate for pair {model.pair}")
    return probs, degenerate


@dataclass(frozen=True)
class ScoreFilterResult:
    kept: tuple[PairModel, ...]
    scores: Mapping[Pair, float]
    threshold: float


def score_filter(
    models: Sequence[PairModel], d: MultiEnvDataset, tau: float = 0.1
) -> ScoreFilterResult:
    """Keep the pairs whose training error is within a factor of the best.

    Each pair is scored by the mean squared difference between its ratio
    predictions and the observed classes over all training rows, with the
    marginal term refit inside each training environment (the h fits stay
    pooled).  Degenerate rows do not contribute.  Pairs score infinity when
    no row contributes; the filter keeps scores at most (1 + tau) times the
    minimum and always keeps an argmin, so the result is never empty.
    """
    if not models:
        raise ValidationError("score_filter needs at least one pair model")
    if not tau >= 0.0:
        raise ValidationError(f"tau must be non-negative, got {tau!r}")
    train = training_subset(d)
    labels = train.train_labels
    scores: dict[Pair, float] = {}
    for model in models:
        fitter = _marginal_fitter(model.variant)
        errors: list[np.ndarray] = []
        for label in labels:
            env = train.take(train.rows_in(label))
            s_block = _slice(env.features, model.pair.s)
            x_k = env.features[:, model.pair.k]
            try:
                env_marginal = fitter(s_block, x_k)
            except InsufficientDataError:
                continue
            mv = predict(env_marginal, s_block)
            h0v = predict(model.h0, s_block)
            h1v = predict(model.h1, s_block)
            den = h1v - h0v
            ok = np.abs(den) > model.eps_abs
            if not np.any(ok):
                continue
            ratio = np.clip((mv[ok] - h0v[ok]) / den[ok], 0.0, 1.0)
            errors.append((ratio - env.response[ok]) ** 2)
        if errors:
            stacked = np.concatenate(errors)
            scores[model.pair] = float(stacked.mean())
        else:
            scores[model.pair] = math.inf

    best = min(scores.values())
    if not math.isfinite(best):
        # nothing scored; keep the first model to stay deterministic
        return ScoreFilterResult(kept=(models[0],), scores=scores, threshold=math.inf)
    threshold = (1.0 + tau) * best
    kept = tuple(m for m in models if scores[m.pair] <= threshold)
    return ScoreFilterResult(kept=kept, scores=scores, threshold=threshold)


@dataclass(frozen=True)
class BimpModel:
    """Fitted ensemble over the accepted, score-filtered pairs.

    ``abstained`` is True when no pair survived; such a model refuses to
    predict.  ``base_rate`` (pooled training class-1 frequency) backs rows
    where every kept pair is degenerate.  ``counts`` records how many pairs
    were enumerated, accepted, skipped, rejected, dropped as mostly
    degenerate on the target, and finally kept.
    """

    variant: str
    alpha: float
    tau: float
    eps_den: float
    pair_models: tuple[PairModel, ...]
    scores: Mapping[Pair, float]
    threshold: float | None
    base_rate: float
    abstained: bool
    reports: tuple[InvarianceReport, ...]
    counts: Mapping[str, int]

    @property
    def pairs(self) -> tuple[Pair, ...]:
        return tuple(m.pair for m in self.pair_models)


@dataclass(frozen=True)
class BimpPrediction:
    """Ensemble predictions: probabilities, hard labels, fallback rows.

    ``fallback`` flags rows where no kept pair contributed (all degenerate)
    and the probability is the training base rate.
    """

    probabilities: np.ndarray
    labels: np.ndarray
    fallback: np.ndarray


def fit_bimp(
    d: MultiEnvDataset,
    alpha: float = 0.1,
    variant: str = VARIANT_LINEAR,
    max_subset_size: int | None = None,
    tau: float = 0.1,
    eps_den: float = 1e-6,
    bonferroni_scope: str = SCOPE_ENV,
    group_one_hot: bool = True,
    n_workers: int = 1,
) -> BimpModel:
    """Run the full pipeline on a dataset with training and test environments.

    Enumerate candidate pairs (one-hot groups enter conditioning sets as
    units when ``group_one_hot``), keep those accepted by the
    residual-distribution test at level ``alpha``, drop the accepted pairs
    whose training error exceeds (1 + tau) times the best, fit the target
    marginal for the survivors, and drop any survivor degenerate on more
    than half of the target rows.  The model abstains when nothing remains.
    """
    _marginal_fitter(variant)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    train = training_subset(d)
    if len(train.train_labels) < 2:
        raise ValidationError("need at least two training environments")
    if d.test_label is None:
        raise ValidationError("dataset declares no test environment")

    base_rate = float(train.response.mean())
    groups = None
    if group_one_hot:
        from .data import feature_groups

        grouped = feature_groups(d)
        if any(len(g) > 1 for g in grouped):
            groups = grouped
    pairs = enumerate_pairs(d.m, max_subset_size=max_subset_size, groups=groups)

    reports = tuple(
        batched_residual_tests(
            d, pairs, alpha=alpha, bonferroni_scope=bonferroni_scope, n_workers=n_workers
        )
    )
    counts = {
        "enumerated": len(pairs),
        "accepted": sum(r.verdict == "accepted" for r in reports),
        "rejected": sum(r.verdict == "rejected" for r in reports),
        "skipped": sum(r.verdict == "skipped" for r in reports),
        "dropped_degenerate": 0,
        "kept": 0,
    }
    accepted = [r.pair for r in reports if r.accepted]
    if not accepted:
        return BimpModel(
            variant=variant,
            alpha=alpha,
            tau=tau,
            eps_den=eps_den,
            pair_models=(),
            scores={},
            threshold=None,
            base_rate=base_rate,
            abstained=True,
            reports=reports,
            counts=counts,
        )

    target = test_subset(d).features
    fitted = [
        fit_pair_model(d, pair, variant=variant, eps_den=eps_den, target_features=target)
        for pair in accepted
    ]
    filtered = score_filter(fitted, d, tau=tau)

    survivors: list[PairModel] = []
    for model in filtered.kept:
        _, degenerate = _pair_values(model, target)
        if target.shape[0] and degenerate.mean() > _DEGENERATE_DROP_FRACTION:
            counts["dropped_degenerate"] += 1
            continue
        survivors.append(model)
    counts["kept"] = len(survivors)
    if not survivors:
        return BimpModel(
            variant=variant,
            alpha=alpha,
            tau=tau,
            eps_den=eps_den,
            pair_models=(),
            scores=filtered.scores,
            threshold=filtered.threshold,
            base_rate=base_rate,
            abstained=True,
            reports=reports,
            counts=counts,
        )
    return BimpModel(
        variant=variant,
        alpha=alpha,
        tau=tau,
        eps_den=eps_den,
        pair_models=tuple(survivors),
        scores=filtered.scores,
        threshold=filtered.threshold,
        base_rate=base_rate,
        abstained=False,
        reports=reports,
        counts=counts,
    )


def predict_bimp(model: BimpModel, X) -> BimpPrediction:
    """Average the kept pairs' ratios row by row.

    Rows where a pair is degenerate simply lose that pair's vote; rows where
    every pair is degenerate fall back to the training base rate and are
    flagged.  Hard labels threshold the probability at 1/2, with ties going
    to class 1.  An abstaining model refuses to predict.
    """
    if model.abstained:
        raise ValidationError("model abstained; no pairs available for prediction")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite entries")
    n = X.shape[0]
    total = np.zeros(n)
    contributors = np.zeros(n)
    for pm in model.pair_models:
        probs, degenerate = _pair_values(pm, X)
        ok = ~degenerate
        total[ok] += probs[ok]
        contributors[ok] += 1.0
    fallback = contributors == 0
    probabilities = np.where(fallback, model.base_rate, total / np.maximum(contributors, 1.0))
    labels = (probabilities >= 0.5).astype(np.int64)
    return BimpPrediction(probabilities=probabilities, labels=labels, fallback=fallback)


def bimp_to_dict(model: BimpModel, column_names: Sequence[str] | None = None) -> dict:
    """JSON-ready description of a fitted ensemble (reports excluded)."""
    names = list(column_names) if column_names is not None else None

    def col(j: int):
        return names[j] if names else j

    return {
        "variant": model.variant,
        "alpha": model.alpha,
        "tau": model.tau,
        "eps_den": model.eps_den,
        "abstained": model.abstained,
        "base_rate": model.base_rate,
        "threshold": model.threshold,
        "counts": dict(model.counts),
        "pairs": [
            {
                "k": col(pm.pair.k),
                "s": [col(j) for j in pm.pair.s],
                "eps_abs": pm.eps_abs,
                "score": model.scores.get(pm.pair),
                "h0": model_to_dict(pm.h0),
                "h1": model_to_dict(pm.h1),
                "marginal": model_to_dict(pm.marginal),
            }
            for pm in model.pair_models
        ],
    }
