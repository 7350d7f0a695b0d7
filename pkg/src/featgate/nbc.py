"""Gaussian naive Bayes over an arbitrary feature subset, plus the keep/offload rule.

The classifier multiplies per-feature Gaussian likelihoods with class priors
and rescales so the class probabilities sum to one. Evaluation runs in log
space; a variance floor keeps constant features and long products from
degenerating. Only features in the model's active subset contribute, so the
same training data can back an all-features model and a selected-subset model
that are directly comparable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dataset import Dataset, FeatureVector
from .errors import ClassTooSmall, EmptySubset, UnknownClass

DEFAULT_VARIANCE_FLOOR = 1e-9

_LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NbcModel:
    """Per-class Gaussian conditionals and priors; immutable and thread-safe.

    ``means`` and ``variances`` are (K, M) over all features; ``feature_subset``
    (kept sorted ascending) controls which columns posterior evaluation reads.
    The private fields hold two precomputed evaluation forms: flat per-class
    tuples for the scalar per-arrival path, and the expanded quadratic
    coefficients (log p_k(x) = sum_j -a_kj x_j^2 + b_kj x_j + const_k, over the
    subset) that let the batch path score all classes with two matmuls.
    """

    class_ids: tuple[int, ...]
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    feature_subset: tuple[int, ...]
    # scalar path
    _log_priors: tuple[float, ...]
    _mu: tuple[tuple[float, ...], ...]
    _log_norm: tuple[tuple[float, ...], ...]   # -0.5 * ln(2 pi var)
    _inv_two_var: tuple[tuple[float, ...], ...]
    # batch path, already sliced to the subset: (K, m), (K, m), (K,)
    _qf_a: np.ndarray
    _qf_b: np.ndarray
    _qf_c: np.ndarray

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def class_index(self, class_id: int) -> int:
        try:
            return self.class_ids.index(class_id)
        except ValueError:
            raise UnknownClass(f"class {class_id} not in model classes {self.class_ids}")


class DecisionKind(Enum):
    KEEP_LOCAL = "keep_local"
    OFFLOAD_PEER = "offload_peer"
    OFFLOAD_CLOUD = "offload_cloud"


@dataclass(frozen=True)
class Decision:
    """Outcome of one admission check: where the vector goes and why."""

    kind: DecisionKind
    target: int | None          # peer node id for OFFLOAD_PEER, else None
    posterior: np.ndarray       # aligned with model.class_ids, sums to 1
    elapsed_us: float           # wall-clock time of posterior + argmax


def train(corpus: Dataset, feature_subset: Sequence[int],
          variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> NbcModel:
    """Fit priors and per-class per-feature Gaussians from a labeled corpus.

    Every class needs at least 2 samples. Conditionals are fitted for all M
    features (population variance, floored at ``variance_floor``); the subset
    only gates evaluation, so reselecting features never requires refitting.
    """
    labels = corpus.labels()
    if labels is None:
        raise ValueError("training corpus must be fully labeled")
    subset = tuple(sorted(set(int(j) for j in feature_subset)))
    if not subset:
        raise EmptySubset("feature subset must contain at least one index")
    if subset[0] < 0 or subset[-1] >= corpus.n_features:
        raise ValueError(f"subset indices out of range for M={corpus.n_features}")

    X = corpus.matrix()
    class_ids = tuple(int(c) for c in np.unique(labels))
    n = len(corpus)
    priors = np.empty(len(class_ids))
    means = np.empty((len(class_ids), corpus.n_features))
    variances = np.empty_like(means)
    for k, c in enumerate(class_ids):
        rows = X[labels == c]
        if len(rows) < 2:
            raise ClassTooSmall(c, len(rows))
        priors[k] = len(rows) / n
        means[k] = rows.mean(axis=0)
        variances[k] = np.maximum(rows.var(axis=0), variance_floor)

    log_norm = -0.5 * (_LOG_TWO_PI + np.log(variances))
    inv_two_var = 0.5 / variances
    sub = list(subset)
    a = inv_two_var[:, sub]
    mu_s = means[:, sub]
    qf_c = (np.log(priors) + log_norm[:, sub].sum(axis=1)
            - (a * mu_s * mu_s).sum(axis=1))
    return NbcModel(
        class_ids=class_ids,
        priors=priors,
        means=means,
        variances=variances,
        feature_subset=subset,
        _log_priors=tuple(float(v) for v in np.log(priors)),
        _mu=tuple(tuple(row) for row in means),
        _log_norm=tuple(tuple(row) for row in log_norm),
        _inv_two_var=tuple(tuple(row) for row in inv_two_var),
        _qf_a=a,
        _qf_b=2.0 * a * mu_s,
        _qf_c=qf_c,
    )


def log_scores(model: NbcModel, x: np.ndarray) -> list[float]:
    """Unnormalized per-class log scores of one vector over the active subset."""
    scores = list(model._log_priors)
    mu, ln, itv = model._mu, model._log_norm, model._inv_two_var
    for j in model.feature_subset:
        xj = float(x[j])
        for k in range(len(scores)):
            d = xj - mu[k][j]
            scores[k] += ln[k][j] - d * d * itv[k][j]
    return scores


def posterior(model: NbcModel, x: np.ndarray | FeatureVector) -> np.ndarray:
    """Class probabilities for one vector; computed in log space, sums to 1."""
    if isinstance(x, FeatureVector):
        x = x.values
    scores = log_scores(model, x)
    top = max(scores)
    ps = [math.exp(s - top) for s in scores]
    total = sum(ps)
    return np.array([p / total for p in ps])


def posterior_batch(model: NbcModel, X: np.ndarray) -> np.ndarray:
    """Class probabilities for every row of X, shape (n, K). Vectorized."""
    X = np.asarray(X, dtype=float)
    if len(model.feature_subset) == model.n_features:
        Xs = X
    else:
        Xs = X[:, list(model.feature_subset)]
    scores = Xs @ model._qf_b.T - (Xs * Xs) @ model._qf_a.T + model._qf_c
    scores -= scores.max(axis=1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=1, keepdims=True)
    return scores


def decide(model: NbcModel, x: np.ndarray | FeatureVector, local_class: int,
           p_min: float = 0.0) -> Decision:
    """Keep the vector, offload it to the best-matching peer, or send it to cloud.

    Keeps when the local class wins the posterior; otherwise offloads to the
    winning peer if its probability clears ``p_min``, else routes to cloud.
    Exact posterior ties resolve toward the local class first, then the lowest
    class id, so ambiguity never generates offload traffic.
    """
    if not 0.0 <= p_min <= 1.0:
        raise ValueError("p_min must lie in [0, 1]")
    local_idx = model.class_index(local_class)
    if isinstance(x, FeatureVector):
        x = x.values

    t0 = time.perf_counter_ns()
    post = posterior(model, x)
    best = 0
    for k in range(1, len(post)):
        if post[k] > post[best]:
            best = k
    if post[local_idx] == post[best]:
        best = local_idx
    elapsed_us = (time.perf_counter_ns() - t0) / 1000.0

    if best == local_idx:
        return Decision(DecisionKind.KEEP_LOCAL, None, post, elapsed_us)
    if post[best] >= p_min:
        return Decision(DecisionKind.OFFLOAD_PEER, model.class_ids[best], post, elapsed_us)
    return Decision(DecisionKind.OFFLOAD_CLOUD, None, post, elapsed_us)
