"""Model-agnostic feature-importance estimators.

Three complementary views of how much each feature matters to a black-box
score function:

* permutation importance — ratio of the loss after breaking a feature's
  tie to the outcome (by swapping its values between two dataset halves)
  to the untouched baseline loss;
* Monte-Carlo Shapley values — averaged marginal contributions of one
  feature value over randomly sampled feature coalitions;
* interaction share — the fraction of score variance that the feature's
  partial-dependence curve and its complement cannot explain additively.

All estimators treat the model as an opaque ``predict``/``loss`` surface and
are pure over an immutable dataset snapshot, so per-feature computations can
run in any order (or concurrently) without changing results: randomness comes
only from seeds derived per (estimator, feature).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, from_matrix
from .errors import DatasetTooSmall, ZeroBaselineWarning
from .nbc import NbcModel, posterior_batch

# tags used when deriving per-feature RNG streams; fixed forever
_TAG_PFI = 0
_TAG_SHAPLEY = 1
_TAG_SNAPSHOT = 3

_CLIP = 1e-12


class PredictiveModel:
    """Evaluation surface the estimators probe: a score and a loss.

    ``predict_batch`` maps an (n, M) array to n real scores; ``loss`` measures
    how badly the scores explain the dataset's labels. Predictions must be
    deterministic and the loss non-negative.
    """

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x: np.ndarray) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=float)[None, :])[0])

    def loss(self, X: np.ndarray, labels: np.ndarray) -> float:
        raise NotImplementedError


class NbcLocalPosterior(PredictiveModel):
    """The admission classifier seen as a black box: P(local class | x).

    Loss is the binary cross-entropy of that probability against "the row
    belongs to the local class" (the proper score for a probabilistic
    classifier); mean squared error is available for comparison runs.
    """

    def __init__(self, model: NbcModel, local_class: int, loss_kind: str = "logloss"):
        if loss_kind not in ("logloss", "mse"):
            raise ValueError(f"unknown loss kind {loss_kind!r}")
        self.model = model
        self.local_class = local_class
        self.local_idx = model.class_index(local_class)
        self.loss_kind = loss_kind

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return posterior_batch(self.model, X)[:, self.local_idx]

    def loss(self, X: np.ndarray, labels: np.ndarray) -> float:
        p = self.predict_batch(X)
        y = (np.asarray(labels) == self.local_class).astype(float)
        if self.loss_kind == "mse":
            return float(np.mean((p - y) ** 2))
        p = np.clip(p, _CLIP, 1.0 - _CLIP)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


class FunctionModel(PredictiveModel):
    """Wrap an arbitrary row-wise score function; loss is MSE against labels."""

    def __init__(self, fn):
        self.fn = fn

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(X, dtype=float)), dtype=float)

    def loss(self, X: np.ndarray, labels: np.ndarray) -> float:
        p = self.predict_batch(X)
        return float(np.mean((p - np.asarray(labels, dtype=float)) ** 2))


@dataclass(frozen=True)
class ImportanceScores:
    """Per-feature triple (permutation ratio, mean |Shapley|, interaction share)."""

    pfi: np.ndarray
    shapley: np.ndarray
    fit: np.ndarray

    def __post_init__(self):
        for name in ("pfi", "shapley", "fit"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} scores contain non-finite values")
            object.__setattr__(self, name, arr)
        if not (len(self.pfi) == len(self.shapley) == len(self.fit)):
            raise ValueError("score arrays must share one length")
        if np.any(self.fit < 0) or np.any(self.fit > 1):
            raise ValueError("interaction shares must lie in [0, 1]")

    @property
    def n_features(self) -> int:
        return len(self.pfi)


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs for the three estimators and the dataset snapshot they run on."""

    pfi_repetitions: int = 5
    shapley_iters: int = 80
    shapley_instances: int = 40
    snapshot_max: int = 64


def _labeled_arrays(d: Dataset):
    y = d.labels()
    if y is None:
        raise ValueError("dataset must be labeled")
    return d.matrix(), y


def pfi(model: PredictiveModel, d: Dataset, j: int, repetitions: int = 5,
        seed=0) -> float:
    """Permutation importance of feature j as a loss ratio (1.0 = no effect).

    Each repetition shuffles the row order, splits the rows in half and swaps
    the j-th column between the halves, which breaks that feature's link to
    the outcome while preserving its marginal distribution. The returned value
    is the mean over repetitions of (swapped loss) / (baseline loss). A zero
    baseline (already-perfect model) yields the sentinel ratio 1.0 along with
    a ZeroBaselineWarning, since permutation can teach us nothing there.
    """
    X, y = _labeled_arrays(d)
    n = len(X)
    if n < 4:
        raise DatasetTooSmall(f"permutation importance needs >= 4 rows, got {n}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    e_base = model.loss(X, y)
    if e_base <= 0.0:
        warnings.warn("baseline loss is zero; returning ratio 1.0", ZeroBaselineWarning)
        return 1.0

    rng = np.random.default_rng(seed)
    half = n // 2
    ratios = np.empty(repetitions)
    for r in range(repetitions):
        idx = rng.permutation(n)
        Xp = X[idx].copy()
        col = Xp[:, j].copy()
        Xp[:half, j] = col[half:2 * half]
        Xp[half:2 * half, j] = col[:half]
        ratios[r] = model.loss(Xp, y[idx]) / e_base
    return float(ratios.mean())


def shapley_instance_draws(model: PredictiveModel, d: Dataset, i: int, j: int,
                           m_iters: int = 100, seed=0) -> np.ndarray:
    """Per-iteration sampled contributions of feature j to instance i's score.

    Per iteration: draw a random background instance and a random feature
    ordering; build one hybrid that takes feature j and everything ordered
    before it from instance i (the rest from the background row), and a twin
    that differs only in feature j, which it takes from the background row.
    Returns the score difference of every hybrid/twin pair; besides backing
    the point estimate this lets callers form confidence bands from the
    empirical spread.
    """
    if m_iters < 1:
        raise ValueError("m_iters must be >= 1")
    X = d.matrix()
    n, M = X.shape
    if n < 2:
        raise DatasetTooSmall("Shapley sampling needs >= 2 rows")
    rng = np.random.default_rng(seed)
    backgrounds = rng.integers(0, n, size=m_iters)
    # uniform sort keys define each iteration's feature ordering: feature f
    # precedes j exactly when its key is smaller, so one comparison per entry
    # replaces materializing the permutation
    keys = rng.random((m_iters, M))
    from_i = keys <= keys[:, j:j + 1]
    base = X[backgrounds]
    with_j = np.where(from_i, X[i], base)
    without_j = with_j.copy()
    without_j[:, j] = base[:, j]
    preds = model.predict_batch(np.vstack([with_j, without_j]))
    return preds[:m_iters] - preds[m_iters:]


def shapley_instance(model: PredictiveModel, d: Dataset, i: int, j: int,
                     m_iters: int = 100, seed=0) -> float:
    """Monte-Carlo Shapley contribution of feature j to the score of instance i:
    the mean of the sampled hybrid/twin differences."""
    return float(shapley_instance_draws(model, d, i, j, m_iters, seed).mean())


def shapley_feature(model: PredictiveModel, d: Dataset, j: int,
                    n_instances: int = 50, m_iters: int = 100, seed=0) -> float:
    """Feature-level Shapley importance: mean |contribution| over sampled instances.

    Signed contributions cancel across instances, so the absolute value is
    aggregated. Instances are sampled without replacement; their hybrid rows
    are stacked into a single model call, which scores identically to running
    :func:`shapley_instance` per instance with the same derived seeds.
    """
    X = d.matrix()
    n, M = X.shape
    if n_instances > n:
        raise ValueError(f"n_instances={n_instances} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=n_instances, replace=False)
    children = [int(rng.integers(0, 2**63 - 1)) for _ in chosen]

    blocks = []
    for i, child in zip(chosen, children):
        sub_rng = np.random.default_rng(child)
        backgrounds = sub_rng.integers(0, n, size=m_iters)
        keys = sub_rng.random((m_iters, M))
        from_i = keys <= keys[:, j:j + 1]
        base = X[backgrounds]
        with_j = np.where(from_i, X[int(i)], base)
        without_j = with_j.copy()
        without_j[:, j] = base[:, j]
        blocks.append(with_j)
        blocks.append(without_j)
    preds = model.predict_batch(np.vstack(blocks)).reshape(n_instances, 2, m_iters)
    xi = (preds[:, 0, :] - preds[:, 1, :]).mean(axis=1)
    return float(np.abs(xi).mean())


def partial_dependence(model: PredictiveModel, d: Dataset, j: int, v: float) -> float:
    """Mean score with feature j pinned to v, marginalizing the rest over d.

    Averages over every dataset row (no subsampling) so the result is
    deterministic.
    """
    if len(d) == 0:
        raise DatasetTooSmall("partial dependence needs >= 1 row")
    Xv = d.matrix().copy()
    Xv[:, j] = v
    return float(model.predict_batch(Xv).mean())


def fit_interaction(model: PredictiveModel, d: Dataset, j: int) -> float:
    """Share of score variance that feature j's interactions claim, in [0, 1].

    Compares the centered score against the additive reconstruction from two
    partial-dependence terms: the curve of feature j alone, and the curve of
    everything-but-j (feature j averaged out over the dataset). The squared
    residual sum is normalized by the centered score's squared sum, so an
    additive model scores 0 and a purely interacting one approaches 1. A
    near-constant model (variance below 1e-12) returns 0.
    """
    X = d.matrix()
    n = len(X)
    if n < 2:
        raise DatasetTooSmall("interaction share needs >= 2 rows")

    f_hat = model.predict_batch(X)

    # PD_j at each row's own x_j: background rows with column j overridden
    B = np.tile(X, (n, 1))
    B[:, j] = np.repeat(X[:, j], n)
    pd_j = model.predict_batch(B).reshape(n, n).mean(axis=1)

    # PD_{-j} at each row: the row itself with column j marginalized out
    B2 = np.repeat(X, n, axis=0)
    B2[:, j] = np.tile(X[:, j], n)
    pd_rest = model.predict_batch(B2).reshape(n, n).mean(axis=1)

    f_c = f_hat - f_hat.mean()
    denom = float((f_c ** 2).sum())
    if denom < 1e-12:
        return 0.0
    resid = f_c - (pd_j - pd_j.mean()) - (pd_rest - pd_rest.mean())
    return float(np.clip((resid ** 2).sum() / denom, 0.0, 1.0))


def _entropy_of(seed) -> tuple[int, ...]:
    """Flatten an int or SeedSequence seed into an entropy tuple."""
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        if isinstance(ent, (list, tuple)):
            return tuple(int(v) for v in ent)
        return (int(ent),)
    return (int(seed),)


def _feature_seed(master_seed, tag: int, j: int) -> np.random.SeedSequence:
    """Independent, order-free RNG stream for one (estimator, feature) pair."""
    return np.random.SeedSequence(entropy=_entropy_of(master_seed) + (tag, int(j)))


def snapshot(d: Dataset, max_rows: int, master_seed) -> Dataset:
    """Seeded row subsample used to bound estimator cost on large datasets."""
    if len(d) <= max_rows:
        return d
    rng = np.random.default_rng(_feature_seed(master_seed, _TAG_SNAPSHOT, 0))
    keep = np.sort(rng.choice(len(d), size=max_rows, replace=False))
    labels = d.labels()
    return from_matrix(
        d.matrix()[keep],
        labels[keep] if labels is not None else None,
        d.feature_names,
    )


def compute_all(model: PredictiveModel, d: Dataset, config: EstimatorConfig,
                master_seed) -> ImportanceScores:
    """All three scores for every feature of d.

    Datasets larger than ``config.snapshot_max`` are first reduced to a seeded
    snapshot, bounding cost. Each (estimator, feature) pair draws from its own
    RNG stream derived from ``master_seed``, so results do not depend on the
    order features are processed in.
    """
    d_s = snapshot(d, config.snapshot_max, master_seed)
    M = d_s.n_features
    n_inst = min(config.shapley_instances, len(d_s))
    pfi_scores = np.empty(M)
    sv_scores = np.empty(M)
    fit_scores = np.empty(M)
    for j in range(M):
        pfi_scores[j] = pfi(model, d_s, j, config.pfi_repetitions,
                            _feature_seed(master_seed, _TAG_PFI, j))
        sv_scores[j] = shapley_feature(model, d_s, j, n_inst,
                                       config.shapley_iters,
                                       _feature_seed(master_seed, _TAG_SHAPLEY, j))
        fit_scores[j] = fit_interaction(model, d_s, j)
    return ImportanceScores(pfi=pfi_scores, shapley=sv_scores, fit=fit_scores)
