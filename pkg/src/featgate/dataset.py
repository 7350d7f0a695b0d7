"""Data model, CSV ingestion, synthetic corpus generation and spread statistics.

A dataset is an ordered collection of fixed-width real vectors. Vectors may
carry a ``source_label`` recording which cluster (and therefore which node)
generated them; synthetic corpora always do, ingested ones may get labels
assigned after the fact with :func:`assign_cluster_labels`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import EmptyDataset, InvalidConfig, MalformedRow


@dataclass(frozen=True)
class FeatureVector:
    """One multivariate observation, immutable once built."""

    values: np.ndarray
    source_label: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError(f"feature vector must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature summary: mean, population standard deviation, min, max."""

    mean: float
    std: float
    min: float
    max: float


class Dataset:
    """Ordered, appendable store of equal-length feature vectors."""

    def __init__(self, feature_names: Sequence[str], vectors: Iterable[FeatureVector] = ()):
        names = list(feature_names)
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        self.feature_names = names
        self._vectors: list[FeatureVector] = []
        self._matrix_cache: np.ndarray | None = None
        for v in vectors:
            self.append(v)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def __len__(self) -> int:
        return len(self._vectors)

    def __iter__(self) -> Iterator[FeatureVector]:
        return iter(self._vectors)

    def __getitem__(self, i: int) -> FeatureVector:
        return self._vectors[i]

    def append(self, v: FeatureVector) -> None:
        if len(v) != self.n_features:
            raise ValueError(
                f"vector has {len(v)} values, dataset expects {self.n_features}"
            )
        self._vectors.append(v)
        self._matrix_cache = None

    def extend(self, vs: Iterable[FeatureVector]) -> None:
        for v in vs:
            self.append(v)

    def matrix(self) -> np.ndarray:
        """All vectors stacked into an (n, M) array. Cached until the next append."""
        if self._matrix_cache is None:
            if not self._vectors:
                self._matrix_cache = np.empty((0, self.n_features))
            else:
                self._matrix_cache = np.vstack([v.values for v in self._vectors])
            self._matrix_cache.flags.writeable = False
        return self._matrix_cache

    def labels(self) -> np.ndarray | None:
        """Source labels as an int array, or None if any vector lacks one."""
        out = []
        for v in self._vectors:
            if v.source_label is None:
                return None
            out.append(v.source_label)
        return np.asarray(out, dtype=int)

    def relabeled(self, labels: Sequence[int]) -> "Dataset":
        """Copy of this dataset with source labels replaced position-wise."""
        if len(labels) != len(self._vectors):
            raise ValueError("label count does not match vector count")
        return Dataset(
            self.feature_names,
            (FeatureVector(v.values, int(l)) for v, l in zip(self._vectors, labels)),
        )


def from_matrix(X: np.ndarray, labels: Sequence[int] | None = None,
                feature_names: Sequence[str] | None = None) -> Dataset:
    """Build a Dataset from an (n, M) array, optionally with per-row labels."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("expected a 2-D array")
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    d = Dataset(names)
    for i in range(X.shape[0]):
        lab = int(labels[i]) if labels is not None else None
        d.append(FeatureVector(X[i], lab))
    return d


def ingest_csv(path) -> Dataset:
    """Read a UTF-8, comma-separated file: header row of names, one vector per row.

    Any missing or non-numeric cell aborts ingestion with MalformedRow carrying
    the 1-based file line number (the header is line 1).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "file has no header row")
        names = [h.strip() for h in header]
        d = Dataset(names)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise MalformedRow(line_no, f"expected {len(names)} cells, got {len(row)}")
            try:
                values = np.array([float(c) for c in row])
            except ValueError as exc:
                raise MalformedRow(line_no, str(exc)) from exc
            if not np.all(np.isfinite(values)):
                raise MalformedRow(line_no, "non-finite value")
            d.append(FeatureVector(values))
    return d


def summary_stats(d: Dataset) -> list[FeatureStats]:
    """Per-feature mean, population std, min and max."""
    if len(d) == 0:
        raise EmptyDataset("summary_stats requires at least one vector")
    X = d.matrix()
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population (divisor n)
    mins = X.min(axis=0)
    maxs = X.max(axis=0)
    return [
        FeatureStats(float(means[j]), float(stds[j]), float(mins[j]), float(maxs[j]))
        for j in range(d.n_features)
    ]


def solidity(d: Dataset) -> float:
    """Spread of a dataset: the mean over features of per-feature population std.

    Lower values mean the data are concentrated around their mean. All M
    features contribute equally so that differently filtered copies of the
    same stream are compared on identical footing.
    """
    if len(d) == 0:
        raise EmptyDataset("solidity requires at least one vector")
    return float(d.matrix().std(axis=0).mean())


# cluster-center geometry: phases spread every cluster along each relevant
# feature (30 degree offset keeps the leading feature collision-free, the
# golden-angle step decorrelates the rest), amplitudes decay geometrically so
# the leading features concentrate the provenance signal
_CENTER_DECAY = 0.65
_CENTER_PHASE = 0.5236
_CENTER_STEP = 2.399963
_CENTER_JITTER = 0.2
# the shared irrelevant distribution is a contaminated normal: occasional
# wide outliers that a per-class Gaussian fit mis-scores
_OUTLIER_FRAC = 0.1
_OUTLIER_SCALE = 6.0


def synth_generate(n_per_cluster: int, n_clusters: int, n_features: int,
                   separation: float, noise_std: float, n_irrelevant: int,
                   seed: int) -> Dataset:
    """Gaussian clusters with known provenance, for ground-truth experiments.

    The first ``n_features - n_irrelevant`` features get cluster-specific
    means: cluster c sits at ``A_f * sqrt(2) * cos(2 pi c / K + phase_f)`` plus
    seeded jitter, where the amplitude ``A_f = separation * 0.65**f`` decays
    with the feature index. Every cluster is therefore separated along the
    leading features (which concentrate the signal) while later relevant
    features fade toward noise. Within a cluster, features vary with
    ``noise_std``. The trailing ``n_irrelevant`` features are drawn from one
    shared contaminated normal (N(0, noise_std^2) with 10% of draws widened
    6-fold) regardless of cluster, so they carry no provenance information but
    do mislead a per-class Gaussian fit. Rows are grouped by cluster in output
    order and every vector carries its cluster index as ``source_label``.
    Identical seeds give bit-identical datasets.
    """
    if n_per_cluster < 1 or n_clusters < 1:
        raise InvalidConfig("n_per_cluster and n_clusters must be >= 1")
    if not 0 <= n_irrelevant < n_features:
        raise InvalidConfig("need 0 <= n_irrelevant < n_features")
    if separation <= 0:
        raise InvalidConfig("separation must be > 0")
    if noise_std < 0:
        raise InvalidConfig("noise_std must be >= 0")

    rng = np.random.default_rng(seed)
    n_relevant = n_features - n_irrelevant
    total = n_per_cluster * n_clusters

    amp = separation * _CENTER_DECAY ** np.arange(n_relevant)
    phases = _CENTER_PHASE + _CENTER_STEP * np.arange(n_relevant)
    angles = 2.0 * np.pi * np.arange(n_clusters)[:, None] / n_clusters + phases
    jitter = _CENTER_JITTER * rng.standard_normal((n_clusters, n_relevant))
    centers = amp * (math.sqrt(2.0) * np.cos(angles) + jitter)

    X = np.empty((total, n_features))
    labels = np.repeat(np.arange(n_clusters), n_per_cluster)
    for c in range(n_clusters):
        block = slice(c * n_per_cluster, (c + 1) * n_per_cluster)
        X[block, :n_relevant] = centers[c] + noise_std * rng.standard_normal(
            (n_per_cluster, n_relevant)
        )
    if n_irrelevant:
        shared = noise_std * rng.standard_normal((total, n_irrelevant))
        wide = rng.random((total, n_irrelevant)) < _OUTLIER_FRAC
        X[:, n_relevant:] = np.where(wide, _OUTLIER_SCALE * shared, shared)

    return from_matrix(X, labels)


def assign_cluster_labels(d: Dataset, n_clusters: int, seed: int,
                          n_iter: int = 50) -> Dataset:
    """Assign provenance labels to an unlabeled corpus by a seeded Lloyd partition.

    Used once at setup for real corpora that ship without ground truth:
    centroids start at ``n_clusters`` distinct rows picked by the seeded RNG and
    are refined for at most ``n_iter`` Lloyd iterations. Returns a relabeled
    copy; deterministic for a given seed.
    """
    if len(d) < n_clusters:
        raise InvalidConfig("need at least one vector per cluster")
    X = d.matrix()
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(len(d), size=n_clusters, replace=False)].copy()
    assign = np.zeros(len(d), dtype=int)
    for _ in range(n_iter):
        dist = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(n_clusters):
            members = X[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return d.relabeled(assign)
