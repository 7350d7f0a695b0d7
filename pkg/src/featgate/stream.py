"""Sliding-window novelty detection and the retrain-on-novelty pipeline.

Every node keeps a FIFO copy of its latest W arrivals. When the window's
per-feature means deviate significantly from the node's baseline view of the
arrival stream, the window is absorbed into the local dataset and the whole
feature-selection pipeline reruns: all-features classifier, importance
scores, fused selection, subset classifier.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.stats import norm

from . import aggregator, importance, nbc
from .dataset import Dataset, FeatureStats, FeatureVector
from .errors import DimensionMismatch, EmptySelection, WindowTooEmpty

if TYPE_CHECKING:  # pragma: no cover
    from .simnet import EdgeNode

_VAR_FLOOR = 1e-9


class WindowBuffer:
    """Bounded FIFO of the latest arrivals; evicts the oldest on overflow."""

    def __init__(self, capacity: int, n_features: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_features = n_features
        self._entries: deque[FeatureVector] = deque()

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def is_full(self) -> bool:
        return len(self._entries) >= self.capacity

    def push(self, x: FeatureVector) -> FeatureVector | None:
        """Append x; returns the evicted oldest entry when capacity overflows."""
        if len(x) != self.n_features:
            raise DimensionMismatch(
                f"vector has {len(x)} values, window expects {self.n_features}"
            )
        self._entries.append(x)
        if len(self._entries) > self.capacity:
            return self._entries.popleft()
        return None

    def clear(self) -> None:
        self._entries.clear()

    def matrix(self) -> np.ndarray:
        return np.vstack([v.values for v in self._entries])


class StreamingStats:
    """One-pass per-feature accumulator (Welford) for the arrival stream."""

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.count = 0
        self._mean = np.zeros(n_features)
        self._m2 = np.zeros(n_features)
        self._min = np.full(n_features, math.inf)
        self._max = np.full(n_features, -math.inf)

    def add(self, values: np.ndarray) -> None:
        self.count += 1
        delta = values - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (values - self._mean)
        np.minimum(self._min, values, out=self._min)
        np.maximum(self._max, values, out=self._max)

    def snapshot(self) -> list[FeatureStats]:
        """Current per-feature stats (population std). Needs >= 1 observation."""
        if self.count == 0:
            raise WindowTooEmpty("no observations accumulated")
        std = np.sqrt(self._m2 / self.count)
        return [
            FeatureStats(float(self._mean[j]), float(std[j]),
                         float(self._min[j]), float(self._max[j]))
            for j in range(self.n_features)
        ]


@dataclass(frozen=True)
class NoveltyConfig:
    """Significance level for the per-feature mean test and the fill gate."""

    alpha: float = 0.01
    min_fill: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.min_fill <= 1.0:
            raise ValueError("min_fill must lie in (0, 1]")


def novelty_indicator(buf: WindowBuffer, baseline: list[FeatureStats],
                      cfg: NoveltyConfig) -> int:
    """1 if the window's statistics deviate from the baseline stream, else 0.

    Runs a two-sided z-test per feature, comparing the window mean against the
    baseline mean with the baseline's std scaled by sqrt(window size). The
    per-feature level is Bonferroni-corrected (alpha / M) so the family-wise
    false-positive rate stays at most alpha regardless of dimensionality.
    """
    needed = math.ceil(cfg.min_fill * buf.capacity)
    if len(buf) < max(needed, 1):
        raise WindowTooEmpty(f"window holds {len(buf)} vectors, needs {needed}")
    W = buf.matrix()
    n = len(W)
    M = W.shape[1]
    crit = norm.ppf(1.0 - cfg.alpha / (2.0 * M))
    means = W.mean(axis=0)
    for j, st in enumerate(baseline):
        se = max(st.std, math.sqrt(_VAR_FLOOR)) / math.sqrt(n)
        if abs(means[j] - st.mean) / se > crit:
            return 1
    return 0


def on_novelty(node: "EdgeNode",
               corpus_builder: Callable[[], Dataset],
               est_cfg: importance.EstimatorConfig,
               ann: aggregator.AnnWeights,
               mode: aggregator.TopFraction | aggregator.Threshold,
               seed,
               variance_floor: float = nbc.DEFAULT_VARIANCE_FLOOR) -> None:
    """Absorb the window into the local dataset and rerun the selection pipeline.

    The window's contents join the node's dataset and the buffer empties, so
    consecutive events never absorb a vector twice. ``corpus_builder`` is then
    called to produce the labeled training corpus reflecting the post-absorb
    world; the node's all-features classifier, importance scores, selected
    subset and subset classifier are rebuilt from it, and the node's baseline
    re-anchors on the absorbed window (the newly observed regime). The subset
    swap happens last, so a crash mid-way never leaves a half-updated node.
    """
    absorbed = list(node.buffer)
    node.dataset.extend(absorbed)
    node.buffer.clear()

    corpus = corpus_builder()
    model_all = nbc.train(corpus, range(corpus.n_features), variance_floor)
    black_box = importance.NbcLocalPosterior(model_all, node.node_id)
    scores = importance.compute_all(black_box, corpus, est_cfg, seed)
    try:
        selection = aggregator.select_features(scores, ann, mode)
    except EmptySelection:
        selection = aggregator.select_features(
            scores, ann, aggregator.TopFraction(node.selection_fallback)
        )
    model_subset = nbc.train(corpus, selection.indices, variance_floor)

    node.model_all = model_all
    node.model_subset = model_subset
    node.selection = selection
    fresh = StreamingStats(node.buffer.n_features)
    for v in absorbed:
        fresh.add(v.values)
    node.arrival_stats = fresh
    node.baseline = fresh.snapshot()
