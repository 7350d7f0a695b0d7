"""Interpretable feature-significance scoring and data admission for edge nodes.

The pipeline scores every feature with three model-agnostic estimators
(permutation importance, Monte-Carlo Shapley values, interaction share),
fuses the scores with a small feed-forward network, and admits incoming
vectors through a naive Bayes classifier restricted to the selected features.
A multi-node simulator evaluates placement quality, dataset solidity and
decision latency over an (M, w) experiment grid.
"""

from . import aggregator, dataset, errors, importance, nbc, oracles, simnet, stream
from .dataset import (Dataset, FeatureStats, FeatureVector, ingest_csv, solidity,
                      summary_stats, synth_generate)
from .importance import (EstimatorConfig, ImportanceScores, NbcLocalPosterior,
                         compute_all)
from .nbc import Decision, DecisionKind, NbcModel, decide, posterior, train
from .simnet import MetricsReport, SimConfig, run_experiment, run_grid

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FeatureStats", "FeatureVector", "ingest_csv", "solidity",
    "summary_stats", "synth_generate",
    "NbcModel", "Decision", "DecisionKind", "train", "posterior", "decide",
    "ImportanceScores", "EstimatorConfig", "NbcLocalPosterior", "compute_all",
    "SimConfig", "MetricsReport", "run_experiment", "run_grid",
    "aggregator", "dataset", "errors", "importance", "nbc", "oracles",
    "simnet", "stream",
]
