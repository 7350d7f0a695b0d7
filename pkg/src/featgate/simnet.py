"""Multi-node edge-mesh simulation with paired evaluation of admission variants.

Three placement strategies process one identical arrival stream over identical
copies of a bootstrapped mesh:

* OS  — store everything at the entry node (no filtering);
* BNS — admission by the all-features classifier;
* NNS — admission by the selected-subset classifier.

The run reports the correct-decision percentage of BNS (all features) and NNS
(selected subset), each variant's final dataset spread, and the mean wall-clock
cost of a single all-features admission decision, per (M, w) grid cell.
"""

from __future__ import annotations

import copy
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import aggregator, importance, nbc, stream
from .dataset import (Dataset, FeatureStats, FeatureVector, assign_cluster_labels,
                      from_matrix, ingest_csv, solidity, synth_generate)
from .errors import EmptyDecisionLog, EmptySelection, InvalidConfig

CLOUD = -1

# fixed tags for deriving independent RNG streams from the master seed
_TAG_WARMUP = 10
_TAG_ARRIVALS = 11
_TAG_EXPERT = 12
_TAG_ANN = 13
_TAG_BOOT = 14
_TAG_NOVELTY = 15
_TAG_ENTRY = 16
_TAG_CSV_LABELS = 17
_TAG_CSV_SPLIT = 18


class Variant(Enum):
    OS = "os"
    BNS = "bns"
    NNS = "nns"


@dataclass
class EdgeNode:
    """Mutable per-node state: local data, admission models, window, baseline."""

    node_id: int
    dataset: Dataset
    buffer: stream.WindowBuffer
    arrival_stats: stream.StreamingStats
    baseline: list[FeatureStats]
    model_all: nbc.NbcModel
    model_subset: nbc.NbcModel
    selection: aggregator.SelectedFeatureSet
    selection_fallback: float = 0.2
    novelty_events: int = 0


@dataclass
class CloudSink:
    """The cloud tier as seen from the mesh: just a counter of routed vectors."""

    count: int = 0


@dataclass(frozen=True)
class SimConfig:
    """Every knob of one experiment; grid runs override n_features and w."""

    seed: int = 1
    n_nodes: int = 3
    n_features: int = 10
    w: float = 0.2
    warmup_per_node: int = 200
    n_arrivals: int = 2000
    entry_policy: str = "round_robin"       # or "uniform"
    # synthetic stream
    separation: float = 2.5
    noise_std: float = 1.0
    irrelevant_fraction: float = 0.5
    # CSV stream (overrides the synthetic generator when set)
    csv_path: str | None = None
    # admission
    p_min: float = 0.0
    variance_floor: float = nbc.DEFAULT_VARIANCE_FLOOR
    # estimators
    pfi_repetitions: int = 5
    pfi_loss: str = "logloss"
    shapley_iters: int = 100
    shapley_instances: int = 50
    snapshot_max: int = 128
    # fusion network
    ann_hidden: int = 8
    ann_lr: float = 0.5
    ann_max_epochs: int = 10000
    ann_target_mse: float = 1e-3
    ann_expert_n: int = 2000
    ann_trust_weights: tuple[float, float, float] = aggregator.DEFAULT_TRUST_WEIGHTS
    # selection
    selection_mode: str = "topfraction"     # or "threshold"
    threshold_d: float | None = None
    # novelty
    novelty_enabled: bool = True
    window_w: int = 50
    alpha: float = 0.01
    min_fill: float = 1.0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise InvalidConfig("need at least 2 nodes")
        if self.n_features < 2:
            raise InvalidConfig("need at least 2 features")
        if not 0.0 < self.w <= 1.0:
            raise InvalidConfig("w must lie in (0, 1]")
        if self.warmup_per_node < 2:
            raise InvalidConfig("need at least 2 warm-up vectors per node")
        if self.n_arrivals < 1:
            raise InvalidConfig("need at least 1 arrival")
        if self.entry_policy not in ("round_robin", "uniform"):
            raise InvalidConfig(f"unknown entry policy {self.entry_policy!r}")
        if self.selection_mode not in ("topfraction", "threshold"):
            raise InvalidConfig(f"unknown selection mode {self.selection_mode!r}")
        if self.selection_mode == "threshold" and self.threshold_d is None:
            raise InvalidConfig("threshold selection requires threshold_d")

    def estimator_config(self) -> importance.EstimatorConfig:
        return importance.EstimatorConfig(
            pfi_repetitions=self.pfi_repetitions,
            shapley_iters=self.shapley_iters,
            shapley_instances=self.shapley_instances,
            snapshot_max=self.snapshot_max,
        )

    def selection_mode_obj(self):
        if self.selection_mode == "threshold":
            return aggregator.Threshold(self.threshold_d)
        return aggregator.TopFraction(self.w)

    def novelty_config(self) -> stream.NoveltyConfig:
        return stream.NoveltyConfig(alpha=self.alpha, min_fill=self.min_fill)


@dataclass(frozen=True)
class MetricsReport:
    """One grid cell's outcome; field order matches the CSV schema."""

    m: int
    w: float
    delta_cd: float          # correct-decision % of the all-features admission
    delta_wcd: float         # correct-decision % of the selected-subset admission
    sigma_os: float
    sigma_bns: float
    sigma_nns: float
    tau_mean_us: float       # mean all-features decision latency, microseconds
    n_local: int             # subset-variant routing counts
    n_peer: int
    n_cloud: int

    def __post_init__(self):
        for name in ("delta_cd", "delta_wcd"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} out of range: {v}")
        for name in ("sigma_os", "sigma_bns", "sigma_nns"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.tau_mean_us <= 0.0:
            raise ValueError("tau_mean_us must be > 0")


def _derive(seed: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=(int(seed),) + tuple(int(t) for t in tags))


def make_ann(cfg: SimConfig) -> aggregator.AnnWeights:
    """Train the fusion network once per experiment from the expert generator."""
    samples = aggregator.expert_training_set(
        cfg.ann_expert_n, cfg.ann_trust_weights, _derive(cfg.seed, _TAG_EXPERT)
    )
    trained = aggregator.train_ann(
        samples, cfg.ann_hidden, cfg.ann_lr, cfg.ann_max_epochs,
        cfg.ann_target_mse, _derive(cfg.seed, _TAG_ANN)
    )
    return trained.weights


def _labeled_union(nodes: Sequence[EdgeNode], feature_names) -> Dataset:
    """Training corpus: every node's current holdings labeled by owner."""
    d = Dataset(feature_names)
    for node in nodes:
        for v in node.dataset:
            d.append(FeatureVector(v.values, node.node_id))
    return d


def _load_universe(cfg: SimConfig) -> tuple[Dataset, list[FeatureVector]]:
    """Warm-up corpus plus arrival sequence, from the generator or a CSV file."""
    if cfg.csv_path is None:
        # one generator call so warm-up and arrivals share cluster centers
        n_irr = min(int(round(cfg.irrelevant_fraction * cfg.n_features)),
                    cfg.n_features - 1)
        per_cluster = cfg.warmup_per_node + math.ceil(cfg.n_arrivals / cfg.n_nodes)
        combined = synth_generate(per_cluster, cfg.n_nodes, cfg.n_features,
                                  cfg.separation, cfg.noise_std, n_irr,
                                  _derive(cfg.seed, _TAG_WARMUP))
        warmup = Dataset(combined.feature_names)
        pool = Dataset(combined.feature_names)
        for c in range(cfg.n_nodes):
            block = [combined[c * per_cluster + i] for i in range(per_cluster)]
            warmup.extend(block[: cfg.warmup_per_node])
            pool.extend(block[cfg.warmup_per_node:])
    else:
        full = ingest_csv(cfg.csv_path)
        if full.n_features < cfg.n_features:
            raise InvalidConfig(
                f"CSV has {full.n_features} features, config wants {cfg.n_features}"
            )
        if full.n_features > cfg.n_features:
            X = full.matrix()[:, : cfg.n_features]
            full = from_matrix(X, None, full.feature_names[: cfg.n_features])
        full = assign_cluster_labels(full, cfg.n_nodes,
                                     _derive(cfg.seed, _TAG_CSV_LABELS))
        need = cfg.warmup_per_node * cfg.n_nodes + cfg.n_arrivals
        if len(full) < need:
            raise InvalidConfig(f"CSV has {len(full)} rows, config needs {need}")
        rng = np.random.default_rng(_derive(cfg.seed, _TAG_CSV_SPLIT))
        order = rng.permutation(len(full))
        warm_rows = order[: cfg.warmup_per_node * cfg.n_nodes]
        pool_rows = order[cfg.warmup_per_node * cfg.n_nodes:]
        warmup = Dataset(full.feature_names, (full[i] for i in warm_rows))
        pool = Dataset(full.feature_names, (full[i] for i in pool_rows))

    rng = np.random.default_rng(_derive(cfg.seed, _TAG_ARRIVALS, 1))
    order = rng.permutation(len(pool))[: cfg.n_arrivals]
    arrivals = [pool[i] for i in order]
    return warmup, arrivals


def bootstrap(cfg: SimConfig, warmup: Dataset,
              ann: aggregator.AnnWeights) -> list[EdgeNode]:
    """Build the mesh: shard the warm-up by provenance, fit both models per node.

    Node l's local dataset starts as the warm-up vectors labeled l. Every node
    fits an all-features classifier over the full labeled warm-up (one class
    per node), scores feature importance against its own posterior, selects
    its subset through the fusion network, and fits the subset classifier.
    """
    labels = warmup.labels()
    if labels is None:
        raise InvalidConfig("warm-up corpus must be labeled")
    present = set(int(c) for c in np.unique(labels))
    if present != set(range(cfg.n_nodes)):
        raise InvalidConfig(
            f"warm-up labels {sorted(present)} do not cover nodes 0..{cfg.n_nodes - 1}"
        )

    est_cfg = cfg.estimator_config()
    mode = cfg.selection_mode_obj()
    nodes = []
    for l in range(cfg.n_nodes):
        shard = Dataset(warmup.feature_names,
                        (v for v in warmup if v.source_label == l))
        model_all = nbc.train(warmup, range(cfg.n_features), cfg.variance_floor)
        black_box = importance.NbcLocalPosterior(model_all, l, cfg.pfi_loss)
        scores = importance.compute_all(black_box, warmup, est_cfg,
                                        _derive(cfg.seed, _TAG_BOOT, l))
        try:
            selection = aggregator.select_features(scores, ann, mode)
        except EmptySelection:
            selection = aggregator.select_features(
                scores, ann, aggregator.TopFraction(cfg.w)
            )
        model_subset = nbc.train(warmup, selection.indices, cfg.variance_floor)

        acc = stream.StreamingStats(cfg.n_features)
        for v in warmup:
            acc.add(v.values)
        nodes.append(EdgeNode(
            node_id=l,
            dataset=shard,
            buffer=stream.WindowBuffer(cfg.window_w, cfg.n_features),
            arrival_stats=acc,
            baseline=acc.snapshot(),
            model_all=model_all,
            model_subset=model_subset,
            selection=selection,
            selection_fallback=cfg.w,
        ))
    return nodes


def route(nodes: Sequence[EdgeNode], cloud: CloudSink, x: FeatureVector,
          entry_node: int, variant: Variant,
          p_min: float = 0.0) -> tuple[nbc.Decision | None, int]:
    """Admit one arrival at its entry node and store it at its destination.

    OS stores at the entry node unconditionally and returns no decision (no
    classifier runs). BNS and NNS run the entry node's all-features or
    selected-subset classifier; the vector lands on the entry node, the
    winning peer, or the cloud counter. Returns the decision (None for OS)
    and the destination id (CLOUD for the cloud tier).
    """
    if not 0 <= entry_node < len(nodes):
        raise InvalidConfig(f"entry node {entry_node} out of range")
    if variant is Variant.OS:
        nodes[entry_node].dataset.append(x)
        return None, entry_node

    model = (nodes[entry_node].model_all if variant is Variant.BNS
             else nodes[entry_node].model_subset)
    decision = nbc.decide(model, x, local_class=entry_node, p_min=p_min)
    if decision.kind is nbc.DecisionKind.KEEP_LOCAL:
        dest = entry_node
    elif decision.kind is nbc.DecisionKind.OFFLOAD_PEER:
        dest = int(decision.target)
    else:
        dest = CLOUD
    if dest == CLOUD:
        cloud.count += 1
    else:
        nodes[dest].dataset.append(x)
    return decision, dest


@dataclass
class VariantOutcome:
    nodes: list[EdgeNode]
    cloud: CloudSink
    log: list[tuple[int, int | None]]      # (destination, ground-truth label)
    latencies_us: list[float]
    kind_counts: dict[nbc.DecisionKind, int]
    novelty_events: int = 0


def run_variant(nodes: list[EdgeNode], arrivals: Sequence[FeatureVector],
                cfg: SimConfig, ann: aggregator.AnnWeights,
                variant: Variant) -> VariantOutcome:
    """Stream every arrival through one placement strategy, mutating the mesh.

    Each arrival enters at a node chosen by the entry policy, is routed, and
    (for the model-backed variants) a copy joins the entry node's window. Full
    windows are tested for novelty: a firing window is absorbed and the node's
    pipeline retrained, a quiet one is discarded, keeping tested windows
    disjoint.
    """
    cloud = CloudSink()
    outcome = VariantOutcome(nodes, cloud, [], [], {k: 0 for k in nbc.DecisionKind})
    ncfg = cfg.novelty_config()
    est_cfg = cfg.estimator_config()
    mode = cfg.selection_mode_obj()
    entry_rng = np.random.default_rng(_derive(cfg.seed, _TAG_ENTRY))
    use_novelty = cfg.novelty_enabled and variant is not Variant.OS

    for t, x in enumerate(arrivals):
        if cfg.entry_policy == "round_robin":
            entry = t % cfg.n_nodes
        else:
            entry = int(entry_rng.integers(0, cfg.n_nodes))
        decision, dest = route(nodes, cloud, x, entry, variant, cfg.p_min)
        outcome.log.append((dest, x.source_label))
        if decision is not None:
            outcome.latencies_us.append(decision.elapsed_us)
            outcome.kind_counts[decision.kind] += 1

        if use_novelty:
            node = nodes[entry]
            node.buffer.push(x)
            node.arrival_stats.add(x.values)
            if node.buffer.is_full:
                fired = stream.novelty_indicator(node.buffer, node.baseline, ncfg)
                if fired:
                    seed = _derive(cfg.seed, _TAG_NOVELTY, _variant_tag(variant),
                                   node.node_id, node.novelty_events)
                    names = nodes[0].dataset.feature_names
                    stream.on_novelty(
                        node,
                        lambda: _labeled_union(nodes, names),
                        est_cfg, ann, mode, seed, cfg.variance_floor,
                    )
                    node.novelty_events += 1
                    outcome.novelty_events += 1
                else:
                    node.buffer.clear()
    return outcome


def _variant_tag(variant: Variant) -> int:
    return {"os": 0, "bns": 1, "nns": 2}[variant.value]


def delta_metric(decisions: Sequence[tuple[int, int | None]]) -> float:
    """Percentage of destinations matching the vector's true source node."""
    if not decisions:
        raise EmptyDecisionLog("no decisions logged")
    correct = sum(1 for dest, truth in decisions if truth is not None and dest == truth)
    return 100.0 * correct / len(decisions)


def _mean_solidity(nodes: Sequence[EdgeNode]) -> float:
    return statistics.fmean(solidity(node.dataset) for node in nodes)


def run_experiment(cfg: SimConfig,
                   ann: aggregator.AnnWeights | None = None) -> MetricsReport:
    """One paired experiment: identical arrivals through OS, BNS and NNS.

    All three variants start from deep copies of one bootstrapped mesh and see
    the same arrival order, so every reported difference comes from the
    admission strategy alone. All fields except the timing average are
    deterministic for a given config.
    """
    if ann is None:
        ann = make_ann(cfg)
    warmup, arrivals = _load_universe(cfg)
    base_nodes = bootstrap(cfg, warmup, ann)

    outcomes: dict[Variant, VariantOutcome] = {}
    for variant in (Variant.OS, Variant.BNS, Variant.NNS):
        nodes = copy.deepcopy(base_nodes)
        outcomes[variant] = run_variant(nodes, arrivals, cfg, ann, variant)

    bns, nns = outcomes[Variant.BNS], outcomes[Variant.NNS]
    return MetricsReport(
        m=cfg.n_features,
        w=cfg.w,
        delta_cd=delta_metric(bns.log),
        delta_wcd=delta_metric(nns.log),
        sigma_os=_mean_solidity(outcomes[Variant.OS].nodes),
        sigma_bns=_mean_solidity(bns.nodes),
        sigma_nns=_mean_solidity(nns.nodes),
        tau_mean_us=statistics.fmean(bns.latencies_us),
        n_local=nns.kind_counts[nbc.DecisionKind.KEEP_LOCAL],
        n_peer=nns.kind_counts[nbc.DecisionKind.OFFLOAD_PEER],
        n_cloud=nns.kind_counts[nbc.DecisionKind.OFFLOAD_CLOUD],
    )


def _run_cell(args: tuple[SimConfig, aggregator.AnnWeights]) -> MetricsReport:
    cfg, ann = args
    return run_experiment(cfg, ann)


def run_grid(cfg: SimConfig, m_list: Sequence[int], w_list: Sequence[float],
             parallel: int = 1) -> list[MetricsReport]:
    """One report per (M, w) cell; the fusion network is trained once and shared.

    Cells are independent seeded universes, so they may run in any order or in
    parallel without changing results.
    """
    if not m_list or not w_list:
        raise InvalidConfig("m_list and w_list must be non-empty")
    ann = make_ann(cfg)
    cells = [replace(cfg, n_features=m, w=w) for m in m_list for w in w_list]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_cell, [(c, ann) for c in cells]))
    return [run_experiment(c, ann) for c in cells]


CSV_HEADER = ("M,w,delta_cd,delta_wcd,sigma_os,sigma_bns,sigma_nns,"
              "tau_mean_us,n_local,n_peer,n_cloud")


def report_csv_row(r: MetricsReport) -> str:
    return (f"{r.m},{r.w:g},{r.delta_cd:.4f},{r.delta_wcd:.4f},"
            f"{r.sigma_os:.6f},{r.sigma_bns:.6f},{r.sigma_nns:.6f},"
            f"{r.tau_mean_us:.3f},{r.n_local},{r.n_peer},{r.n_cloud}")


def write_csv(reports: Sequence[MetricsReport], path) -> None:
    """Plot-ready CSV: one row per grid cell, stable field formatting."""
    lines = [CSV_HEADER] + [report_csv_row(r) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_text_report(reports: Sequence[MetricsReport], path) -> None:
    """Human-readable summary table of the same grid results."""
    cols = ["M", "w", "delta_cd", "delta_wcd", "sigma_os", "sigma_bns",
            "sigma_nns", "tau_us", "local", "peer", "cloud"]
    rows = [[str(r.m), f"{r.w:g}", f"{r.delta_cd:.2f}", f"{r.delta_wcd:.2f}",
             f"{r.sigma_os:.4f}", f"{r.sigma_bns:.4f}", f"{r.sigma_nns:.4f}",
             f"{r.tau_mean_us:.1f}", str(r.n_local), str(r.n_peer),
             str(r.n_cloud)] for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(widths[i]) for i, c in enumerate(cols))]
    lines += ["  ".join(v.rjust(widths[i]) for i, v in enumerate(row)) for row in rows]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
