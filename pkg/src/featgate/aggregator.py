"""Fusion of the three importance scores into one significance value per feature.

A three-layer feed-forward network (3 inputs, C sigmoid hidden units, one
sigmoid output) aggregates the estimators' normalized opinions. It is trained
once on a synthetic "expert" set whose target is a fixed monotone blend of the
inputs, then applied per feature to produce the fused significance used for
subset selection, either the top fraction of a sorted list or everything above
a threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit

from .errors import Diverged, EmptySelection, InvalidConfig, InvalidWeights
from .importance import ImportanceScores

DEFAULT_TRUST_WEIGHTS = (0.4, 0.4, 0.2)

_WEIGHTS_MAGIC = "featgate-ann"
_WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class AnnWeights:
    """Parameters of the fusion network; immutable and shareable."""

    hidden_w: np.ndarray   # (C, n_inputs)
    hidden_b: np.ndarray   # (C,)
    out_w: np.ndarray      # (C,)
    out_b: float

    def __post_init__(self):
        hw = np.asarray(self.hidden_w, dtype=float)
        hb = np.asarray(self.hidden_b, dtype=float)
        ow = np.asarray(self.out_w, dtype=float)
        if hw.ndim != 2 or hw.shape[0] < 1:
            raise ValueError("hidden_w must be (C, n_inputs) with C >= 1")
        if hb.shape != (hw.shape[0],) or ow.shape != (hw.shape[0],):
            raise ValueError("bias/output weight shapes do not match C")
        parts = [hw, hb, ow, np.asarray([self.out_b])]
        if not all(np.all(np.isfinite(p)) for p in parts):
            raise ValueError("weights must be finite")
        for a in (hw, hb, ow):
            a.flags.writeable = False
        object.__setattr__(self, "hidden_w", hw)
        object.__setattr__(self, "hidden_b", hb)
        object.__setattr__(self, "out_w", ow)
        object.__setattr__(self, "out_b", float(self.out_b))

    @property
    def c_hidden(self) -> int:
        return self.hidden_w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.hidden_w.shape[1]


@dataclass(frozen=True)
class TrainingSample:
    """One expert example: estimator outputs in [0,1]^3 and a target in [0,1]."""

    input: np.ndarray
    target: float

    def __post_init__(self):
        arr = np.asarray(self.input, dtype=float)
        if arr.shape != (3,) or np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("input must be 3 reals in [0, 1]")
        if not 0.0 <= self.target <= 1.0:
            raise ValueError("target must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "input", arr)
        object.__setattr__(self, "target", float(self.target))


@dataclass(frozen=True)
class TopFraction:
    """Keep the ceil(fraction * M) highest-scoring features."""

    fraction: float


@dataclass(frozen=True)
class Threshold:
    """Keep every feature whose fused score strictly exceeds the cutoff."""

    cutoff: float


@dataclass(frozen=True)
class SelectedFeatureSet:
    """Outcome of selection: chosen indices (best first) and all fused scores."""

    indices: tuple[int, ...]
    scores: np.ndarray
    mode: TopFraction | Threshold


class TrainedAnn(NamedTuple):
    weights: AnnWeights
    mse: float
    epochs: int


def normalize_scores(s: ImportanceScores) -> np.ndarray:
    """Min-max normalize each estimator's row across features, to a (3, M) array.

    A constant row carries no ranking information and maps to all 0.5.
    """
    rows = np.vstack([s.pfi, s.shapley, s.fit]).astype(float)
    out = np.empty_like(rows)
    for r in range(3):
        lo, hi = rows[r].min(), rows[r].max()
        if hi - lo < 1e-12:
            out[r] = 0.5
        else:
            out[r] = (rows[r] - lo) / (hi - lo)
    return out


def forward(wts: AnnWeights, o_f: Sequence[float]) -> float:
    """Network output for one input triple: sigmoid of a weighted sum of
    sigmoid hidden units. Always strictly inside (0, 1) for finite weights."""
    o = np.asarray(o_f, dtype=float)
    z = expit(wts.hidden_w @ o + wts.hidden_b)
    return float(expit(float(wts.out_w @ z) + wts.out_b))


def forward_batch(wts: AnnWeights, O: np.ndarray) -> np.ndarray:
    """Network output for every row of an (n, n_inputs) array."""
    Z = expit(O @ wts.hidden_w.T + wts.hidden_b)
    return expit(Z @ wts.out_w + wts.out_b)


def expert_training_set(n: int, weights: Sequence[float] = DEFAULT_TRUST_WEIGHTS,
                        seed=0) -> list[TrainingSample]:
    """Synthetic expert examples: uniform inputs, target = trust-weighted mean.

    The default trust weights (0.4, 0.4, 0.2) treat the permutation and
    Shapley estimators as equally reliable and the interaction share as a
    weaker tertiary signal.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidWeights("trust weights must be 3 non-negatives summing to 1")
    if n < 1:
        raise InvalidConfig("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(0.0, 1.0, size=(n, 3))
    targets = inputs @ w
    return [TrainingSample(inputs[i], float(targets[i])) for i in range(n)]


def _unpack(samples: Sequence[TrainingSample]):
    O = np.vstack([s.input for s in samples])
    t = np.array([s.target for s in samples])
    return O, t


def _gradients_raw(hw, hb, ow, ob, O, t):
    n = len(t)
    Z = expit(O @ hw.T + hb)
    y = expit(Z @ ow + ob)
    err = y - t
    mse = float(np.mean(err ** 2))

    d_a2 = (2.0 / n) * err * y * (1.0 - y)
    d_out_w = Z.T @ d_a2
    d_out_b = float(d_a2.sum())
    d_A1 = np.outer(d_a2, ow) * Z * (1.0 - Z)
    grads = {
        "hidden_w": d_A1.T @ O,
        "hidden_b": d_A1.sum(axis=0),
        "out_w": d_out_w,
        "out_b": d_out_b,
    }
    return grads, mse


def ann_gradients(wts: AnnWeights, O: np.ndarray, t: np.ndarray):
    """Backpropagated gradients of the mean squared error over a batch.

    Returns ``(grads, mse)`` where grads holds d(mse)/d(param) arrays keyed
    like the AnnWeights fields.
    """
    return _gradients_raw(wts.hidden_w, wts.hidden_b, wts.out_w, wts.out_b,
                          np.asarray(O, dtype=float), np.asarray(t, dtype=float))


def init_weights(c_hidden: int, n_inputs: int = 3, seed=0) -> AnnWeights:
    """Uniform [-0.5, 0.5] initialization; draw order fixed for reproducibility."""
    rng = np.random.default_rng(seed)
    return AnnWeights(
        hidden_w=rng.uniform(-0.5, 0.5, size=(c_hidden, n_inputs)),
        hidden_b=rng.uniform(-0.5, 0.5, size=c_hidden),
        out_w=rng.uniform(-0.5, 0.5, size=c_hidden),
        out_b=float(rng.uniform(-0.5, 0.5)),
    )


def train_ann(samples: Sequence[TrainingSample], c_hidden: int = 8,
              learning_rate: float = 0.5, max_epochs: int = 10000,
              target_mse: float = 1e-3, seed=0) -> TrainedAnn:
    """Full-batch gradient descent on mean squared error via backpropagation.

    Stops as soon as the training MSE reaches ``target_mse`` or after
    ``max_epochs`` updates, whichever comes first. Raises Diverged if the loss
    ever becomes non-finite.
    """
    if len(samples) < 10:
        raise InvalidConfig("need at least 10 training samples")
    if c_hidden < 1:
        raise InvalidConfig("need at least one hidden unit")
    O, t = _unpack(samples)
    wts = init_weights(c_hidden, O.shape[1], seed)
    hw, hb, ow = wts.hidden_w.copy(), wts.hidden_b.copy(), wts.out_w.copy()
    ob = wts.out_b

    epochs_run = 0
    for _ in range(max_epochs):
        grads, mse = _gradients_raw(hw, hb, ow, ob, O, t)
        if not math.isfinite(mse):
            raise Diverged(f"training MSE became non-finite after {epochs_run} epochs")
        if mse <= target_mse:
            return TrainedAnn(AnnWeights(hw, hb, ow, ob), mse, epochs_run)
        hw -= learning_rate * grads["hidden_w"]
        hb -= learning_rate * grads["hidden_b"]
        ow -= learning_rate * grads["out_w"]
        ob -= learning_rate * grads["out_b"]
        epochs_run += 1

    _, mse = _gradients_raw(hw, hb, ow, ob, O, t)
    if not math.isfinite(mse):
        raise Diverged(f"training MSE became non-finite after {epochs_run} epochs")
    return TrainedAnn(AnnWeights(hw, hb, ow, ob), mse, epochs_run)


def fused_scores(scores: ImportanceScores, wts: AnnWeights) -> np.ndarray:
    """Fused significance per feature: normalize the triple, then one forward pass."""
    norm = normalize_scores(scores)
    return forward_batch(wts, norm.T)


def select_features(scores: ImportanceScores, wts: AnnWeights,
                    mode: TopFraction | Threshold) -> SelectedFeatureSet:
    """Rank features by fused significance and keep a subset.

    TopFraction keeps exactly ceil(fraction * M) features; Threshold keeps all
    features scoring strictly above the cutoff and raises EmptySelection if
    none do (callers fall back to TopFraction). Equal scores rank by lower
    feature index.
    """
    fused = fused_scores(scores, wts)
    M = len(fused)
    order = np.lexsort((np.arange(M), -fused))
    if isinstance(mode, TopFraction):
        if not 0.0 < mode.fraction <= 1.0:
            raise InvalidConfig("fraction must lie in (0, 1]")
        count = math.ceil(mode.fraction * M)
        chosen = order[:count]
    elif isinstance(mode, Threshold):
        if not 0.0 <= mode.cutoff < 1.0:
            raise InvalidConfig("cutoff must lie in [0, 1)")
        chosen = [int(i) for i in order if fused[i] > mode.cutoff]
        if not chosen:
            raise EmptySelection(f"no feature scored above {mode.cutoff}")
    else:
        raise InvalidConfig(f"unknown selection mode {mode!r}")
    return SelectedFeatureSet(
        indices=tuple(int(i) for i in chosen), scores=fused, mode=mode
    )


def save_weights(wts: AnnWeights, path) -> None:
    """Write weights as versioned plain text (dimensions, then rows of reals)."""
    lines = [f"{_WEIGHTS_MAGIC} {_WEIGHTS_VERSION}", f"{wts.c_hidden} {wts.n_inputs}"]
    for row in wts.hidden_w:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in wts.hidden_b))
    lines.append(" ".join(repr(float(v)) for v in wts.out_w))
    lines.append(repr(float(wts.out_b)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> AnnWeights:
    """Read weights written by :func:`save_weights`; round-trips exactly."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith(_WEIGHTS_MAGIC):
        raise ValueError(f"{path}: not a weights file")
    version = int(lines[0].split()[1])
    if version != _WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weights version {version}")
    c, n_in = (int(v) for v in lines[1].split())
    if len(lines) != 2 + c + 3:
        raise ValueError(f"{path}: truncated weights file")
    hidden_w = np.array([[float(v) for v in lines[2 + r].split()] for r in range(c)])
    hidden_b = np.array([float(v) for v in lines[2 + c].split()])
    out_w = np.array([float(v) for v in lines[3 + c].split()])
    out_b = float(lines[4 + c])
    if hidden_w.shape != (c, n_in) or len(hidden_b) != c or len(out_w) != c:
        raise ValueError(f"{path}: dimension mismatch")
    return AnnWeights(hidden_w, hidden_b, out_w, out_b)
