"""Independent reference computations used to cross-check the fast paths.

Everything here deliberately avoids the implementation tricks of the modules
it validates: Shapley values come from full coalition enumeration instead of
sampling, posteriors from direct density products instead of log-space sums,
and gradients from central finite differences instead of backpropagation.
The self-test command and the test suite both build on these.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .aggregator import AnnWeights, ann_gradients
from .importance import PredictiveModel
from .nbc import NbcModel


def exact_shapley(model: PredictiveModel, X: np.ndarray, i: int, j: int) -> float:
    """Shapley value of feature j for instance i by full coalition enumeration.

    The value of a coalition S is the mean model score over all background
    rows with the features in S taken from instance i. Exponential in the
    feature count; intended for M <= ~12.
    """
    X = np.asarray(X, dtype=float)
    n, M = X.shape
    if M > 16:
        raise ValueError("exact enumeration is limited to M <= 16")
    others = [f for f in range(M) if f != j]

    fact = [math.factorial(k) for k in range(M + 1)]

    def coalition_value(subset: tuple[int, ...]) -> float:
        rows = X.copy()
        for f in subset:
            rows[:, f] = X[i, f]
        return float(model.predict_batch(rows).mean())

    value = 0.0
    for size in range(len(others) + 1):
        weight = fact[size] * fact[M - size - 1] / fact[M]
        for subset in itertools.combinations(others, size):
            v_without = coalition_value(subset)
            v_with = coalition_value(subset + (j,))
            value += weight * (v_with - v_without)
    return value


def direct_posterior(model: NbcModel, x: np.ndarray) -> np.ndarray:
    """Posterior by plain density products (no log space); for small M only."""
    x = np.asarray(x, dtype=float)
    weights = []
    for k in range(model.n_classes):
        p = float(model.priors[k])
        for j in model.feature_subset:
            var = float(model.variances[k, j])
            mu = float(model.means[k, j])
            p *= math.exp(-((x[j] - mu) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
        weights.append(p)
    total = sum(weights)
    return np.array([w / total for w in weights])


def finite_diff_gradients(wts: AnnWeights, O: np.ndarray, t: np.ndarray,
                          h: float = 1e-5) -> dict:
    """Central-difference gradients of the batch MSE w.r.t. every weight."""
    O = np.asarray(O, dtype=float)
    t = np.asarray(t, dtype=float)

    def mse_at(hw, hb, ow, ob) -> float:
        _, mse = ann_gradients(AnnWeights(hw, hb, ow, ob), O, t)
        return mse

    params = {
        "hidden_w": wts.hidden_w.copy(),
        "hidden_b": wts.hidden_b.copy(),
        "out_w": wts.out_w.copy(),
        "out_b": np.array([wts.out_b]),
    }

    def perturbed(name, flat_idx, delta):
        p = {k: v.copy() for k, v in params.items()}
        p[name].flat[flat_idx] += delta
        return mse_at(p["hidden_w"], p["hidden_b"], p["out_w"], float(p["out_b"][0]))

    grads = {}
    for name, arr in params.items():
        g = np.empty(arr.size)
        for idx in range(arr.size):
            g[idx] = (perturbed(name, idx, h) - perturbed(name, idx, -h)) / (2.0 * h)
        grads[name] = g.reshape(arr.shape) if name != "out_b" else float(g[0])
    return grads


def gradient_check(wts: AnnWeights, O: np.ndarray, t: np.ndarray,
                   h: float = 1e-5, rel_tol: float = 1e-4) -> float:
    """Worst relative disagreement between backprop and finite differences.

    The relative error of a parameter uses max(|backprop|, |fd|, 1e-5) as the
    denominator, so near-zero gradients are compared absolutely at 1e-9 rather
    than amplifying finite-difference noise. Returns the maximum over all
    parameters; a value <= rel_tol counts as agreement.
    """
    bp, _ = ann_gradients(wts, O, t)
    fd = finite_diff_gradients(wts, O, t, h)
    worst = 0.0
    for name in ("hidden_w", "hidden_b", "out_w", "out_b"):
        a = np.atleast_1d(np.asarray(bp[name], dtype=float)).ravel()
        b = np.atleast_1d(np.asarray(fd[name], dtype=float)).ravel()
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-5)
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst
