"""Feature-importance techniques and cross-model aggregation.

Three techniques per fitted model: impurity-based (mean decrease in
impurity), permutation importance against the model's selection metric, and
exact path-dependent tree SHAP. Cross-model aggregation produces the
log-transformed score matrix and top-k appearance counts.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from . import chains, trees
from .metrics import classification_loss, regression_loss

LOG_SCORE_FLOOR = 1e-12
DEFAULT_TOP_K = 20


@dataclass
class ImportanceTable:
    """Per-feature scores for one (model, technique) pair."""

    model_id: str
    technique: str  # impurity | permutation | shap
    feature_names: tuple[str, ...]
    scores: np.ndarray
    normalized: bool
    split_counts: np.ndarray | None = None  # boosted models only


@dataclass
class ShapExplanation:
    """Per-row, per-feature attribution values.

    ``values`` has shape (rows, features, outputs); local accuracy holds:
    base_values + values.sum(axis=1) equals the model's (raw-space)
    prediction for every row.
    """

    values: np.ndarray
    base_values: np.ndarray


# --- impurity-based (MDI) -----------------------------------------------------


def _accumulate_decreases(node, acc, splits, scale):
    if node.is_leaf:
        return
    decrease = (
        node.n_samples * node.impurity
        - node.left.n_samples * node.left.impurity
        - node.right.n_samples * node.right.impurity
    )
    acc[node.feature] += decrease * scale
    if splits is not None:
        splits[node.feature] += 1
    _accumulate_decreases(node.left, acc, splits, scale)
    _accumulate_decreases(node.right, acc, splits, scale)


def mdi_importance(model, feature_names=None, model_id="") -> ImportanceTable:
    """Summed weighted impurity decreases per feature, normalized to sum 1.

    For boosted models the decreases are loss reductions of the stage fits
    (variance of residuals), and split counts are reported alongside; those
    gains are not numerically comparable to other libraries' gain outputs.
    """
    if isinstance(model, trees.ForestModel):
        roots, is_gbt = model.trees, False
    elif isinstance(model, trees.GbtModel):
        roots, is_gbt = model.stages, True
    else:
        raise InvalidInputError("mdi_importance expects a ForestModel or GbtModel")
    d = model.n_features
    acc = np.zeros(d)
    splits = np.zeros(d, dtype=np.int64) if is_gbt else None
    for root in roots:
        _accumulate_decreases(root, acc, splits, 1.0 / root.n_samples)
    acc = np.maximum(acc, 0.0)  # zero-gain splits can leave -0.0-scale dust
    total = acc.sum()
    if total <= 0:
        warnings.warn("model has no internal nodes; importance is all zero")
        scores = np.zeros(d)
    else:
        scores = acc / total
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d))
    return ImportanceTable(model_id, "impurity", names, scores, normalized=True,
                           split_counts=splits)


# --- permutation importance ----------------------------------------------------


def permutation_importance(model: chains.ChainModel, X, truth, metric=None,
                           repeats: int = 5, seed: int = 0,
                           feature_names=None, model_id="") -> ImportanceTable:
    """Mean loss increase after permuting one feature column at a time.

    The loss is the model's selection metric (oriented lower-is-better), so
    larger importance always means more important. One row permutation is
    drawn per repeat and shared across features.
    """
    if repeats < 1:
        raise InvalidInputError("repeats must be >= 1")
    Xv = np.asarray(getattr(X, "values", X), dtype=float)
    tv = np.asarray(getattr(truth, "values", truth))
    metric = metric or model.selection_metric
    if model.task == "classification":
        loss = lambda yhat: classification_loss(metric, tv, yhat)
        baseline = loss(chains.predict_labels(model, Xv))
    else:
        loss = lambda zhat: regression_loss(metric, tv, zhat)
        baseline = loss(chains.predict_regression(model, Xv))
    d = Xv.shape[1]
    deltas = np.zeros(d)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xFE]))
    for _ in range(repeats):
        perm = rng.permutation(Xv.shape[0])
        for f in range(d):
            Xp = Xv.copy()
            Xp[:, f] = Xv[perm, f]
            pred = (chains.predict_labels(model, Xp) if model.task == "classification"
                    else chains.predict_regression(model, Xp))
            deltas[f] += loss(pred) - baseline
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d))
    return ImportanceTable(model_id, "permutation", names, deltas / repeats,
                           normalized=False)


# --- exact path-dependent tree SHAP ---------------------------------------------
#
# Polynomial-time recursion over decision paths. Each path element tracks the
# fraction of weighted training samples that would reach the node if the
# element's feature is unknown (zero_fraction), the indicator of the row
# following the branch (one_fraction), and the permutation-weight sums
# (pweight). Repeated features along a path are merged via unwinding.


def _extend(path, zero_fraction, one_fraction, feature):
    path = [row.copy() for row in path]
    depth = len(path)
    path.append([feature, zero_fraction, one_fraction, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one_fraction * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = zero_fraction * path[i][3] * (depth - i) / (depth + 1)
    return path


def _unwind(path, index):
    path = [row.copy() for row in path]
    last = len(path) - 1
    one_fraction = path[index][2]
    zero_fraction = path[index][1]
    carry = path[last][3]
    for j in range(last - 1, -1, -1):
        if one_fraction != 0.0:
            kept = path[j][3]
            path[j][3] = carry * (last + 1) / ((j + 1) * one_fraction)
            carry = kept - path[j][3] * zero_fraction * (last - j) / (last + 1)
        else:
            path[j][3] = path[j][3] * (last + 1) / (zero_fraction * (last - j))
    for j in range(index, last):
        path[j][0:3] = path[j + 1][0:3]
    return path[:-1]


def _unwound_sum(path, index):
    last = len(path) - 1
    one_fraction = path[index][2]
    zero_fraction = path[index][1]
    total = 0.0
    if one_fraction != 0.0:
        carry = path[last][3]
        for j in range(last - 1, -1, -1):
            term = carry / ((j + 1) * one_fraction)
            total += term
            carry = path[j][3] - term * zero_fraction * (last - j)
    else:
        for j in range(last - 1, -1, -1):
            total += path[j][3] / (zero_fraction * (last - j))
    return total * (last + 1)


def _tree_phi(root: trees.TreeNode, x: np.ndarray, phi: np.ndarray) -> None:
    """Accumulate one tree's attribution values into phi (features x outputs)."""

    def recurse(node, path, zero_fraction, one_fraction, feature):
        path = _extend(path, zero_fraction, one_fraction, feature)
        if node.is_leaf:
            for i in range(1, len(path)):
                w = _unwound_sum(path, i)
                phi[path[i][0]] += w * (path[i][2] - path[i][1]) * node.value
            return
        if x[node.feature] <= node.threshold:
            hot, cold = node.left, node.right
        else:
            hot, cold = node.right, node.left
        incoming_zero = incoming_one = 1.0
        k = next((j for j in range(1, len(path)) if path[j][0] == node.feature), None)
        if k is not None:
            incoming_zero, incoming_one = path[k][1], path[k][2]
            path = _unwind(path, k)
        recurse(hot, path, incoming_zero * hot.n_samples / node.n_samples,
                incoming_one, node.feature)
        recurse(cold, path, incoming_zero * cold.n_samples / node.n_samples,
                0.0, node.feature)

    recurse(root, [], 1.0, 1.0, -1)


def _tree_expected_value(root: trees.TreeNode) -> np.ndarray:
    def rec(node):
        if node.is_leaf:
            return node.n_samples * node.value
        return rec(node.left) + rec(node.right)

    return rec(root) / root.n_samples


def shap_tree(model, X) -> ShapExplanation:
    """Exact path-dependent SHAP values for a tree ensemble.

    Forests explain the averaged leaf payload per output; boosted models are
    explained in raw (pre-link) score space.
    """
    Xv = np.asarray(getattr(X, "values", X), dtype=float)
    if Xv.ndim != 2 or Xv.shape[0] < 1:
        raise InvalidInputError("X must be a nonempty 2-d matrix")
    if isinstance(model, trees.TreeNode):
        roots, weights, base0, n_features, q = [model], [1.0], 0.0, Xv.shape[1], model.value.size
    elif isinstance(model, trees.ForestModel):
        w = 1.0 / len(model.trees)
        roots = model.trees
        weights = [w] * len(roots)
        base0, n_features, q = 0.0, model.n_features, model.n_outputs
    elif isinstance(model, trees.GbtModel):
        roots = model.stages
        weights = [model.learning_rate] * len(roots)
        base0, n_features, q = model.init_score, model.n_features, 1
    else:
        raise InvalidInputError("shap_tree expects a TreeNode, ForestModel, or GbtModel")
    if Xv.shape[1] != n_features:
        raise InvalidInputError(f"expected {n_features} feature columns, got {Xv.shape[1]}")

    values = np.zeros((Xv.shape[0], n_features, q))
    base = np.full(q, float(base0))
    for root, w in zip(roots, weights):
        base += w * _tree_expected_value(root)
        for i in range(Xv.shape[0]):
            phi = np.zeros((n_features, q))
            _tree_phi(root, Xv[i], phi)
            values[i] += w * phi
    return ShapExplanation(values=values, base_values=base)


def shap_global_importance(model: chains.ChainModel, X,
                           feature_names=None, model_id="") -> ImportanceTable:
    """Mean |SHAP| per original feature for a fitted meta-learner.

    Chain kinds are explained learner by learner with their augmented
    inputs; attribution mass on augmentation columns is dropped so tables
    share the original feature space. Multi-output learners are reduced by
    averaging |phi| across outputs.
    """
    Xv = np.asarray(getattr(X, "values", X), dtype=float)
    d = model.n_features
    if Xv.ndim != 2 or Xv.shape[1] != d:
        raise InvalidInputError(f"expected {d} feature columns")
    per_label = []
    if model.kind in ("mct", "mrt"):
        exp = shap_tree(model.learners[0], Xv)
        for j in range(model.q):
            per_label.append(np.abs(exp.values[:, :, j]).mean(axis=0))
    elif model.kind in ("br", "mor"):
        for learner in model.learners:
            exp = shap_tree(learner, Xv)
            per_label.append(np.abs(exp.values[:, :, 0]).mean(axis=0))
    else:  # cc / rc: rebuild each position's augmented inputs
        aug = np.empty((Xv.shape[0], 0))
        for pos, j in enumerate(model.order):
            Xa = np.hstack([Xv, aug])
            learner = model.learners[pos]
            exp = shap_tree(learner, Xa)
            per_label.append(np.abs(exp.values[:, :d, 0]).mean(axis=0))
            pred = chains._predict_single(learner, Xa)
            if model.task == "classification":
                augmented = (pred >= model.thresholds[j]).astype(float)
            else:
                augmented = pred
            aug = np.hstack([aug, augmented[:, None]])
    scores = np.mean(per_label, axis=0)
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d))
    return ImportanceTable(model_id, "shap", names, scores, normalized=False)


# --- cross-model aggregation ----------------------------------------------------


def top_k_features(table: ImportanceTable, k: int) -> list[int]:
    """Indices of the k largest scores; ties break toward lower index."""
    if k > len(table.feature_names):
        raise InvalidInputError("k exceeds the number of features")
    order = sorted(range(len(table.scores)), key=lambda i: (-table.scores[i], i))
    return order[:k]


def aggregate_cross_model(tables: list[ImportanceTable], k: int = DEFAULT_TOP_K):
    """Cross-model log-score matrix and top-k appearance counts.

    Returns (log_scores, counts): log_scores[m, f] = log1p(score / floor)
    for display, and counts[f] = number of models whose top-k contains
    feature f (bounded by the model count; each model contributes exactly
    k memberships).
    """
    if not tables:
        raise InvalidInputError("need at least one importance table")
    names = tables[0].feature_names
    for t in tables:
        if t.feature_names != names:
            raise InvalidInputError("importance tables must share one feature space")
    d = len(names)
    if k > d:
        raise InvalidInputError("k exceeds the number of features")
    log_scores = np.empty((len(tables), d))
    counts = np.zeros(d, dtype=np.int64)
    for m, t in enumerate(tables):
        log_scores[m] = np.log1p(np.maximum(t.scores, 0.0) / LOG_SCORE_FLOOR)
        for f in top_k_features(t, k):
            counts[f] += 1
    return log_scores, counts
