"""Tree base learners: CART, random forests, and gradient-boosted trees.

Single- and multi-output variants share one builder; multi-output split
quality is the unweighted mean of per-output impurity decreases. The split
search is exact over sorted unique values with midpoint thresholds, and
tie-breaking is deterministic: lowest feature index, then lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidInputError

CRITERIA = ("gini", "entropy", "variance")

# Impurity at or below this is treated as a pure node (stop splitting).
PURITY_EPS = 1e-12

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    """Base-learner configuration shared by trees, forests, and GBT."""

    tree_count: int = 200
    max_depth: int = 12
    min_samples_leaf: int = 5
    feature_fraction: float = 1.0
    learning_rate: float = 0.1
    criterion: str = "gini"
    bootstrap: bool = True

    def __post_init__(self):
        if self.tree_count < 1:
            raise InvalidInputError("tree_count must be >= 1")
        if self.max_depth < 0:
            raise InvalidInputError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise InvalidInputError("min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise InvalidInputError("feature_fraction must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.criterion not in CRITERIA:
            raise InvalidInputError(f"criterion must be one of {CRITERIA}")


@dataclass
class TreeNode:
    """One node; internal nodes carry a split, leaves carry the payload.

    ``value`` is the per-output mean of the node's training rows: the
    positive-class probability for classification targets, the target mean
    for regression. It is stored on internal nodes too (cheap, and useful
    for diagnostics), but only leaves are read at prediction time.
    """

    n_samples: int
    impurity: float
    value: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    """Bagged ensemble; prediction is the arithmetic mean of member trees."""

    trees: list[TreeNode]
    params: Hyperparams
    task: str  # classification | regression
    n_features: int
    n_outputs: int
    seed: int


@dataclass
class GbtModel:
    """Stagewise boosted regression trees with identity or logistic link."""

    stages: list[TreeNode]
    learning_rate: float
    init_score: float
    loss: str  # squared | logistic
    params: Hyperparams
    n_features: int
    seed: int

    @property
    def link(self) -> str:
        return "logistic" if self.loss == "logistic" else "identity"


def impurity(values, criterion: str) -> float:
    """Node impurity of a target sample; multi-output is the column mean.

    gini = 1 - sum(p_c^2); entropy uses log base 2; variance is the mean
    squared deviation. gini/entropy require binary targets.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidInputError("impurity of an empty sample is undefined")
    if v.ndim == 1:
        v = v[:, None]
    if criterion not in CRITERIA:
        raise InvalidInputError(f"criterion must be one of {CRITERIA}")
    if criterion in ("gini", "entropy") and not np.isin(v, (0.0, 1.0)).all():
        raise InvalidInputError(f"{criterion} impurity requires binary targets")
    n = v.shape[0]
    s1 = v.sum(axis=0)
    s2 = (v * v).sum(axis=0)
    return float(_impurity_from_sums(s1[None, :], s2[None, :], np.array([n]), criterion)[0])


def _impurity_from_sums(s1, s2, count, criterion):
    """Mean per-output impurity from target sums.

    ``s1``/``s2`` have a trailing output axis; ``count`` broadcasts against
    the leading axes. Returns the per-output mean with the output axis
    reduced away.
    """
    cnt = np.asarray(count, dtype=float)[..., None]
    mean = s1 / cnt
    if criterion == "gini":
        per_output = 2.0 * mean * (1.0 - mean)
    elif criterion == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = np.where(mean > 0, -mean * np.log2(mean), 0.0)
            t1 = np.where(mean < 1, -(1 - mean) * np.log2(1 - mean), 0.0)
        per_output = t0 + t1
    else:  # variance
        per_output = s2 / cnt - mean**2
    return per_output.mean(axis=-1)


# Above this many candidate cells the split search processes features one at
# a time instead of as one block, bounding peak memory at wide nodes.
_BLOCK_CELL_LIMIT = 4_000_000


def _best_split(X, Y, idx, features, parent_imp, params):
    """Exact best split over the given features; None when no feature has
    two distinct values under the leaf-size constraint.

    Ties (including zero-gain ties, which XOR-structured targets produce at
    the root) resolve to the lowest feature index, then lowest threshold, so
    fits are deterministic. Constant columns yield no candidates and can
    never alter a fit.
    """
    n = idx.size
    q = Y.shape[1]
    if n * len(features) * q <= _BLOCK_CELL_LIMIT:
        groups = [features]
    else:
        step = max(1, _BLOCK_CELL_LIMIT // max(1, n * q))
        groups = [features[i : i + step] for i in range(0, len(features), step)]
    best = None  # (gain, feature, threshold, left_size, order_column)
    for group in groups:
        found = _best_split_block(X, Y, idx, np.asarray(group), parent_imp, params)
        if found is not None and (best is None or found[0] > best[0]):
            best = found
    return best


def _best_split_block(X, Y, idx, features, parent_imp, params):
    n = idx.size
    needs_sq = params.criterion == "variance"
    xn = X[np.ix_(idx, features)]  # (n, F)
    order = np.argsort(xn, axis=0, kind="stable")
    xs = np.take_along_axis(xn, order, axis=0)
    ks = np.arange(1, n)
    valid = xs[1:] > xs[:-1]  # (n-1, F)
    msl = params.min_samples_leaf
    if msl > 1:
        valid &= ((ks >= msl) & (ks <= n - msl))[:, None]
    if not valid.any():
        return None
    ys = Y[idx][order]  # (n, F, q)
    cum1 = np.cumsum(ys, axis=0)
    tot1 = cum1[-1]
    left1 = cum1[:-1]
    if needs_sq:
        cum2 = np.cumsum(ys * ys, axis=0)
        tot2, left2 = cum2[-1], cum2[:-1]
    else:  # binary targets: y^2 == y
        tot2, left2 = tot1, left1
    counts_l = ks[:, None].astype(float)  # broadcast over F
    counts_r = (n - ks)[:, None].astype(float)
    imp_l = _impurity_from_sums(left1, left2, np.broadcast_to(counts_l, valid.shape),
                                params.criterion)
    imp_r = _impurity_from_sums(tot1 - left1, tot2 - left2,
                                np.broadcast_to(counts_r, valid.shape), params.criterion)
    gains = parent_imp - (counts_l / n) * imp_l - (counts_r / n) * imp_r
    gains[~valid] = -np.inf
    # feature-major flat argmax: ties resolve to lowest feature, then lowest
    # threshold (positions ascend within a feature column)
    flat = np.argmax(gains.T)
    f_local, pos = divmod(int(flat), n - 1)
    gain = float(gains[pos, f_local])
    if not np.isfinite(gain):
        return None
    k = pos + 1
    threshold = float((xs[k - 1, f_local] + xs[k, f_local]) / 2.0)
    return (gain, int(features[f_local]), threshold, k, order[:, f_local])


def _build_node(X, Y, idx, depth, params, rng):
    n = idx.size
    value = Y[idx].mean(axis=0)
    s1 = Y[idx].sum(axis=0)
    s2 = (Y[idx] * Y[idx]).sum(axis=0)
    imp = float(_impurity_from_sums(s1[None, :], s2[None, :], np.array([n]), params.criterion)[0])
    node = TreeNode(n_samples=n, impurity=imp, value=value)
    if depth >= params.max_depth or n < 2 * params.min_samples_leaf or imp <= PURITY_EPS:
        return node
    d = X.shape[1]
    if params.feature_fraction < 1.0:
        k = max(1, int(round(params.feature_fraction * d)))
        features = np.sort(rng.choice(d, size=k, replace=False))
    else:
        features = np.arange(d)
    best = _best_split(X, Y, idx, features, imp, params)
    if best is None:
        return node
    _, node.feature, node.threshold, left_size, order = best
    left_idx = idx[order[:left_size]]
    right_idx = idx[order[left_size:]]
    node.left = _build_node(X, Y, left_idx, depth + 1, params, rng)
    node.right = _build_node(X, Y, right_idx, depth + 1, params, rng)
    return node


def _validate_xy(X, Y, binary_required):
    X = np.asarray(getattr(X, "values", X), dtype=float)
    Y = np.asarray(getattr(Y, "values", Y), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise InvalidInputError("X and Y must be nonempty with matching row counts")
    if binary_required and not np.isin(Y, (0.0, 1.0)).all():
        raise InvalidInputError("binary targets required")
    return X, Y


def fit_tree(X, Y, params: Hyperparams, seed: int) -> TreeNode:
    """Greedy CART fit; Y may have one or q columns."""
    X, Y = _validate_xy(X, Y, params.criterion in ("gini", "entropy"))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return _build_node(X, Y, np.arange(X.shape[0]), 0, params, rng)


def predict_tree(root: TreeNode, X) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=float)
    out = np.empty((X.shape[0], root.value.size))
    _route(root, X, np.arange(X.shape[0]), out)
    return out


def _route(node, X, idx, out):
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] <= node.threshold
    _route(node.left, X, idx[mask], out)
    _route(node.right, X, idx[~mask], out)


def fit_forest(X, Y, params: Hyperparams, seed: int, task: str = "classification") -> ForestModel:
    """Bootstrap ensemble with per-node feature subsampling.

    Classification targets must be binary; leaf payloads are positive-class
    probabilities, so averaged forest scores land in [0, 1].
    """
    if task not in ("classification", "regression"):
        raise InvalidInputError("task must be classification or regression")
    if task == "regression" and params.criterion != "variance":
        params = Hyperparams(**{**asdict(params), "criterion": "variance"})
    X, Y = _validate_xy(X, Y, task == "classification")
    n = X.shape[0]
    trees = []
    for child in np.random.SeedSequence(seed).spawn(params.tree_count):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(_build_node(X, Y, idx, 0, params, rng))
    return ForestModel(trees, params, task, X.shape[1], Y.shape[1], seed)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    """Score matrix: mean of member-tree predictions, shape (rows, outputs)."""
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidInputError(
            f"expected {model.n_features} feature columns, got {X.shape[1] if X.ndim == 2 else 'non-2d'}"
        )
    total = np.zeros((X.shape[0], model.n_outputs))
    for tree in model.trees:
        total += predict_tree(tree, X)
    return total / len(model.trees)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def fit_gbt(X, y, params: Hyperparams, seed: int, loss: str = "logistic") -> GbtModel:
    """Stagewise boosting: each stage fits a variance tree to the negative
    gradient of the loss at the current raw score."""
    if loss not in ("squared", "logistic"):
        raise InvalidInputError("loss must be squared or logistic")
    X, Y = _validate_xy(X, y, binary_required=(loss == "logistic"))
    if Y.shape[1] != 1:
        raise InvalidInputError("gradient boosting is single-output")
    y1 = Y[:, 0]
    stage_params = Hyperparams(
        **{**asdict(params), "criterion": "variance", "bootstrap": False}
    )
    n = X.shape[0]
    if loss == "logistic":
        p0 = float(np.clip(y1.mean(), 1.0 / (2 * n), 1.0 - 1.0 / (2 * n)))
        init = float(np.log(p0 / (1.0 - p0)))
    else:
        init = float(y1.mean())
    raw = np.full(n, init)
    stages = []
    for child in np.random.SeedSequence(seed).spawn(params.tree_count):
        rng = np.random.default_rng(child)
        residual = y1 - (_sigmoid(raw) if loss == "logistic" else raw)
        tree = _build_node(X, residual[:, None], np.arange(n), 0, stage_params, rng)
        stages.append(tree)
        raw += params.learning_rate * predict_tree(tree, X)[:, 0]
    return GbtModel(stages, params.learning_rate, init, loss, params, X.shape[1], seed)


def predict_gbt_raw(model: GbtModel, X) -> np.ndarray:
    """Pre-link score vector: init + sum of learning-rate-scaled stages."""
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidInputError(f"expected {model.n_features} feature columns")
    raw = np.full(X.shape[0], model.init_score)
    for tree in model.stages:
        raw += model.learning_rate * predict_tree(tree, X)[:, 0]
    return raw


def predict_gbt(model: GbtModel, X) -> np.ndarray:
    raw = predict_gbt_raw(model, X)
    return _sigmoid(raw) if model.loss == "logistic" else raw


# --- serialization ----------------------------------------------------------
#
# Versioned JSON node arrays. Thresholds and values are emitted as plain JSON
# numbers; Python's shortest-repr float encoding makes the round trip exact.


def _flatten_tree(root: TreeNode) -> dict:
    nodes = []

    def visit(node):
        i = len(nodes)
        nodes.append(
            {
                "n": node.n_samples,
                "impurity": node.impurity,
                "value": [float(v) for v in node.value],
                "feature": node.feature,
                "threshold": node.threshold,
                "left": -1,
                "right": -1,
            }
        )
        if not node.is_leaf:
            nodes[i]["left"] = visit(node.left)
            nodes[i]["right"] = visit(node.right)
        return i

    visit(root)
    return {"nodes": nodes}


def _unflatten_tree(payload: dict) -> TreeNode:
    nodes = payload["nodes"]

    def build(i):
        raw = nodes[i]
        node = TreeNode(
            n_samples=raw["n"],
            impurity=raw["impurity"],
            value=np.array(raw["value"]),
            feature=raw["feature"],
            threshold=raw["threshold"],
        )
        if raw["left"] >= 0:
            node.left = build(raw["left"])
            node.right = build(raw["right"])
        return node

    return build(0)


def forest_to_json(model: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT_VERSION,
        "model": "forest",
        "task": model.task,
        "params": asdict(model.params),
        "n_features": model.n_features,
        "n_outputs": model.n_outputs,
        "seed": model.seed,
        "trees": [_flatten_tree(t) for t in model.trees],
    }


def forest_from_json(payload: dict) -> ForestModel:
    if payload.get("format") != MODEL_FORMAT_VERSION or payload.get("model") != "forest":
        raise InvalidInputError("not a supported forest payload")
    return ForestModel(
        trees=[_unflatten_tree(t) for t in payload["trees"]],
        params=Hyperparams(**payload["params"]),
        task=payload["task"],
        n_features=payload["n_features"],
        n_outputs=payload["n_outputs"],
        seed=payload["seed"],
    )


def gbt_to_json(model: GbtModel) -> dict:
    return {
        "format": MODEL_FORMAT_VERSION,
        "model": "gbt",
        "loss": model.loss,
        "learning_rate": model.learning_rate,
        "init_score": model.init_score,
        "params": asdict(model.params),
        "n_features": model.n_features,
        "seed": model.seed,
        "stages": [_flatten_tree(t) for t in model.stages],
    }


def gbt_from_json(payload: dict) -> GbtModel:
    if payload.get("format") != MODEL_FORMAT_VERSION or payload.get("model") != "gbt":
        raise InvalidInputError("not a supported gbt payload")
    return GbtModel(
        stages=[_unflatten_tree(t) for t in payload["stages"]],
        learning_rate=payload["learning_rate"],
        init_score=payload["init_score"],
        loss=payload["loss"],
        params=Hyperparams(**payload["params"]),
        n_features=payload["n_features"],
        seed=payload["seed"],
    )
