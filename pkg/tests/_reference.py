"""Independent brute-force oracles used by the test suite.

These are deliberate re-derivations: plain-loop transcriptions of the metric
formulas and an exhaustive-subset Shapley evaluator. They share no code with
the package so they can serve as cross-checks.
"""
import math
from itertools import combinations

import numpy as np

from incidentml.trees import TreeNode


def _f1(tp, fp, fn, empty=0.0):
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else empty


def ref_classification_report(y, yhat):
    m, q = len(y), len(y[0])
    f1s, supports = [], []
    tp_g = fp_g = fn_g = 0
    for j in range(q):
        tp = fp = fn = 0
        for i in range(m):
            if y[i][j] == 1 and yhat[i][j] == 1:
                tp += 1
            elif y[i][j] == 0 and yhat[i][j] == 1:
                fp += 1
            elif y[i][j] == 1 and yhat[i][j] == 0:
                fn += 1
        f1s.append(_f1(tp, fp, fn))
        supports.append(tp + fn)
        tp_g, fp_g, fn_g = tp_g + tp, fp_g + fp, fn_g + fn
    total_support = sum(supports)
    weighted = (
        sum(s / total_support * f for s, f in zip(supports, f1s)) if total_support else 0.0
    )
    macro = sum(f1s) / q
    micro = _f1(tp_g, fp_g, fn_g)
    sample_terms, jac_terms = [], []
    for i in range(m):
        tp = sum(1 for j in range(q) if y[i][j] == 1 and yhat[i][j] == 1)
        fp = sum(1 for j in range(q) if y[i][j] == 0 and yhat[i][j] == 1)
        fn = sum(1 for j in range(q) if y[i][j] == 1 and yhat[i][j] == 0)
        sample_terms.append(_f1(tp, fp, fn, empty=1.0))
        union = tp + fp + fn
        jac_terms.append(tp / union if union else 1.0)
    hamming = sum(
        1 for i in range(m) for j in range(q) if y[i][j] != yhat[i][j]
    ) / (m * q)
    return {
        "weighted_f1": weighted,
        "macro_f1": macro,
        "micro_f1": micro,
        "sample_f1": sum(sample_terms) / m,
        "jaccard": sum(jac_terms) / m,
        "hamming": hamming,
    }


def ref_regression_report(z, zhat):
    m, q = len(z), len(z[0])
    mse = []
    for j in range(q):
        mse.append(sum((z[i][j] - zhat[i][j]) ** 2 for i in range(m)) / m)
    amse = sum(mse) / q
    armse = sum(math.sqrt(v) for v in mse) / q
    ccs = []
    for j in range(q):
        zbar = sum(z[i][j] for i in range(m)) / m
        pbar = sum(zhat[i][j] for i in range(m)) / m
        num = sum((z[i][j] - zbar) * (zhat[i][j] - pbar) for i in range(m))
        da = math.sqrt(sum((z[i][j] - zbar) ** 2 for i in range(m)))
        db = math.sqrt(sum((zhat[i][j] - pbar) ** 2 for i in range(m)))
        ccs.append(num / (da * db) if da > 0 and db > 0 else 0.0)
    acc = sum(ccs) / q
    rr = []
    for j in range(q):
        zbar = sum(z[i][j] for i in range(m)) / m
        denom = sum((z[i][j] - zbar) ** 2 for i in range(m))
        if denom > 0:
            rr.append(math.sqrt(sum((z[i][j] - zhat[i][j]) ** 2 for i in range(m)) / denom))
    arrmse = sum(rr) / len(rr) if rr else 0.0
    eu = sum(
        math.sqrt(sum((z[i][j] - zhat[i][j]) ** 2 for j in range(q))) for i in range(m)
    ) / m
    return {"amse": amse, "armse": armse, "acc": acc, "arrmse": arrmse, "eu_dist": eu}


# --- exhaustive Shapley with path-dependent conditional expectation -----------


def path_conditional_expectation(node, x, subset):
    if node.is_leaf:
        return np.asarray(node.value, dtype=float)
    if node.feature in subset:
        child = node.left if x[node.feature] <= node.threshold else node.right
        return path_conditional_expectation(child, x, subset)
    left = path_conditional_expectation(node.left, x, subset)
    right = path_conditional_expectation(node.right, x, subset)
    return (node.left.n_samples * left + node.right.n_samples * right) / node.n_samples


def brute_force_shap(root, x, d):
    q = np.asarray(root.value).size
    phi = np.zeros((d, q))
    players = list(range(d))
    for i in players:
        others = [p for p in players if p != i]
        for size in range(len(others) + 1):
            for subset in combinations(others, size):
                weight = (
                    math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
                )
                with_i = path_conditional_expectation(root, x, set(subset) | {i})
                without_i = path_conditional_expectation(root, x, set(subset))
                phi[i] += weight * (with_i - without_i)
    return phi


def random_tree(rng, d, max_depth, q=1, n_root=None):
    """Random tree with arbitrary splits, covers, and leaf values."""
    n_root = n_root or int(rng.integers(8, 64))

    def build(depth, n):
        if depth >= max_depth or n < 2 or rng.random() < 0.25:
            return TreeNode(n_samples=n, impurity=0.0, value=rng.normal(size=q))
        n_left = int(rng.integers(1, n))
        left = build(depth + 1, n_left)
        right = build(depth + 1, n - n_left)
        node = TreeNode(
            n_samples=n,
            impurity=0.0,
            value=(n_left * left.value + (n - n_left) * right.value) / n,
            feature=int(rng.integers(0, d)),
            threshold=float(np.round(rng.normal(), 2)),
            left=left,
            right=right,
        )
        return node

    return build(0, n_root)
