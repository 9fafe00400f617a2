"""Multi-label classification and multi-output regression metric suites.

Degenerate-case conventions (documented, not configurable unless noted):
  * per-label F1 with an empty denominator is 0,
  * sample-wise F1 / Jaccard of an empty-vs-empty row is 1,
  * Pearson correlation with zero variance on either side is 0 (warns),
  * relative-RMSE outputs with zero true variance are dropped from the
    average (warns); if every output is dropped the average is 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInputError

CLASSIFICATION_METRICS = ("weighted_f1", "macro_f1", "micro_f1", "sample_f1", "jaccard", "hamming")
REGRESSION_METRICS = ("amse", "armse", "acc", "arrmse", "eu_dist")

# Orientation used for CV selection losses and heatmap color inversion.
HIGHER_IS_BETTER = {
    "weighted_f1": True,
    "macro_f1": True,
    "micro_f1": True,
    "sample_f1": True,
    "jaccard": True,
    "hamming": False,
    "amse": False,
    "armse": False,
    "acc": True,
    "arrmse": False,
    "eu_dist": False,
}


@dataclass(frozen=True)
class ClassificationReport:
    weighted_f1: float
    macro_f1: float
    micro_f1: float
    sample_f1: float
    jaccard: float
    hamming: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class RegressionReport:
    amse: float
    armse: float
    acc: float
    arrmse: float
    eu_dist: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _as_binary(name: str, a) -> np.ndarray:
    v = np.asarray(getattr(a, "values", a))
    if v.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional")
    if not np.isin(v, (0, 1)).all():
        raise InvalidInputError(f"{name} entries must be 0 or 1")
    return v.astype(np.int64)


def _f1(tp, fp, fn, empty=0.0):
    denom = 2.0 * tp + fp + fn
    if denom == 0:
        return empty
    return 2.0 * tp / denom


def classification_report(y_true, y_pred,
                          macro_exclude_zero_support: bool = False) -> ClassificationReport:
    """All six multi-label metrics for a pair of binary matrices.

    By default zero-support labels enter the macro average as 0; set
    ``macro_exclude_zero_support`` to drop them from it instead.
    """
    yt = _as_binary("y_true", y_true)
    yp = _as_binary("y_pred", y_pred)
    if yt.shape != yp.shape:
        raise InvalidInputError("y_true and y_pred shapes differ")
    if yt.size == 0:
        raise InvalidInputError("empty label matrices")
    m, q = yt.shape

    tp_j = ((yt == 1) & (yp == 1)).sum(axis=0)
    fp_j = ((yt == 0) & (yp == 1)).sum(axis=0)
    fn_j = ((yt == 1) & (yp == 0)).sum(axis=0)
    f1_j = np.array([_f1(tp_j[j], fp_j[j], fn_j[j]) for j in range(q)])

    support = tp_j + fn_j
    total_support = support.sum()
    if total_support > 0:
        weighted = float((support / total_support) @ f1_j)
    else:
        weighted = 0.0
    if macro_exclude_zero_support and (support > 0).any():
        macro = float(f1_j[support > 0].mean())
    else:
        macro = float(f1_j.mean())
    micro = _f1(tp_j.sum(), fp_j.sum(), fn_j.sum())

    tp_i = ((yt == 1) & (yp == 1)).sum(axis=1)
    fp_i = ((yt == 0) & (yp == 1)).sum(axis=1)
    fn_i = ((yt == 1) & (yp == 0)).sum(axis=1)
    sample = float(np.mean([_f1(tp_i[i], fp_i[i], fn_i[i], empty=1.0) for i in range(m)]))

    union = tp_i + fp_i + fn_i
    jac_rows = np.where(union > 0, tp_i / np.maximum(union, 1), 1.0)
    jaccard = float(jac_rows.mean())

    hamming = float((yt != yp).mean())
    return ClassificationReport(weighted, macro, float(micro), sample, jaccard, hamming)


def regression_report(z_true, z_pred) -> RegressionReport:
    """All five multi-output regression metrics."""
    zt = np.asarray(getattr(z_true, "values", z_true), dtype=float)
    zp = np.asarray(getattr(z_pred, "values", z_pred), dtype=float)
    if zt.shape != zp.shape or zt.ndim != 2:
        raise InvalidInputError("z_true and z_pred must be 2-d with equal shapes")
    if zt.shape[0] < 1:
        raise InvalidInputError("need at least one row")
    m, q = zt.shape
    err = zt - zp

    mse_j = (err**2).mean(axis=0)
    amse = float(mse_j.mean())
    armse = float(np.sqrt(mse_j).mean())

    cc = np.zeros(q)
    for j in range(q):
        a = zt[:, j] - zt[:, j].mean()
        b = zp[:, j] - zp[:, j].mean()
        sa, sb = np.sqrt((a**2).sum()), np.sqrt((b**2).sum())
        if sa == 0 or sb == 0:
            warnings.warn(f"zero variance in output {j}; correlation set to 0")
            cc[j] = 0.0
        else:
            cc[j] = (a @ b) / (sa * sb)
    acc = float(cc.mean())

    rrmse_terms = []
    for j in range(q):
        denom = ((zt[:, j] - zt[:, j].mean()) ** 2).sum()
        if denom == 0:
            warnings.warn(f"zero true variance in output {j}; excluded from aRRMSE")
            continue
        rrmse_terms.append(np.sqrt((err[:, j] ** 2).sum() / denom))
    if rrmse_terms:
        arrmse = float(np.mean(rrmse_terms))
    else:
        warnings.warn("aRRMSE undefined for all outputs; reporting 0")
        arrmse = 0.0

    eu_dist = float(np.sqrt((err**2).sum(axis=1)).mean())
    return RegressionReport(amse, armse, acc, arrmse, eu_dist)


def normalize_for_heatmap(values, metric_names, higher_is_better=None) -> np.ndarray:
    """Per-column min-max to [0, 1] with loss columns inverted (1 = best).

    ``values`` is a models x metrics array; a constant column maps to 0.5
    with a warning so it renders as neutral.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[1] != len(metric_names):
        raise InvalidInputError("heatmap table must be models x metrics")
    orientation = dict(HIGHER_IS_BETTER)
    if higher_is_better:
        orientation.update(higher_is_better)
    out = np.empty_like(v)
    for j, name in enumerate(metric_names):
        col = v[:, j]
        finite = col[np.isfinite(col)]
        if finite.size == 0:
            raise InvalidInputError(f"heatmap column {name!r} has no finite values")
        lo, hi = finite.min(), finite.max()
        if hi == lo:
            warnings.warn(f"constant heatmap column {name!r}; mapped to 0.5")
            out[:, j] = 0.5
            continue
        scaled = (col - lo) / (hi - lo)
        if not orientation.get(name, True):
            scaled = 1.0 - scaled
        out[:, j] = scaled
    return out


def classification_loss(metric: str, y_true, y_pred) -> float:
    """Selection loss for a classification metric, oriented lower-is-better."""
    if metric not in CLASSIFICATION_METRICS:
        raise InvalidInputError(f"unknown classification metric {metric!r}")
    value = getattr(classification_report(y_true, y_pred), metric)
    return value if not HIGHER_IS_BETTER[metric] else 1.0 - value


def regression_loss(metric: str, z_true, z_pred) -> float:
    """Selection loss for a regression metric, oriented lower-is-better."""
    if metric not in REGRESSION_METRICS:
        raise InvalidInputError(f"unknown regression metric {metric!r}")
    value = getattr(regression_report(z_true, z_pred), metric)
    return value if not HIGHER_IS_BETTER[metric] else 1.0 - value
