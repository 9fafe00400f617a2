"""Meta-learners over tree base learners, with joint cross-validated search.

Six model kinds share one search engine:

  * ``br``  — one independent binary scorer per label,
  * ``cc``  — sequential chain; each scorer also consumes the binarized
              predictions for earlier labels in a searched order,
  * ``mct`` — single joint multi-output forest for all labels,
  * ``mor`` / ``rc`` / ``mrt`` — the regression mirrors (raw-valued chain
              augmentations, no thresholds).

The search minimizes the mean K-fold loss over hyperparameters, label-wise
thresholds (classification), and chain orders (chains). Label orders are a
permutation of label indices; thresholds are kept in original label order.
Chain training augments with the chain's own predictions on the training
rows, never ground-truth labels, so train- and test-time input
distributions match.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .errors import InvalidInputError
from .data import make_folds
from .metrics import (
    CLASSIFICATION_METRICS,
    REGRESSION_METRICS,
    classification_loss,
    regression_loss,
)
from . import trees
from .trees import Hyperparams

DEFAULT_THRESHOLD_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))

CLASSIFICATION_KINDS = ("br", "cc", "mct")
REGRESSION_KINDS = ("mor", "rc", "mrt")
BASE_FAMILIES = ("forest", "gbt")


@dataclass(frozen=True)
class SearchSpace:
    """Grids for the joint search: hyperparameters, thresholds, orders."""

    theta_grid: tuple[Hyperparams, ...]
    threshold_grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
    per_label_threshold_grids: tuple[tuple[float, ...], ...] | None = None
    threshold_mode: str = "coordinate"  # coordinate | product
    orders: tuple[tuple[int, ...], ...] | None = None  # None: all q! permutations
    max_orders: int | None = None
    n_folds: int = 5
    selection_metric: str | None = None  # defaults: weighted_f1 / armse

    def __post_init__(self):
        if not self.theta_grid:
            raise InvalidInputError("theta grid must be nonempty")
        if not self.threshold_grid:
            raise InvalidInputError("threshold grid must be nonempty")
        for t in self.threshold_grid:
            if not 0.0 <= t <= 1.0:
                raise InvalidInputError("thresholds must lie in [0, 1]")
        if self.threshold_mode not in ("coordinate", "product"):
            raise InvalidInputError("threshold_mode must be coordinate or product")
        if self.n_folds < 2:
            raise InvalidInputError("n_folds must be at least 2")

    def label_grids(self, q: int) -> list[tuple[float, ...]]:
        if self.per_label_threshold_grids is not None:
            if len(self.per_label_threshold_grids) != q:
                raise InvalidInputError("need one threshold grid per label")
            return [tuple(g) for g in self.per_label_threshold_grids]
        return [tuple(self.threshold_grid)] * q


@dataclass(frozen=True)
class Candidate:
    order_index: int
    order: tuple[int, ...] | None
    theta_index: int
    thresholds: tuple[float, ...] | None


@dataclass(frozen=True)
class CvRecord:
    order_index: int
    order: tuple[int, ...] | None
    theta_index: int
    thresholds: tuple[float, ...] | None
    fold_losses: tuple[float, ...]
    mean_loss: float
    disqualified: bool = False


@dataclass
class ChainModel:
    """A fitted meta-learner plus everything the search decided."""

    kind: str
    task: str
    base_family: str
    n_features: int
    label_names: tuple[str, ...]
    params: Hyperparams
    order: tuple[int, ...] | None
    thresholds: np.ndarray | None
    learners: list
    cv_table: list[CvRecord]
    selection_metric: str
    seed: int
    clamp_nonnegative: bool = True

    @property
    def q(self) -> int:
        return len(self.label_names)


def evaluate_candidates(candidates, evaluator) -> list[CvRecord]:
    """Run the fold evaluator for each candidate and record losses.

    Candidates whose losses contain NaN are kept in the table but
    disqualified from selection, with a warning.
    """
    records = []
    for cand in candidates:
        losses = tuple(float(x) for x in evaluator(cand))
        bad = any(np.isnan(x) for x in losses)
        if bad:
            warnings.warn(f"candidate {cand} produced NaN fold loss; disqualified")
        records.append(
            CvRecord(
                order_index=cand.order_index,
                order=cand.order,
                theta_index=cand.theta_index,
                thresholds=cand.thresholds,
                fold_losses=losses,
                mean_loss=float("nan") if bad else float(np.mean(losses)),
                disqualified=bad,
            )
        )
    return records


def select_best(records: list[CvRecord]) -> CvRecord:
    """Argmin of mean CV loss; ties break by order index, then
    hyperparameter grid index, then lexicographically smallest thresholds."""
    eligible = [r for r in records if not r.disqualified]
    if not eligible:
        raise InvalidInputError("all candidate configurations were disqualified")
    return min(
        eligible,
        key=lambda r: (r.mean_loss, r.order_index, r.theta_index, r.thresholds or ()),
    )


def cv_select(candidates, evaluator) -> tuple[CvRecord, list[CvRecord]]:
    """Evaluate a candidate list and return (best record, full CV table)."""
    records = evaluate_candidates(candidates, evaluator)
    return select_best(records), records


# --- base learner adapters ---------------------------------------------------


def _learner_seed(master: int, theta_index: int, fold_index: int, label_index: int) -> int:
    ss = np.random.SeedSequence([int(master), theta_index, fold_index, label_index])
    return int(ss.generate_state(1)[0])


def _fit_single(base, task, X, y, theta, seed):
    if base == "forest":
        return trees.fit_forest(X, y[:, None], theta, seed, task=task)
    if task == "classification":
        return trees.fit_gbt(X, y, theta, seed, loss="logistic")
    return trees.fit_gbt(X, y, theta, seed, loss="squared")


def _predict_single(learner, X) -> np.ndarray:
    if isinstance(learner, trees.ForestModel):
        return trees.predict_forest(learner, X)[:, 0]
    return trees.predict_gbt(learner, X)


def _as_2d(name, a, dtype=float):
    v = np.asarray(getattr(a, "values", a), dtype=dtype)
    if v.ndim != 2 or v.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a nonempty 2-d matrix")
    return v


def _label_names(Y, q):
    labels = getattr(Y, "labels", None) or getattr(Y, "outputs", None)
    if labels is not None:
        return tuple(labels.names)
    return tuple(f"output_{j}" for j in range(q))


# --- threshold candidate machinery -------------------------------------------


def _sweep_vectors(grids, q):
    """Coordinate-sweep vectors: one label varies, others anchored at 0.5."""
    seen = set()
    vectors = []
    for j in range(q):
        for t in grids[j]:
            vec = tuple(0.5 if k != j else float(t) for k in range(q))
            if vec not in seen:
                seen.add(vec)
                vectors.append(vec)
    return vectors


def _combined_vector(records, grids, q):
    """Per-label argmin over the sweep records (ties: smallest threshold)."""
    combined = []
    for j in range(q):
        best = None
        for t in grids[j]:
            vec = tuple(0.5 if k != j else float(t) for k in range(q))
            matches = [r for r in records if r.thresholds == vec and not r.disqualified]
            if not matches:
                continue
            loss = min(m.mean_loss for m in matches)
            if best is None or loss < best[0] or (loss == best[0] and t < best[1]):
                best = (loss, float(t))
        combined.append(best[1] if best is not None else 0.5)
    return tuple(combined)


def _threshold_phases(space: SearchSpace, q: int):
    """Return (phase-1 vectors, needs_phase2) for the configured mode."""
    grids = space.label_grids(q)
    if all(len(g) == 1 for g in grids):
        return [tuple(float(g[0]) for g in grids)], False
    if space.threshold_mode == "product":
        return [tuple(map(float, v)) for v in itertools.product(*grids)], False
    return _sweep_vectors(grids, q), True


# --- shared search driver -----------------------------------------------------


def _enumerate_orders(space: SearchSpace, q: int, seed: int):
    if space.orders is not None:
        orders = [tuple(int(i) for i in o) for o in space.orders]
        for o in orders:
            if sorted(o) != list(range(q)):
                raise InvalidInputError(f"order {o} is not a permutation of 0..{q - 1}")
        if not orders:
            raise InvalidInputError("order set must be nonempty")
        return orders
    orders = list(itertools.permutations(range(q)))
    if space.max_orders is not None and len(orders) > space.max_orders:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E7]))
        pick = rng.choice(len(orders), size=space.max_orders, replace=False)
        orders = [orders[i] for i in sorted(pick)]
    return orders


def _search_classification(X, Y, space, kind, base, seed):
    q = Y.shape[1]
    metric = space.selection_metric or "weighted_f1"
    if metric not in CLASSIFICATION_METRICS:
        raise InvalidInputError(f"unknown selection metric {metric!r}")
    folds = make_folds(range(X.shape[0]), space.n_folds, seed)
    fold_splits = [(folds.train_rows(f), folds.fold_rows(f)) for f in range(space.n_folds)]
    orders = _enumerate_orders(space, q, seed) if kind == "cc" else [None]
    phase1, needs_phase2 = _threshold_phases(space, q)
    grids = space.label_grids(q)

    records: list[CvRecord] = []
    for order_index, order in enumerate(orders):
        for theta_index, theta in enumerate(space.theta_grid):
            if kind in ("br", "mct"):
                # Learners do not depend on thresholds: fit once per fold,
                # then apply every candidate vector to the cached scores.
                cached = []
                for f, (tr, va) in enumerate(fold_splits):
                    scores = _score_unchained(kind, base, X, Y, tr, va, theta,
                                              seed, theta_index, f)
                    cached.append((scores, Y[va]))

                def evaluator(cand):
                    tau = np.array(cand.thresholds)
                    return [
                        classification_loss(metric, yv, (sv >= tau).astype(int))
                        for sv, yv in cached
                    ]

            else:  # cc: chain fits depend on the threshold vector
                def evaluator(cand, _order=order):
                    tau = np.array(cand.thresholds)
                    losses = []
                    for f, (tr, va) in enumerate(fold_splits):
                        learners = _fit_chain_cls(X[tr], Y[tr], _order, theta, tau,
                                                  base, seed, theta_index, f)
                        yhat = _predict_chain_cls(learners, _order, tau, X[va])
                        losses.append(classification_loss(metric, Y[va], yhat))
                    return losses

            cands = [Candidate(order_index, order, theta_index, vec) for vec in phase1]
            recs = evaluate_candidates(cands, evaluator)
            records.extend(recs)
            if needs_phase2:
                combined = _combined_vector(recs, grids, q)
                if all(r.thresholds != combined for r in recs):
                    records.extend(
                        evaluate_candidates(
                            [Candidate(order_index, order, theta_index, combined)],
                            evaluator,
                        )
                    )
    best = select_best(records)
    return best, records, metric


def _score_unchained(kind, base, X, Y, train_rows, val_rows, theta, seed, theta_index, fold):
    """Validation score matrix for the threshold-free model kinds."""
    q = Y.shape[1]
    if kind == "mct":
        learner = trees.fit_forest(
            X[train_rows], Y[train_rows], theta,
            _learner_seed(seed, theta_index, fold, 0), task="classification"
        )
        return trees.predict_forest(learner, X[val_rows])
    scores = np.empty((len(val_rows), q))
    for j in range(q):
        learner = _fit_single(base, "classification", X[train_rows], Y[train_rows, j],
                              theta, _learner_seed(seed, theta_index, fold, j))
        scores[:, j] = _predict_single(learner, X[val_rows])
    return scores


def _fit_chain_cls(Xtr, Ytr, order, theta, tau, base, seed, theta_index, fold):
    """Fit a classifier chain; augmentations are self-predictions binarized
    by the label's threshold, appended in chain order."""
    aug = np.empty((Xtr.shape[0], 0))
    learners = []
    for j in order:
        Xa = np.hstack([Xtr, aug])
        learner = _fit_single(base, "classification", Xa, Ytr[:, j], theta,
                              _learner_seed(seed, theta_index, fold, j))
        bits = (_predict_single(learner, Xa) >= tau[j]).astype(float)
        aug = np.hstack([aug, bits[:, None]])
        learners.append(learner)
    return learners


def _predict_chain_cls(learners, order, tau, X, return_scores=False):
    m, q = X.shape[0], len(order)
    scores = np.empty((m, q))
    bits = np.empty((m, q), dtype=np.int64)
    aug = np.empty((m, 0))
    for pos, j in enumerate(order):
        s = _predict_single(learners[pos], np.hstack([X, aug]))
        scores[:, j] = s
        b = (s >= tau[j]).astype(np.int64)
        bits[:, j] = b
        aug = np.hstack([aug, b[:, None].astype(float)])
    return (bits, scores) if return_scores else bits


def _search_regression(X, Z, space, kind, base, seed, clamp):
    q = Z.shape[1]
    metric = space.selection_metric or "armse"
    if metric not in REGRESSION_METRICS:
        raise InvalidInputError(f"unknown selection metric {metric!r}")
    folds = make_folds(range(X.shape[0]), space.n_folds, seed)
    fold_splits = [(folds.train_rows(f), folds.fold_rows(f)) for f in range(space.n_folds)]
    orders = _enumerate_orders(space, q, seed) if kind == "rc" else [None]

    records: list[CvRecord] = []
    for order_index, order in enumerate(orders):
        for theta_index, theta in enumerate(space.theta_grid):

            def evaluator(cand, _order=order, _theta=theta, _ti=theta_index):
                losses = []
                for f, (tr, va) in enumerate(fold_splits):
                    learners = _fit_regression_learners(kind, base, X[tr], Z[tr],
                                                        _order, _theta, seed, _ti, f)
                    pred = _predict_regression_learners(kind, learners, _order, X[va], q)
                    if clamp:
                        pred = np.maximum(pred, 0.0)
                    losses.append(regression_loss(metric, Z[va], pred))
                return losses

            records.extend(
                evaluate_candidates([Candidate(order_index, order, theta_index, None)], evaluator)
            )
    best = select_best(records)
    return best, records, metric


def _fit_regression_learners(kind, base, Xtr, Ztr, order, theta, seed, theta_index, fold):
    q = Ztr.shape[1]
    if kind == "mrt":
        return [trees.fit_forest(Xtr, Ztr, theta, _learner_seed(seed, theta_index, fold, 0),
                                 task="regression")]
    if kind == "mor":
        return [
            _fit_single(base, "regression", Xtr, Ztr[:, j], theta,
                        _learner_seed(seed, theta_index, fold, j))
            for j in range(q)
        ]
    # rc: raw (unclamped) self-predictions as chain augmentations
    aug = np.empty((Xtr.shape[0], 0))
    learners = []
    for j in order:
        Xa = np.hstack([Xtr, aug])
        learner = _fit_single(base, "regression", Xa, Ztr[:, j], theta,
                              _learner_seed(seed, theta_index, fold, j))
        aug = np.hstack([aug, _predict_single(learner, Xa)[:, None]])
        learners.append(learner)
    return learners


def _predict_regression_learners(kind, learners, order, X, q):
    if kind == "mrt":
        return trees.predict_forest(learners[0], X)
    if kind == "mor":
        out = np.empty((X.shape[0], q))
        for j in range(q):
            out[:, j] = _predict_single(learners[j], X)
        return out
    out = np.empty((X.shape[0], q))
    aug = np.empty((X.shape[0], 0))
    for pos, j in enumerate(order):
        pred = _predict_single(learners[pos], np.hstack([X, aug]))
        out[:, j] = pred
        aug = np.hstack([aug, pred[:, None]])
    return out


# --- public fit/predict API ---------------------------------------------------


def _fit_classification(X, Y, space, kind, base, seed):
    Xv = _as_2d("X", X)
    Yv = _as_2d("Y", Y, dtype=np.int64)
    if not np.isin(Yv, (0, 1)).all():
        raise InvalidInputError("label matrix must be binary")
    if Xv.shape[0] != Yv.shape[0]:
        raise InvalidInputError("X and Y row counts differ")
    if base not in BASE_FAMILIES:
        raise InvalidInputError(f"base family must be one of {BASE_FAMILIES}")
    q = Yv.shape[1]
    best, records, metric = _search_classification(Xv, Yv, space, kind, base, seed)
    theta = space.theta_grid[best.theta_index]
    tau = np.array(best.thresholds)
    refit_fold = space.n_folds  # distinct from CV fold indices
    if kind == "br":
        learners = [
            _fit_single(base, "classification", Xv, Yv[:, j], theta,
                        _learner_seed(seed, best.theta_index, refit_fold, j))
            for j in range(q)
        ]
    elif kind == "mct":
        learners = [
            trees.fit_forest(Xv, Yv, theta,
                             _learner_seed(seed, best.theta_index, refit_fold, 0),
                             task="classification")
        ]
    else:
        learners = _fit_chain_cls(Xv, Yv, best.order, theta, tau, base, seed,
                                  best.theta_index, refit_fold)
    return ChainModel(
        kind=kind,
        task="classification",
        base_family=base if kind != "mct" else "forest",
        n_features=Xv.shape[1],
        label_names=_label_names(Y, q),
        params=theta,
        order=best.order,
        thresholds=tau,
        learners=learners,
        cv_table=records,
        selection_metric=metric,
        seed=seed,
    )


def fit_br(X, Y, space: SearchSpace, base: str = "forest", seed: int = 0) -> ChainModel:
    """Independent per-label scorers with joint (theta, tau) search."""
    return _fit_classification(X, Y, space, "br", base, seed)


def fit_cc(X, Y, space: SearchSpace, base: str = "forest", seed: int = 0) -> ChainModel:
    """Classifier chain with joint (sigma, theta, tau) search."""
    return _fit_classification(X, Y, space, "cc", base, seed)


def fit_mct(X, Y, space: SearchSpace, seed: int = 0) -> ChainModel:
    """Single joint multi-label forest with (theta, tau) search."""
    return _fit_classification(X, Y, space, "mct", "forest", seed)


def _fit_regression(X, Z, space, kind, base, seed, clamp):
    Xv = _as_2d("X", X)
    Zv = _as_2d("Z", Z)
    if (Zv < 0).any():
        raise InvalidInputError("count targets must be nonnegative")
    if Xv.shape[0] != Zv.shape[0]:
        raise InvalidInputError("X and Z row counts differ")
    if base not in BASE_FAMILIES:
        raise InvalidInputError(f"base family must be one of {BASE_FAMILIES}")
    q = Zv.shape[1]
    best, records, metric = _search_regression(Xv, Zv, space, kind, base, seed, clamp)
    theta = space.theta_grid[best.theta_index]
    learners = _fit_regression_learners(kind, base, Xv, Zv, best.order, theta,
                                        seed, best.theta_index, space.n_folds)
    return ChainModel(
        kind=kind,
        task="regression",
        base_family=base if kind != "mrt" else "forest",
        n_features=Xv.shape[1],
        label_names=_label_names(Z, q),
        params=theta,
        order=best.order,
        thresholds=None,
        learners=learners,
        cv_table=records,
        selection_metric=metric,
        seed=seed,
        clamp_nonnegative=clamp,
    )


def fit_mor(X, Z, space: SearchSpace, base: str = "forest", seed: int = 0,
            clamp: bool = True) -> ChainModel:
    """Independent per-output regressors with theta search."""
    return _fit_regression(X, Z, space, "mor", base, seed, clamp)


def fit_rc(X, Z, space: SearchSpace, base: str = "forest", seed: int = 0,
           clamp: bool = True) -> ChainModel:
    """Regressor chain with joint (sigma, theta) search."""
    return _fit_regression(X, Z, space, "rc", base, seed, clamp)


def fit_mrt(X, Z, space: SearchSpace, seed: int = 0, clamp: bool = True) -> ChainModel:
    """Single joint multi-output forest with theta search."""
    return _fit_regression(X, Z, space, "mrt", "forest", seed, clamp)


def _check_width(model: ChainModel, X) -> np.ndarray:
    Xv = _as_2d("X", X)
    if Xv.shape[1] != model.n_features:
        raise InvalidInputError(
            f"model expects {model.n_features} feature columns, got {Xv.shape[1]}"
        )
    return Xv


def predict_scores(model: ChainModel, X) -> np.ndarray:
    """Raw per-label scores in original label order (classification kinds)."""
    if model.task != "classification":
        raise InvalidInputError("predict_scores applies to classification models")
    Xv = _check_width(model, X)
    if model.kind == "mct":
        return trees.predict_forest(model.learners[0], Xv)
    if model.kind == "br":
        scores = np.empty((Xv.shape[0], model.q))
        for j in range(model.q):
            scores[:, j] = _predict_single(model.learners[j], Xv)
        return scores
    _, scores = _predict_chain_cls(model.learners, model.order, model.thresholds,
                                   Xv, return_scores=True)
    return scores


def predict_labels(model: ChainModel, X) -> np.ndarray:
    """Binary predictions: score >= threshold, per label (inclusive)."""
    if model.task != "classification":
        raise InvalidInputError("predict_labels applies to classification models")
    Xv = _check_width(model, X)
    if model.kind == "cc":
        return _predict_chain_cls(model.learners, model.order, model.thresholds, Xv)
    scores = predict_scores(model, Xv)
    return (scores >= model.thresholds).astype(np.int64)


def predict_regression(model: ChainModel, X, clamp: bool | None = None) -> np.ndarray:
    """Real-valued count predictions; clamped at zero unless disabled."""
    if model.task != "regression":
        raise InvalidInputError("predict_regression applies to regression models")
    Xv = _check_width(model, X)
    pred = _predict_regression_learners(model.kind, model.learners, model.order, Xv, model.q)
    do_clamp = model.clamp_nonnegative if clamp is None else clamp
    return np.maximum(pred, 0.0) if do_clamp else pred


def predict(model: ChainModel, X) -> np.ndarray:
    return predict_labels(model, X) if model.task == "classification" else predict_regression(model, X)


# --- serialization ------------------------------------------------------------


def chain_to_json(model: ChainModel) -> dict:
    def dump(learner):
        if isinstance(learner, trees.ForestModel):
            return trees.forest_to_json(learner)
        return trees.gbt_to_json(learner)

    def finite(x):
        # strict JSON: disqualified records carry null instead of NaN
        return float(x) if np.isfinite(x) else None

    def record(r):
        d = asdict(r)
        d["fold_losses"] = [finite(v) for v in r.fold_losses]
        d["mean_loss"] = finite(r.mean_loss)
        return d

    return {
        "format": trees.MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "task": model.task,
        "base_family": model.base_family,
        "n_features": model.n_features,
        "label_names": list(model.label_names),
        "params": asdict(model.params),
        "order": list(model.order) if model.order is not None else None,
        "thresholds": [float(t) for t in model.thresholds] if model.thresholds is not None else None,
        "selection_metric": model.selection_metric,
        "seed": model.seed,
        "clamp_nonnegative": model.clamp_nonnegative,
        "cv_table": [record(r) for r in model.cv_table],
        "learners": [dump(l) for l in model.learners],
    }


def chain_from_json(payload: dict) -> ChainModel:
    if payload.get("format") != trees.MODEL_FORMAT_VERSION:
        raise InvalidInputError("unsupported chain model payload")

    def load(p):
        return trees.forest_from_json(p) if p["model"] == "forest" else trees.gbt_from_json(p)

    def record(r):
        def restore(x):
            return float("nan") if x is None else x

        return CvRecord(
            order_index=r["order_index"],
            order=tuple(r["order"]) if r["order"] is not None else None,
            theta_index=r["theta_index"],
            thresholds=tuple(r["thresholds"]) if r["thresholds"] is not None else None,
            fold_losses=tuple(restore(v) for v in r["fold_losses"]),
            mean_loss=restore(r["mean_loss"]),
            disqualified=r["disqualified"],
        )

    return ChainModel(
        kind=payload["kind"],
        task=payload["task"],
        base_family=payload["base_family"],
        n_features=payload["n_features"],
        label_names=tuple(payload["label_names"]),
        params=Hyperparams(**payload["params"]),
        order=tuple(payload["order"]) if payload["order"] is not None else None,
        thresholds=np.array(payload["thresholds"]) if payload["thresholds"] is not None else None,
        learners=[load(p) for p in payload["learners"]],
        cv_table=[record(r) for r in payload["cv_table"]],
        selection_metric=payload["selection_metric"],
        seed=payload["seed"],
        clamp_nonnegative=payload["clamp_nonnegative"],
    )
