"""Batch experiment protocol: ingest -> split -> train -> evaluate ->
importance -> report, with one artifact directory per configuration hash.

Metric CSVs use canonical float formatting, and none of the comparison
artifacts embed timestamps, so identical (config, seed) runs re-create
byte-identical files. Test labels are read only by the evaluate step.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import __version__
from .chains import (
    DEFAULT_THRESHOLD_GRID,
    SearchSpace,
    chain_from_json,
    chain_to_json,
    fit_br,
    fit_cc,
    fit_mct,
    fit_mor,
    fit_mrt,
    fit_rc,
    predict_labels,
    predict_regression,
)
from .data import CountMatrix, FeatureMatrix, LabelSet, derive_labels, make_split
from .errors import InvalidInputError, SchemaError
from .importance import (
    aggregate_cross_model,
    mdi_importance,
    ImportanceTable,
    permutation_importance,
    shap_global_importance,
    top_k_features,
)
from .ingest import (
    CategoryMap,
    ImputePolicy,
    IncidentSchema,
    aggregate_firm_year,
    dedupe,
    impute_and_encode,
    join_features,
    label_records,
    parse_incidents,
    project_columns,
    read_feature_table,
    write_rejects,
)
from .metrics import (
    CLASSIFICATION_METRICS,
    HIGHER_IS_BETTER,
    REGRESSION_METRICS,
    classification_report,
    normalize_for_heatmap,
    regression_report,
)
from .trees import Hyperparams

CONFIG_SCHEMA_VERSION = 1

# D2 runs the full roster; D1 keeps the three dependency-free
# representatives per task.
DEFAULT_ROSTER = (
    {"id": "br_forest", "kind": "br", "base": "forest", "datasets": ("d1", "d2")},
    {"id": "br_gbt", "kind": "br", "base": "gbt", "datasets": ("d1", "d2")},
    {"id": "cc_forest", "kind": "cc", "base": "forest", "datasets": ("d2",)},
    {"id": "cc_gbt", "kind": "cc", "base": "gbt", "datasets": ("d2",)},
    {"id": "mct_forest", "kind": "mct", "base": "forest", "datasets": ("d1", "d2")},
    {"id": "mor_forest", "kind": "mor", "base": "forest", "datasets": ("d1", "d2")},
    {"id": "mor_gbt", "kind": "mor", "base": "gbt", "datasets": ("d1", "d2")},
    {"id": "rc_forest", "kind": "rc", "base": "forest", "datasets": ("d2",)},
    {"id": "rc_gbt", "kind": "rc", "base": "gbt", "datasets": ("d2",)},
    {"id": "mrt_forest", "kind": "mrt", "base": "forest", "datasets": ("d1", "d2")},
)

CLASSIFICATION_KINDS = ("br", "cc", "mct")


@dataclass(frozen=True)
class ExperimentConfig:
    incidents_csv: str
    features_csv: str
    category_map: dict
    d1_columns: tuple[str, ...]
    labels: tuple[str, ...] = tuple(LabelSet().names)
    year_feature: bool = True
    year_range: tuple[int, int] = (1900, 2100)
    imputation: str = "median"
    split_ratio: float = 0.8
    seed: int = 7
    folds: int = 5
    threshold_grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
    threshold_mode: str = "coordinate"
    max_orders: int | None = None
    selection_metric_classification: str = "weighted_f1"
    selection_metric_regression: str = "armse"
    theta_grid: tuple[dict, ...] = ({},)  # empty dict: Hyperparams defaults
    roster: tuple[dict, ...] = DEFAULT_ROSTER
    clamp_nonnegative: bool = True
    top_k: int = 20
    permutation_repeats: int = 5
    shap_rows: int = 100
    importance_normalization: str = "model"  # model | feature

    def __post_init__(self):
        ids = [entry["id"] for entry in self.roster]
        if len(set(ids)) != len(ids):
            raise SchemaError("roster model ids must be unique")
        for entry in self.roster:
            if entry["kind"] not in CLASSIFICATION_KINDS + ("mor", "rc", "mrt"):
                raise SchemaError(f"unknown model kind {entry['kind']!r}")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = CONFIG_SCHEMA_VERSION
        return d

    def search_space(self, task: str) -> SearchSpace:
        metric = (
            self.selection_metric_classification
            if task == "classification"
            else self.selection_metric_regression
        )
        return SearchSpace(
            theta_grid=tuple(Hyperparams(**t) for t in self.theta_grid),
            threshold_grid=tuple(self.threshold_grid),
            threshold_mode=self.threshold_mode,
            max_orders=self.max_orders,
            n_folds=self.folds,
            selection_metric=metric,
        )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}")
    if raw.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise SchemaError(f"config schema_version must be {CONFIG_SCHEMA_VERSION}")
    raw = dict(raw)
    raw.pop("schema_version")
    if seed_override is not None:
        raw["seed"] = seed_override
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}")
    for key in ("d1_columns", "labels", "threshold_grid", "theta_grid", "roster"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(
                tuple(v) if isinstance(v, list) else v for v in raw[key]
            )
    for key in ("year_range",):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise SchemaError(f"bad config: {exc}")


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(config.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def run_dir_for(config: ExperimentConfig, out_root) -> Path:
    return Path(out_root) / f"run_{config_hash(config)}"


# --- artifact helpers --------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    _atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def _write_keyed_matrix(path: Path, col_names, row_keys, values, integral=False) -> None:
    header = ["company_id", "year", *col_names]
    rows = []
    for (cid, year), row in zip(row_keys, values):
        cells = [str(int(v)) if integral else _fmt(v) for v in row]
        rows.append([cid, str(year), *cells])
    _write_csv(path, header, rows)


def _read_keyed_matrix(path: Path, integral=False):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        col_names = tuple(header[2:])
        keys, rows = [], []
        for row in reader:
            keys.append((row[0], int(row[1])))
            rows.append([int(v) if integral else float(v) for v in row[2:]])
    dtype = np.int64 if integral else float
    return col_names, tuple(keys), np.array(rows, dtype=dtype)


# --- ingest ------------------------------------------------------------------


def run_ingest(config: ExperimentConfig, run_dir: Path) -> dict:
    for path in (config.incidents_csv, config.features_csv):
        if not Path(path).exists():
            raise SchemaError(f"input file not found: {path}")
    labels = LabelSet(tuple(config.labels))
    cmap = CategoryMap(entries=dict(config.category_map), labels=labels)
    parsed = parse_incidents(config.incidents_csv, IncidentSchema(),
                             year_range=tuple(config.year_range))
    records = dedupe(label_records(parsed.records, cmap))
    counts = aggregate_firm_year(records, labels)
    table = read_feature_table(config.features_csv)
    features, emap = impute_and_encode(table, ImputePolicy(config.imputation))
    X, Z = join_features(counts, features, year_feature=config.year_feature)
    Y = derive_labels(Z)
    d1 = project_columns(X, emap, config.d1_columns)
    if not set(d1.col_names) < set(X.col_names):
        raise InvalidInputError("D1 columns must be a strict subset of D2 columns")

    dataset_dir = run_dir / "dataset"
    _write_keyed_matrix(dataset_dir / "features.csv", X.col_names, X.row_keys, X.values)
    _write_keyed_matrix(dataset_dir / "counts.csv", Z.outputs.names, Z.row_keys,
                        Z.values, integral=True)
    _write_keyed_matrix(dataset_dir / "labels.csv", Y.labels.names, Y.row_keys,
                        Y.values, integral=True)
    write_rejects(dataset_dir / "rejects.jsonl", parsed.rejects)
    _write_json(dataset_dir / "encoding_map.json", emap)
    _write_json(dataset_dir / "d1_columns.json", list(d1.col_names))
    _write_json(run_dir / "config.json", config.as_dict())
    manifest = {
        "config_hash": config_hash(config),
        "version": __version__,
        "parsed_records": len(parsed.records),
        "rejected_rows": len(parsed.rejects),
        "post_dedupe_records": len(records),
        "firm_year_rows": counts.m,
        "joined_rows": X.m,
        "d2_columns": X.d,
        "d1_columns": d1.d,
        "artifacts": sorted(
            str(p.relative_to(run_dir))
            for p in dataset_dir.iterdir()
            if p.name != "ingest_manifest.json"
        ),
    }
    _write_json(dataset_dir / "ingest_manifest.json", manifest)
    return manifest


def _load_dataset(run_dir: Path):
    dataset_dir = run_dir / "dataset"
    if not (dataset_dir / "features.csv").exists():
        raise SchemaError(f"no ingested dataset under {run_dir}; run ingest first")
    col_names, keys, x_values = _read_keyed_matrix(dataset_dir / "features.csv")
    z_names, _, z_values = _read_keyed_matrix(dataset_dir / "counts.csv", integral=True)
    labels = LabelSet(tuple(z_names))
    X = FeatureMatrix(values=x_values, col_names=col_names, row_keys=keys)
    Z = CountMatrix(values=z_values, outputs=labels, row_keys=keys)
    Y = derive_labels(Z)
    d1_cols = tuple(json.loads((dataset_dir / "d1_columns.json").read_text()))
    return X, Y, Z, d1_cols


# --- split -------------------------------------------------------------------


def run_split(config: ExperimentConfig, run_dir: Path) -> dict:
    X, _, _, _ = _load_dataset(run_dir)
    split = make_split(X.m, config.split_ratio, config.seed)
    payload = {
        "ratio": config.split_ratio,
        "seed": split.seed,
        "train_rows": list(split.train_rows),
        "test_rows": list(split.test_rows),
    }
    _write_json(run_dir / "split.json", payload)
    return payload


def _load_split(run_dir: Path):
    path = run_dir / "split.json"
    if not path.exists():
        raise SchemaError(f"no split.json under {run_dir}; run split first")
    payload = json.loads(path.read_text())
    return np.array(payload["train_rows"]), np.array(payload["test_rows"])


# --- train -------------------------------------------------------------------


def _model_seed(master: int, model_id: str, dataset: str) -> int:
    tag = zlib.crc32(f"{model_id}:{dataset}".encode())
    return int(np.random.SeedSequence([int(master), tag]).generate_state(1)[0])


def _dataset_views(X: FeatureMatrix, d1_cols):
    keep = [i for i, c in enumerate(X.col_names) if c in set(d1_cols)]
    return {
        "d1": (X.values[:, keep], tuple(X.col_names[i] for i in keep)),
        "d2": (X.values, X.col_names),
    }


def _train_one(task) -> dict:
    (model_id, dataset, kind, base, x_train, y_train, z_train,
     label_names, space, clamp, seed) = task
    started = time.perf_counter()
    if kind == "br":
        model = fit_br(x_train, y_train, space, base=base, seed=seed)
    elif kind == "cc":
        model = fit_cc(x_train, y_train, space, base=base, seed=seed)
    elif kind == "mct":
        model = fit_mct(x_train, y_train, space, seed=seed)
    elif kind == "mor":
        model = fit_mor(x_train, z_train, space, base=base, seed=seed, clamp=clamp)
    elif kind == "rc":
        model = fit_rc(x_train, z_train, space, base=base, seed=seed, clamp=clamp)
    else:
        model = fit_mrt(x_train, z_train, space, seed=seed, clamp=clamp)
    model.label_names = tuple(label_names)
    payload = chain_to_json(model)
    return {
        "model_id": model_id,
        "dataset": dataset,
        "seconds": time.perf_counter() - started,
        "payload": payload,
    }


def run_train(config: ExperimentConfig, run_dir: Path, jobs: int = 1) -> dict:
    X, Y, Z, d1_cols = _load_dataset(run_dir)
    train_rows, _ = _load_split(run_dir)
    views = _dataset_views(X, d1_cols)
    tasks = []
    for entry in sorted(config.roster, key=lambda e: e["id"]):
        kind = entry["kind"]
        task_type = "classification" if kind in CLASSIFICATION_KINDS else "regression"
        space = config.search_space(task_type)
        for dataset in entry["datasets"]:
            x_view, _ = views[dataset]
            tasks.append(
                (
                    entry["id"], dataset, kind, entry.get("base", "forest"),
                    x_view[train_rows],
                    Y.values[train_rows] if task_type == "classification" else None,
                    Z.values[train_rows] if task_type == "regression" else None,
                    Y.labels.names, space, config.clamp_nonnegative,
                    _model_seed(config.seed, entry["id"], dataset),
                )
            )

    results, failures = [], []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(t, pool.submit(_train_one, t)) for t in tasks]
            for t, fut in futures:
                try:
                    results.append(fut.result())
                except InvalidInputError as exc:
                    failures.append({"model_id": t[0], "dataset": t[1], "reason": str(exc)})
    else:
        for t in tasks:
            try:
                results.append(_train_one(t))
            except InvalidInputError as exc:
                failures.append({"model_id": t[0], "dataset": t[1], "reason": str(exc)})

    models_dir = run_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    for res in sorted(results, key=lambda r: (r["model_id"], r["dataset"])):
        stem = f"{res['model_id']}__{res['dataset']}"
        _write_json(models_dir / f"{stem}.json", res["payload"])
        _write_json(models_dir / f"{stem}.cv.json", res["payload"]["cv_table"])
        timings[stem] = res["seconds"]
    manifest = {
        "config_hash": config_hash(config),
        "version": __version__,
        "model_seconds": timings,
        "aborted": sorted(failures, key=lambda f: (f["model_id"], f["dataset"])),
        "artifacts": sorted(str(p.relative_to(run_dir)) for p in models_dir.iterdir()),
    }
    _write_json(run_dir / "train_manifest.json", manifest)
    return manifest


def _iter_model_files(config: ExperimentConfig, run_dir: Path):
    """Yield (model_id, dataset, path-or-None) over the configured roster."""
    for entry in sorted(config.roster, key=lambda e: e["id"]):
        for dataset in entry["datasets"]:
            path = run_dir / "models" / f"{entry['id']}__{dataset}.json"
            yield entry["id"], dataset, entry, (path if path.exists() else None)


# --- evaluate ----------------------------------------------------------------


def run_evaluate(config: ExperimentConfig, run_dir: Path) -> dict:
    X, Y, Z, d1_cols = _load_dataset(run_dir)
    train_rows, test_rows = _load_split(run_dir)
    views = _dataset_views(X, d1_cols)
    reports_dir = run_dir / "reports"

    cls_rows, reg_rows, absent = [], [], []
    heat: dict[tuple, list] = {}
    for model_id, dataset, entry, path in _iter_model_files(config, run_dir):
        if path is None:
            absent.append(f"{model_id}__{dataset}")
            continue
        model = chain_from_json(json.loads(path.read_text()))
        x_view, _ = views[dataset]
        for split_name, rows in (("train", train_rows), ("test", test_rows)):
            if model.task == "classification":
                rep = classification_report(Y.values[rows],
                                            predict_labels(model, x_view[rows]))
                cls_rows.append((model_id, dataset, split_name, rep.as_dict()))
                heat.setdefault(("classification", split_name), []).append(
                    (f"{dataset}/{model_id}", rep.as_dict())
                )
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rep = regression_report(Z.values[rows],
                                            predict_regression(model, x_view[rows]))
                reg_rows.append((model_id, dataset, split_name, rep.as_dict()))
                heat.setdefault(("regression", split_name), []).append(
                    (f"{dataset}/{model_id}", rep.as_dict())
                )

    _write_csv(
        reports_dir / "metrics_classification.csv",
        ["model_id", "dataset", "split", *CLASSIFICATION_METRICS],
        [
            [mid, ds, sp, *(_fmt(rep[m]) for m in CLASSIFICATION_METRICS)]
            for mid, ds, sp, rep in sorted(cls_rows)
        ],
    )
    _write_csv(
        reports_dir / "metrics_regression.csv",
        ["model_id", "dataset", "split", *REGRESSION_METRICS],
        [
            [mid, ds, sp, *(_fmt(rep[m]) for m in REGRESSION_METRICS)]
            for mid, ds, sp, rep in sorted(reg_rows)
        ],
    )
    _write_json(
        reports_dir / "metrics.json",
        {
            "classification": [
                {"model_id": mid, "dataset": ds, "split": sp,
                 **{k: float(_fmt(v)) for k, v in rep.items()}}
                for mid, ds, sp, rep in sorted(cls_rows)
            ],
            "regression": [
                {"model_id": mid, "dataset": ds, "split": sp,
                 **{k: float(_fmt(v)) for k, v in rep.items()}}
                for mid, ds, sp, rep in sorted(reg_rows)
            ],
        },
    )

    for (task, split_name), entries in sorted(heat.items()):
        metric_names = CLASSIFICATION_METRICS if task == "classification" else REGRESSION_METRICS
        entries = sorted(entries)
        values = np.array([[rep[m] for m in metric_names] for _, rep in entries])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            normalized = normalize_for_heatmap(values, metric_names)
        payload = {
            "task": task,
            "split": split_name,
            "rows": [name for name, _ in entries],
            "columns": list(metric_names),
            "orientation": {
                m: ("higher" if HIGHER_IS_BETTER[m] else "lower") for m in metric_names
            },
            "values": [[float(_fmt(v)) for v in row] for row in values],
            "normalized": [[float(_fmt(v)) for v in row] for row in normalized],
        }
        _write_json(reports_dir / f"heatmap_{task}_{split_name}.json", payload)

    manifest = {
        "config_hash": config_hash(config),
        "version": __version__,
        "absent_models": sorted(absent),
        "artifacts": sorted(
            str(p.relative_to(run_dir))
            for p in reports_dir.iterdir()
            if p.name != "evaluate_manifest.json"
        ),
    }
    _write_json(reports_dir / "evaluate_manifest.json", manifest)
    return manifest


# --- importance ---------------------------------------------------------------


def _mdi_for_chain(model, feature_names, model_id) -> ImportanceTable:
    """Average the per-learner normalized MDI restricted to the original
    feature space (chain augmentation columns carry no reportable mass)."""
    d = model.n_features
    per = []
    for learner in model.learners:
        table = mdi_importance(learner)
        per.append(table.scores[:d])
    scores = np.mean(per, axis=0)
    total = scores.sum()
    if total > 0:
        scores = scores / total
    return ImportanceTable(model_id, "impurity", tuple(feature_names), scores,
                           normalized=True)


def run_importance(config: ExperimentConfig, run_dir: Path) -> dict:
    X, Y, Z, d1_cols = _load_dataset(run_dir)
    train_rows, _ = _load_split(run_dir)
    views = _dataset_views(X, d1_cols)
    imp_dir = run_dir / "importance"

    table_rows = []
    skipped = []
    by_task_technique: dict[tuple, list[ImportanceTable]] = {}
    for model_id, dataset, entry, path in _iter_model_files(config, run_dir):
        if path is None:
            skipped.append({"model": f"{model_id}__{dataset}", "reason": "artifact missing"})
            continue
        model = chain_from_json(json.loads(path.read_text()))
        x_view, col_names = views[dataset]
        x_train = x_view[train_rows]
        truth = Y.values[train_rows] if model.task == "classification" else Z.values[train_rows]
        shap_cap = min(config.shap_rows, x_train.shape[0])
        tag = f"{dataset}/{model_id}"
        techniques = {
            "impurity": lambda: _mdi_for_chain(model, col_names, tag),
            "permutation": lambda: permutation_importance(
                model, x_train, truth, repeats=config.permutation_repeats,
                seed=config.seed, feature_names=col_names, model_id=tag),
            "shap": lambda: shap_global_importance(
                model, x_train[:shap_cap], feature_names=col_names, model_id=tag),
        }
        for technique, compute in techniques.items():
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    table = compute()
            except InvalidInputError as exc:
                skipped.append({"model": tag, "technique": technique, "reason": str(exc)})
                continue
            for f, score in zip(table.feature_names, table.scores):
                table_rows.append((tag, technique, f, score))
            k = min(config.top_k, len(table.feature_names))
            top = top_k_features(table, k)
            _write_csv(
                imp_dir / f"top{k}_{model_id}__{dataset}__{technique}.csv",
                ["rank", "feature", "score"],
                [[str(r + 1), table.feature_names[i], _fmt(table.scores[i])]
                 for r, i in enumerate(top)],
            )
            # cross-model aggregation is per task over D2 models (shared space)
            if dataset == "d2":
                by_task_technique.setdefault((model.task, technique), []).append(table)

    _write_csv(
        imp_dir / "tables.csv",
        ["feature", "model", "technique", "score"],
        [[f, m, t, _fmt(s)] for m, t, f, s in sorted(table_rows)],
    )

    for (task, technique), tables in sorted(by_task_technique.items()):
        k = min(config.top_k, len(tables[0].feature_names))
        log_scores, counts = aggregate_cross_model(tables, k=k)
        model_names = [t.model_id for t in tables]
        features = tables[0].feature_names
        _write_csv(
            imp_dir / f"log_scores_{task}_{technique}.csv",
            ["feature", *model_names],
            [[features[i], *(_fmt(v) for v in log_scores[:, i])]
             for i in range(len(features))],
        )
        # display normalization: min-max within each model (default) or
        # within each feature
        axis = 1 if config.importance_normalization == "model" else 0
        lo = log_scores.min(axis=axis, keepdims=True)
        hi = log_scores.max(axis=axis, keepdims=True)
        span = np.where(hi > lo, hi - lo, 1.0)
        normed = np.where(hi > lo, (log_scores - lo) / span, 0.5)
        _write_csv(
            imp_dir / f"log_scores_{task}_{technique}_normalized.csv",
            ["feature", *model_names],
            [[features[i], *(_fmt(v) for v in normed[:, i])]
             for i in range(len(features))],
        )
        _write_csv(
            imp_dir / f"top_feature_counts_{task}_{technique}.csv",
            ["feature", "count"],
            [[features[i], str(int(counts[i]))]
             for i in np.argsort(-counts, kind="stable") if counts[i] > 0],
        )

    manifest = {
        "config_hash": config_hash(config),
        "version": __version__,
        "skipped": skipped,
        "artifacts": sorted(
            str(p.relative_to(run_dir))
            for p in imp_dir.iterdir()
            if p.name != "importance_manifest.json"
        ),
    }
    _write_json(imp_dir / "importance_manifest.json", manifest)
    return manifest


# --- report -------------------------------------------------------------------


def _render_heatmap_svg(payload: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = np.array(payload["values"])
    normalized = np.array(payload["normalized"])
    fig, ax = plt.subplots(
        figsize=(1.6 * len(payload["columns"]) + 2, 0.5 * len(payload["rows"]) + 2)
    )
    ax.imshow(normalized, cmap="RdBu", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(payload["columns"])), payload["columns"], rotation=30, ha="right")
    ax.set_yticks(range(len(payload["rows"])), payload["rows"])
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            ax.text(j, i, format(values[i, j], ".4g"), ha="center", va="center", fontsize=8)
    ax.set_title(f"{payload['task']} metrics ({payload['split']})")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def run_report(config: ExperimentConfig, run_dir: Path, render_svg: bool = True) -> dict:
    reports_dir = run_dir / "reports"
    rendered = []
    if render_svg:
        for heatmap_path in sorted(reports_dir.glob("heatmap_*.json")):
            payload = json.loads(heatmap_path.read_text())
            svg_path = heatmap_path.with_suffix(".svg")
            _render_heatmap_svg(payload, svg_path)
            rendered.append(str(svg_path.relative_to(run_dir)))
    summary = {
        "config_hash": config_hash(config),
        "version": __version__,
        "run_dir": str(run_dir),
        "rendered": rendered,
        "manifests": {
            name: str(p.relative_to(run_dir))
            for name, p in (
                ("ingest", run_dir / "dataset" / "ingest_manifest.json"),
                ("train", run_dir / "train_manifest.json"),
                ("evaluate", reports_dir / "evaluate_manifest.json"),
                ("importance", run_dir / "importance" / "importance_manifest.json"),
            )
            if p.exists()
        },
    }
    _write_json(run_dir / "report_summary.json", summary)
    return summary
