"""Raw-data assembly: incident parsing, category mapping, deduplication,
firm-year aggregation, feature imputation/encoding, and the feature join.

Incident CSVs carry COMPANY_ID, CASE_TYPE_LG, ACCIDENT_YEAR (and optionally
a full DATE); the feature CSV carries COMPANY_ID plus named feature columns.
Rows that cannot be keyed (missing company or year) are dropped and reported,
never fatal.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import CountMatrix, FeatureMatrix, LabelSet
from .errors import EmptyDatasetError, InvalidInputError, SchemaError

OTHER_LABEL = "Other"
MISSING_MARKERS = {"", "na", "n/a", "nan", "null", "none", "missing"}
UNKNOWN_LEVEL = "__unknown__"
YEAR_COLUMN = "ACCIDENT_YEAR"


@dataclass(frozen=True)
class IncidentRecord:
    """One raw incident; month/day are None when only the year is known."""

    company_id: str
    case_type: str
    year: int
    month: int | None = None
    day: int | None = None
    label: str | None = None

    @property
    def date_key(self) -> tuple:
        return (self.year, self.month, self.day)


@dataclass(frozen=True)
class IncidentSchema:
    company_id: str = "COMPANY_ID"
    case_type: str = "CASE_TYPE_LG"
    year: str = YEAR_COLUMN
    date: str | None = "DATE"  # optional column; ISO yyyy-mm-dd when present


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    row: tuple


@dataclass(frozen=True)
class ParseResult:
    records: list[IncidentRecord]
    rejects: list[Reject]


@dataclass(frozen=True)
class CategoryMap:
    """Total map from source category strings to the five label names.

    Lookup is case-insensitive on stripped keys; anything unmapped routes to
    ``Other``.
    """

    entries: dict[str, str]
    labels: LabelSet = field(default_factory=LabelSet)

    def __post_init__(self):
        if OTHER_LABEL not in self.labels.names:
            raise InvalidInputError(f"label set must contain {OTHER_LABEL!r}")
        folded = {}
        for raw, label in self.entries.items():
            if label not in self.labels.names:
                raise InvalidInputError(f"category {raw!r} maps to unknown label {label!r}")
            folded[raw.strip().casefold()] = label
        object.__setattr__(self, "entries", folded)


def map_category(raw: str, category_map: CategoryMap) -> str:
    return category_map.entries.get(str(raw).strip().casefold(), OTHER_LABEL)


def _open_source(source):
    if hasattr(source, "read"):
        return source
    # utf-8-sig: tolerate a BOM, common in exported spreadsheets
    return open(source, "r", encoding="utf-8-sig", newline="")


def _parse_year(text):
    try:
        return int(str(text).strip())
    except (TypeError, ValueError):
        return None


def _parse_date(text):
    parts = str(text).strip().split("-")
    if len(parts) != 3:
        return None
    try:
        y, m, d = (int(p) for p in parts)
    except ValueError:
        return None
    if not (1 <= m <= 12 and 1 <= d <= 31):
        return None
    return y, m, d


def parse_incidents(source, schema: IncidentSchema = IncidentSchema(),
                    year_range: tuple[int, int] = (1900, 2100)) -> ParseResult:
    """Parse an incident CSV stream into records plus a rejects list.

    Rows missing a company identifier or a usable year are rejected with a
    reason; a duplicated or incomplete header raises ``SchemaError``.
    """
    stream = _open_source(source)
    close = stream is not source
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            return ParseResult([], [])
        if len(set(header)) != len(header):
            raise SchemaError("duplicate column names in header")
        required = [schema.company_id, schema.case_type, schema.year]
        for col in required:
            if col not in header:
                raise SchemaError(f"missing required column {col!r}")
        idx = {name: header.index(name) for name in required}
        date_idx = header.index(schema.date) if schema.date and schema.date in header else None

        records, rejects = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                rejects.append(Reject(line_no, "malformed-row", tuple(row)))
                continue
            company = row[idx[schema.company_id]].strip()
            if not company:
                rejects.append(Reject(line_no, "missing-company-id", tuple(row)))
                continue
            year = _parse_year(row[idx[schema.year]])
            month = day = None
            if date_idx is not None:
                parsed = _parse_date(row[date_idx])
                if parsed is not None:
                    year, month, day = parsed
            if year is None:
                rejects.append(Reject(line_no, "missing-year", tuple(row)))
                continue
            if not year_range[0] <= year <= year_range[1]:
                rejects.append(Reject(line_no, "year-out-of-range", tuple(row)))
                continue
            records.append(
                IncidentRecord(
                    company_id=company,
                    case_type=row[idx[schema.case_type]].strip(),
                    year=year,
                    month=month,
                    day=day,
                )
            )
        return ParseResult(records, rejects)
    finally:
        if close:
            stream.close()


def label_records(records, category_map: CategoryMap) -> list[IncidentRecord]:
    return [replace(r, label=map_category(r.case_type, category_map)) for r in records]


def dedupe(records) -> list[IncidentRecord]:
    """Keep the first record per (company, label, date) triple, in input order.

    Year-only records use (year, None, None) as their date, so two year-only
    records of one type in one year for one company are duplicates.
    """
    seen = set()
    kept = []
    for r in records:
        if r.label is None:
            raise InvalidInputError("records must be labeled before deduplication")
        key = (r.company_id, r.label, r.date_key)
        if key in seen:
            continue
        seen.add(key)
        kept.append(r)
    return kept


def aggregate_firm_year(records, labels: LabelSet = LabelSet()) -> CountMatrix:
    """Count incidents of each type per (company, year); rows are emitted only
    for firm-years that have at least one record."""
    label_index = {name: j for j, name in enumerate(labels.names)}
    tallies: dict[tuple, np.ndarray] = {}
    for r in records:
        if r.label is None:
            raise InvalidInputError("records must be labeled before aggregation")
        if r.label not in label_index:
            raise InvalidInputError(f"record label {r.label!r} not in label set")
        key = (r.company_id, r.year)
        if key not in tallies:
            tallies[key] = np.zeros(labels.q, dtype=np.int64)
        tallies[key][label_index[r.label]] += 1
    if not tallies:
        return CountMatrix(values=np.zeros((0, labels.q), dtype=np.int64), outputs=labels)
    keys = sorted(tallies)
    values = np.vstack([tallies[k] for k in keys])
    return CountMatrix(values=values, outputs=labels, row_keys=tuple(keys))


# --- feature table, imputation, and encoding ---------------------------------


@dataclass(frozen=True)
class FeatureTable:
    """Raw per-company feature rows prior to imputation and encoding."""

    columns: tuple[str, ...]
    rows: dict[str, tuple]  # company_id -> raw cell values, aligned to columns


@dataclass(frozen=True)
class ImputePolicy:
    numeric_fill: str = "median"  # median | zero

    def __post_init__(self):
        if self.numeric_fill not in ("median", "zero"):
            raise InvalidInputError("numeric_fill must be median or zero")


def read_feature_table(source, company_column: str = "COMPANY_ID") -> FeatureTable:
    stream = _open_source(source)
    close = stream is not source
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("feature CSV is empty")
        if len(set(header)) != len(header):
            raise SchemaError("duplicate column names in feature header")
        if company_column not in header:
            raise SchemaError(f"missing required column {company_column!r}")
        cid = header.index(company_column)
        columns = tuple(c for i, c in enumerate(header) if i != cid)
        rows: dict[str, tuple] = {}
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"feature row {line_no} has wrong column count")
            company = row[cid].strip()
            if not company:
                raise SchemaError(f"feature row {line_no} lacks a company id")
            if company in rows:
                raise SchemaError(f"duplicate feature row for company {company!r}")
            rows[company] = tuple(v for i, v in enumerate(row) if i != cid)
        return FeatureTable(columns=columns, rows=rows)
    finally:
        if close:
            stream.close()


def _is_missing(cell) -> bool:
    return cell is None or str(cell).strip().casefold() in MISSING_MARKERS


def _try_float(cell):
    try:
        return float(str(cell).strip())
    except ValueError:
        return None


def impute_and_encode(table: FeatureTable, policy: ImputePolicy = ImputePolicy()):
    """Produce a dense numeric matrix plus the encoding map for inference.

    Numeric columns are median- or zero-filled; categorical columns one-hot
    encode their observed levels, with missing cells routed to an explicit
    unknown-level column (created only when the fit data has missing cells).
    All-missing columns are dropped with a warning.
    """
    companies = sorted(table.rows)
    if not companies:
        raise EmptyDatasetError("feature table has no rows")
    raw = {c: [table.rows[c][i] for c in companies] for i, c in enumerate(table.columns)}

    encoded_cols: list[str] = []
    encoded_vals: list[np.ndarray] = []
    encoding: dict[str, dict] = {}
    sources: dict[str, str] = {}
    for col in table.columns:
        cells = raw[col]
        present = [v for v in cells if not _is_missing(v)]
        if not present:
            warnings.warn(f"feature column {col!r} is entirely missing; dropped")
            encoding[col] = {"kind": "dropped"}
            continue
        as_float = [_try_float(v) for v in present]
        if all(v is not None for v in as_float):
            fill = 0.0 if policy.numeric_fill == "zero" else float(np.median(as_float))
            values = np.array(
                [fill if _is_missing(v) else float(str(v).strip()) for v in cells]
            )
            encoding[col] = {"kind": "numeric", "fill": fill}
            encoded_cols.append(col)
            encoded_vals.append(values)
            sources[col] = col
        else:
            levels = sorted({str(v).strip() for v in present})
            has_unknown = any(_is_missing(v) for v in cells)
            encoding[col] = {"kind": "categorical", "levels": levels,
                             "has_unknown": has_unknown}
            all_levels = levels + ([UNKNOWN_LEVEL] if has_unknown else [])
            for level in all_levels:
                name = f"{col}={level}"
                if level == UNKNOWN_LEVEL:
                    values = np.array([1.0 if _is_missing(v) else 0.0 for v in cells])
                else:
                    values = np.array(
                        [0.0 if _is_missing(v) else float(str(v).strip() == level)
                         for v in cells]
                    )
                encoded_cols.append(name)
                encoded_vals.append(values)
                sources[name] = col
    if not encoded_cols:
        raise EmptyDatasetError("no usable feature columns after encoding")
    matrix = FeatureMatrix(
        values=np.column_stack(encoded_vals),
        col_names=tuple(encoded_cols),
        row_keys=tuple(companies),
    )
    emap = {"columns": encoding, "encoded": encoded_cols, "sources": sources}
    return matrix, emap


def apply_encoding(table: FeatureTable, emap: dict) -> FeatureMatrix:
    """Encode new rows under a persisted encoding map (inference path).

    Unseen categorical levels route to the column's unknown level when the
    fit created one, else contribute all zeros with a warning.
    """
    companies = sorted(table.rows)
    if not companies:
        raise EmptyDatasetError("feature table has no rows")
    col_pos = {c: i for i, c in enumerate(table.columns)}
    out = np.zeros((len(companies), len(emap["encoded"])))
    pos = {name: i for i, name in enumerate(emap["encoded"])}
    for col, spec in emap["columns"].items():
        if spec["kind"] == "dropped" or col not in col_pos:
            continue
        cells = [table.rows[c][col_pos[col]] for c in companies]
        if spec["kind"] == "numeric":
            out[:, pos[col]] = [
                spec["fill"] if _is_missing(v) else (_try_float(v) if _try_float(v) is not None else spec["fill"])
                for v in cells
            ]
            continue
        levels = set(spec["levels"])
        for i, v in enumerate(cells):
            if _is_missing(v):
                level = UNKNOWN_LEVEL
            else:
                text = str(v).strip()
                level = text if text in levels else UNKNOWN_LEVEL
            name = f"{col}={level}"
            if name in pos:
                out[i, pos[name]] = 1.0
            elif level == UNKNOWN_LEVEL:
                warnings.warn(f"unseen level for {col!r} with no unknown column; zeros")
    return FeatureMatrix(values=out, col_names=tuple(emap["encoded"]),
                         row_keys=tuple(companies))


def join_features(counts: CountMatrix, features: FeatureMatrix,
                  year_feature: bool = True) -> tuple[FeatureMatrix, CountMatrix]:
    """Inner join of firm-year counts with per-company features.

    When ``year_feature`` is set the incident year is appended as one extra
    feature column. Raises when no firm-year overlaps the feature table.
    """
    if not counts.row_keys or not features.row_keys:
        raise InvalidInputError("both inputs must carry row keys")
    feature_row = {cid: i for i, cid in enumerate(features.row_keys)}
    keep = [i for i, (cid, _year) in enumerate(counts.row_keys) if cid in feature_row]
    if not keep:
        raise EmptyDatasetError("no firm-year rows overlap the feature table")
    keys = tuple(counts.row_keys[i] for i in keep)
    x_rows = np.vstack([features.values[feature_row[cid]] for cid, _ in keys])
    col_names = features.col_names
    if year_feature:
        years = np.array([[float(year)] for _, year in keys])
        x_rows = np.hstack([x_rows, years])
        col_names = col_names + (YEAR_COLUMN,)
    joined_x = FeatureMatrix(values=x_rows, col_names=col_names, row_keys=keys)
    joined_z = CountMatrix(values=counts.values[keep], outputs=counts.outputs, row_keys=keys)
    return joined_x, joined_z


def project_columns(features: FeatureMatrix, emap: dict, raw_names) -> FeatureMatrix:
    """Project onto encoded columns whose source column (or exact encoded
    name, e.g. the appended year) appears in ``raw_names``."""
    wanted = set(raw_names)
    sources = emap.get("sources", {})
    keep = [
        i for i, name in enumerate(features.col_names)
        if name in wanted or sources.get(name) in wanted
    ]
    if not keep:
        raise InvalidInputError("projection selected no columns")
    return FeatureMatrix(
        values=features.values[:, keep],
        col_names=tuple(features.col_names[i] for i in keep),
        row_keys=features.row_keys,
    )


def write_rejects(path, rejects) -> None:
    """One JSON object per dropped row."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejects:
            fh.write(json.dumps({"line": r.line, "reason": r.reason, "row": list(r.row)},
                                sort_keys=True))
            fh.write("\n")


def parse_incidents_text(text: str, **kwargs) -> ParseResult:
    return parse_incidents(io.StringIO(text), **kwargs)
