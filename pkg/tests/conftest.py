import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

CASE_TYPES = ("breach", "ransomware", "privacy", "outage", "weird-thing")

CATEGORY_MAP = {
    "breach": "Data Breach",
    "ransomware": "Extortion/Fraud",
    "privacy": "Privacy Violation",
    "outage": "IT Error",
}

REGIONS = ("E", "W", "N")
SECTORS = ("tech", "health", "retail")


def build_corpus(root: Path, n_companies=12, n_incidents=40, seed=0) -> dict:
    """Write a deterministic toy corpus and return the config dict."""
    rng = np.random.default_rng(seed)
    companies = [f"C{i:02d}" for i in range(1, n_companies + 1)]

    lines = ["COMPANY_ID,CASE_TYPE_LG,ACCIDENT_YEAR,DATE"]
    rows = []
    for _ in range(n_incidents):
        company = companies[int(rng.integers(n_companies))]
        case = CASE_TYPES[int(rng.integers(len(CASE_TYPES)))]
        year = int(rng.integers(2014, 2019))
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 28))
        rows.append((company, case, year, f"{year}-{month:02d}-{day:02d}"))
    rows.append(rows[0])  # planted duplicate triples
    rows.append(rows[1])
    for company, case, year, date in rows:
        lines.append(f"{company},{case},{year},{date}")
    lines.append(",breach,2015,2015-01-01")  # missing company id
    lines.append("C01,breach,,")  # missing year
    incidents = root / "incidents.csv"
    incidents.write_text("\n".join(lines) + "\n", encoding="utf-8")

    feat_lines = ["COMPANY_ID,REVENUE,EMPLOYEES,REGION,SECTOR"]
    for i, company in enumerate(companies):
        revenue = "" if i == 3 else f"{(i + 1) * 10}"
        employees = f"{5 + 3 * i}"
        region = REGIONS[i % 3]
        sector = SECTORS[i % 3]
        feat_lines.append(f"{company},{revenue},{employees},{region},{sector}")
    features = root / "features.csv"
    features.write_text("\n".join(feat_lines) + "\n", encoding="utf-8")

    return {
        "schema_version": 1,
        "incidents_csv": str(incidents),
        "features_csv": str(features),
        "category_map": CATEGORY_MAP,
        "d1_columns": ["SECTOR", "REVENUE", "ACCIDENT_YEAR"],
        "year_feature": True,
        "split_ratio": 0.8,
        "seed": 11,
        "folds": 2,
        "threshold_grid": [0.5],
        "max_orders": 2,
        "theta_grid": [{"tree_count": 3, "max_depth": 3, "min_samples_leaf": 2}],
        "roster": [
            {"id": "br_forest", "kind": "br", "base": "forest", "datasets": ["d1", "d2"]},
            {"id": "br_gbt", "kind": "br", "base": "gbt", "datasets": ["d2"]},
            {"id": "cc_forest", "kind": "cc", "base": "forest", "datasets": ["d2"]},
            {"id": "mct_forest", "kind": "mct", "base": "forest", "datasets": ["d1", "d2"]},
            {"id": "mor_forest", "kind": "mor", "base": "forest", "datasets": ["d1", "d2"]},
            {"id": "mor_gbt", "kind": "mor", "base": "gbt", "datasets": ["d2"]},
            {"id": "rc_forest", "kind": "rc", "base": "forest", "datasets": ["d2"]},
            {"id": "mrt_forest", "kind": "mrt", "base": "forest", "datasets": ["d1", "d2"]},
        ],
        "top_k": 5,
        "permutation_repeats": 2,
        "shap_rows": 16,
    }


def build_signal_corpus(root: Path) -> dict:
    """Corpus with a planted, fully learnable feature -> label relationship.

    Every company-year carries one unmapped (Other) incident so all rows
    materialize; tech-sector firms additionally breach every year and
    west-region firms have an IT outage every year.
    """
    companies = [f"S{i:02d}" for i in range(1, 21)]
    lines = ["COMPANY_ID,CASE_TYPE_LG,ACCIDENT_YEAR,DATE"]
    for year in range(2014, 2018):
        for i, company in enumerate(companies):
            lines.append(f"{company},weird-thing,{year},{year}-01-01")
            if SECTORS[i % 3] == "tech":
                lines.append(f"{company},breach,{year},{year}-02-02")
            if REGIONS[i % 3] == "W":
                lines.append(f"{company},outage,{year},{year}-03-03")
    incidents = root / "incidents_signal.csv"
    incidents.write_text("\n".join(lines) + "\n", encoding="utf-8")

    feat_lines = ["COMPANY_ID,REVENUE,EMPLOYEES,REGION,SECTOR"]
    for i, company in enumerate(companies):
        feat_lines.append(
            f"{company},{(i + 1) * 10},{5 + 3 * i},{REGIONS[i % 3]},{SECTORS[i % 3]}"
        )
    features = root / "features_signal.csv"
    features.write_text("\n".join(feat_lines) + "\n", encoding="utf-8")

    return {
        "schema_version": 1,
        "incidents_csv": str(incidents),
        "features_csv": str(features),
        "category_map": CATEGORY_MAP,
        "d1_columns": ["REVENUE", "ACCIDENT_YEAR"],
        "year_feature": True,
        "split_ratio": 0.8,
        "seed": 5,
        "folds": 2,
        "threshold_grid": [0.5],
        "max_orders": 2,
        "theta_grid": [{"tree_count": 10, "max_depth": 4, "min_samples_leaf": 2}],
        "roster": [
            {"id": "br_forest", "kind": "br", "base": "forest", "datasets": ["d1", "d2"]},
            {"id": "mor_forest", "kind": "mor", "base": "forest", "datasets": ["d1", "d2"]},
        ],
        "top_k": 3,
        "permutation_repeats": 2,
        "shap_rows": 16,
    }


def write_config(root: Path, config: dict) -> Path:
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return path
