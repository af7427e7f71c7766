from __future__ import annotations

from fractions import Fraction
import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import __version__

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def stamp_fields(manifest_hash: str) -> dict[str, str]:
    return {"manifest_hash": manifest_hash, "version": __version__}


def _stamp(df: pd.DataFrame, manifest_hash: str) -> pd.DataFrame:
    stamped = df.copy()
    for key, value in stamp_fields(manifest_hash).items():
        stamped[key] = value
    return stamped


def write_table(path: Path, df: pd.DataFrame, manifest_hash: str) -> pd.DataFrame:
    """CSV with 17 significant digits, stamped with the manifest hash and library version."""
    path.parent.mkdir(parents=True, exist_ok=True)
    stamped = _stamp(df, manifest_hash)
    stamped.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return stamped


def load_table(path: Path) -> pd.DataFrame:
    if not path.exists():
        return pd.DataFrame()
    return pd.read_csv(path)


def _plain(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def write_json(path: Path, payload: dict[str, Any], manifest_hash: str) -> dict[str, Any]:
    document = {
        "schema_version": SCHEMA_VERSION,
        "manifest_hash": manifest_hash,
        "version": __version__,
        **_plain(payload),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, ensure_ascii=False, indent=2), encoding="utf-8")
    return document


def approx_summary(table: pd.DataFrame, group: str) -> dict[str, Any]:
    if table.empty:
        return {"cells": 0, "group": group}
    return {
        "cells": int(len(table)),
        "group": group,
        "max_defect": float(table["defect"].max()),
        "min_freeness": float(table["freeness"].min()),
        "degrees": sorted(int(d) for d in table["degree"].unique()),
    }


def epsdim_summary(table: pd.DataFrame) -> dict[str, Any]:
    if table.empty:
        return {"rows": 0}
    last_degree = int(table["degree"].max())
    final = table[table["degree"] == last_degree]
    brackets = [
        {
            "mode": str(row["mode"]),
            "schedule": str(row["schedule"]),
            "blocks": int(row["blocks"]),
            "eps": float(row["eps"]),
            "seed": int(row["seed"]),
            "normalized_upper": float(row["normalized_upper"]),
            "normalized_lower": float(row["normalized_lower"]),
        }
        for _, row in final.iterrows()
    ]
    return {"rows": int(len(table)), "degree": last_degree, "brackets": brackets}
