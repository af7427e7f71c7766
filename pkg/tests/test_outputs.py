from fractions import Fraction
import json

import pandas as pd
import pytest

from sofic_dim import __version__
from sofic_dim.outputs import (
    approx_summary,
    epsdim_summary,
    load_table,
    stamp_fields,
    write_json,
    write_table,
)


def test_write_table_stamps_hash_and_version(tmp_path) -> None:
    df = pd.DataFrame({"degree": [50], "defect": [0.1 + 0.2]})

    write_table(tmp_path / "approx.csv", df, "abc123")
    loaded = load_table(tmp_path / "approx.csv")

    assert list(loaded.columns) == ["degree", "defect", "manifest_hash", "version"]
    assert loaded.loc[0, "manifest_hash"] == "abc123"
    assert loaded.loc[0, "version"] == __version__
    assert loaded.loc[0, "defect"] == pytest.approx(0.1 + 0.2, rel=1e-15)


def test_write_table_is_byte_identical(tmp_path) -> None:
    df = pd.DataFrame({"value": [1 / 3, 2 / 3]})

    write_table(tmp_path / "a.csv", df, "h")
    write_table(tmp_path / "b.csv", df, "h")

    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_load_table_missing_file(tmp_path) -> None:
    assert load_table(tmp_path / "missing.csv").empty


def test_write_json_header_and_fractions(tmp_path) -> None:
    path = tmp_path / "tree.json"

    write_json(path, {"central": [Fraction(4, 3)], "limit": Fraction(3, 2)}, "h")
    payload = json.loads(path.read_text(encoding="utf-8"))

    assert payload["schema_version"] == 1
    assert payload["manifest_hash"] == "h"
    assert payload["version"] == __version__
    assert payload["central"] == ["4/3"]
    assert payload["limit"] == "3/2"


def test_summaries() -> None:
    approx = pd.DataFrame(
        {"degree": [50, 100], "defect": [0.0, 0.02], "freeness": [1.0, 0.9]}
    )
    summary = approx_summary(approx, "free:2")
    assert summary["max_defect"] == 0.02
    assert summary["degrees"] == [50, 100]
    assert approx_summary(pd.DataFrame(), "free:2") == {"cells": 0, "group": "free:2"}

    dims = pd.DataFrame(
        {
            "mode": ["hom", "hom"],
            "schedule": ["generators:1:0.1"] * 2,
            "blocks": [0, 0],
            "eps": [0.25, 0.25],
            "seed": [1, 1],
            "degree": [60, 120],
            "normalized_upper": [0.7, 0.68],
            "normalized_lower": [0.65, 0.66],
        }
    )
    brackets = epsdim_summary(dims)
    assert brackets["degree"] == 120
    assert brackets["brackets"][0]["normalized_upper"] == 0.68


def test_stamp_fields_match_table_columns(tmp_path) -> None:
    stamped = write_table(tmp_path / "t.csv", pd.DataFrame({"x": [1]}), "abc")

    fields = stamp_fields("abc")

    assert fields == {"manifest_hash": "abc", "version": __version__}
    assert stamped.loc[0, "manifest_hash"] == fields["manifest_hash"]
    assert stamped.loc[0, "version"] == fields["version"]
