import warnings

import pytest

from sofic_dim.config import (
    Manifest,
    build_manifest,
    load_manifest,
    manifest_hash,
    parse_epsilons,
    parse_seeds,
)
from sofic_dim.errors import ManifestError


def test_parse_seeds_forms() -> None:
    assert parse_seeds("1..4") == (1, 2, 3, 4)
    assert parse_seeds("1,4,9") == (1, 4, 9)
    assert parse_seeds(3) == (1, 2, 3)
    assert parse_seeds("3") == (1, 2, 3)
    assert parse_seeds([7]) == (7,)
    with pytest.raises(ManifestError):
        parse_seeds("5..2")


def test_parse_seeds_drops_duplicates_with_warning() -> None:
    with warnings.catch_warnings(record=True) as captured:
        warnings.simplefilter("always")
        seeds = parse_seeds("1,2,2,3")

    assert seeds == (1, 2, 3)
    assert any("seeds" in str(item.message) for item in captured)


def test_parse_epsilons_drops_out_of_range() -> None:
    with warnings.catch_warnings(record=True) as captured:
        warnings.simplefilter("always")
        epsilons = parse_epsilons("0.5,1.5,0.1")

    assert epsilons == (0.5, 0.1)
    assert any("epsilons" in str(item.message) for item in captured)


def test_load_manifest_merges_sections(tmp_path) -> None:
    path = tmp_path / "manifest.yml"
    path.write_text(
        "\n".join(
            [
                "seeds: 1..3",
                "output_dir: out",
                "approx:",
                "  group: cyclic:5",
                "  degrees: 50,100",
                "betti:",
                "  n: 3",
                "  degrees: 400",
            ]
        ),
        encoding="utf-8",
    )

    approx = load_manifest(path, "approx")
    betti = load_manifest(path, "betti", {"seeds": "4", "n": None})

    assert approx.group == "cyclic:5"
    assert approx.degrees == (50, 100)
    assert approx.seeds == (1, 2, 3)
    assert approx.output_dir == "out"
    assert betti.n == 3
    assert betti.seeds == (1, 2, 3, 4)


def test_load_manifest_accepts_json(tmp_path) -> None:
    path = tmp_path / "manifest.json"
    path.write_text('{"epsdim": {"group": "cyclic:3", "epsilons": [0.25]}}', encoding="utf-8")

    manifest = load_manifest(path, "epsdim")

    assert manifest.epsilons == (0.25,)
    assert manifest.group == "cyclic:3"


def test_build_manifest_names_invalid_fields() -> None:
    with pytest.raises(ManifestError) as group_error:
        build_manifest({"group": "lattice:2"}, "approx")
    assert group_error.value.field == "group"

    with pytest.raises(ManifestError) as eps_error:
        build_manifest({"epsilons": ""}, "epsdim")
    assert eps_error.value.field == "epsilons"

    with pytest.raises(ManifestError) as schedule_error:
        build_manifest({"schedule": ["generators:x:0.1"]}, "epsdim")
    assert schedule_error.value.field == "schedule"

    with pytest.raises(ManifestError):
        build_manifest({}, "plot")
    with pytest.raises(ManifestError):
        build_manifest({"op": "spin"}, "tree")


def test_manifest_hash_is_stable_and_sensitive() -> None:
    first = build_manifest({"degrees": "50,100"}, "approx")
    second = build_manifest({"degrees": [50, 100]}, "approx")

    assert manifest_hash(first) == manifest_hash(second)
    assert len(manifest_hash(first)) == 16
    assert manifest_hash(first) != manifest_hash(Manifest(command="approx"))


def test_exact_arithmetic_flag() -> None:
    assert build_manifest({"arithmetic": "exact"}, "tree").exact
    assert not build_manifest({}, "tree").exact
