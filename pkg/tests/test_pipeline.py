import numpy as np
import pytest

from sofic_dim import pipeline
from sofic_dim.almost_equiv import hom_defect, parse_word_set, span_basis
from sofic_dim.cache import CellCache
from sofic_dim.eps_dim import BlockNorm, SampleCloud
from sofic_dim.errors import PreconditionError
from sofic_dim.groups import cyclic_group, free_group, parse_group_spec
from sofic_dim.parallel import rng_stream
from sofic_dim.pipeline import (
    PipelineProblem,
    ScheduleEntry,
    approx_table,
    brackets_intersect,
    defect_quantiles,
    dim_pipeline,
    isotypic_core,
    parse_coefficients,
    parse_schedule_entry,
    probe_table,
    rep_from_spec,
    tuple_from_spec,
)
from sofic_dim.sofic import build_model, finite_block_model


def _z3_problem(**overrides) -> PipelineProblem:
    group = cyclic_group(3)
    rep = rep_from_spec("character:1,2", group)
    settings = dict(
        generating=tuple_from_spec("1,2", rep),
        degrees=(60, 120),
        seeds=(1,),
        schedule=(ScheduleEntry("generators", 1, 0.1),),
        epsilons=(0.25,),
        witnesses=4,
        modes=("hom", "vect"),
    )
    settings.update(overrides)
    return PipelineProblem(**settings)


def _trivial_z_problem(**overrides) -> PipelineProblem:
    rep = rep_from_spec("trivial", free_group(1))
    settings = dict(
        generating=tuple_from_spec("1", rep),
        degrees=(100,),
        seeds=(1, 2),
        schedule=(ScheduleEntry("generators", 1, 0.1),),
        epsilons=(0.25,),
        witnesses=6,
        folner=50,
        compression=(2, 4, 8),
    )
    settings.update(overrides)
    return PipelineProblem(**settings)


def test_parse_schedule_entry() -> None:
    assert parse_schedule_entry("generators:2:0.1") == ScheduleEntry("generators", 2, 0.1)
    entry = parse_schedule_entry("words:a;b^-1:1:0.05")
    assert entry.words == "words:a;b^-1"
    assert entry.text == "words:a;b^-1:1:0.05"
    with pytest.raises(PreconditionError):
        parse_schedule_entry("generators:two:0.1")
    with pytest.raises(PreconditionError):
        parse_schedule_entry("generators:1:0")


def test_rep_and_tuple_specs() -> None:
    rep = rep_from_spec("character:1,2", cyclic_group(3))
    generating = tuple_from_spec("1,2", rep)

    assert rep.dimension == 2
    assert np.allclose(generating.vectors, [[1.0, 0.0], [0.0, 2.0]])
    assert rep_from_spec("trivial:3", free_group(1)).dimension == 3
    with pytest.raises(PreconditionError):
        rep_from_spec("regular", cyclic_group(3))
    with pytest.raises(PreconditionError):
        tuple_from_spec("1,2,3", rep)


def test_problem_rejects_empty_schedules() -> None:
    with pytest.raises(PreconditionError):
        _z3_problem(epsilons=())
    with pytest.raises(PreconditionError):
        _z3_problem(modes=("both",))


def test_isotypic_core_radius_and_rank() -> None:
    problem = _z3_problem()
    sofic_map = finite_block_model(problem.group, 30)

    core = isotypic_core(problem.generating, sofic_map, problem.rho)

    assert core is not None
    assert core.radius == pytest.approx(0.5)
    assert core.projection.rank == 20


def test_isotypic_core_needs_distinct_characters() -> None:
    rep = rep_from_spec("character:1,1", cyclic_group(3))
    generating = tuple_from_spec("1,1", rep)
    sofic_map = finite_block_model(cyclic_group(3), 30)

    assert isotypic_core(generating, sofic_map, _z3_problem().rho) is None


def test_empty_witness_set_has_zero_upper_bound() -> None:
    problem = _z3_problem(witnesses=0, constructed=False, epsilons=(0.5, 0.25, 0.1))

    table = dim_pipeline(problem, workers=1)

    assert (table["upper"] == 0).all()
    assert set(table["upper_strategy"]) == {"empty"}


def test_finite_group_bracket_contains_dimension_over_order() -> None:
    table = dim_pipeline(_z3_problem(), workers=1)

    for _, row in table.iterrows():
        assert row["normalized_upper"] == pytest.approx(2 / 3, abs=0.1)
        assert row["normalized_lower"] >= 2 / 3 - 0.05
        assert row["normalized_upper"] - row["normalized_lower"] <= 0.2
        assert row["liminf_lower"] <= row["limsup_upper"]
    hom = table[table["mode"] == "hom"]
    assert (hom["admitted"] == 4).all()
    assert (hom["lower_route"] == "core").all()
    assert brackets_intersect(table, 0.25)


def test_vect_rows_are_marked_empirical() -> None:
    table = dim_pipeline(_z3_problem(degrees=(30,)), workers=1)

    vect = table[table["mode"] == "vect"]
    assert vect["empirical"].all()
    assert (vect["admitted"] >= 4).all()
    assert (vect["mapped"] >= 1).all()
    assert not table[table["mode"] == "hom"]["empirical"].any()


def test_running_bounds_follow_degrees() -> None:
    table = dim_pipeline(_z3_problem(degrees=(30, 31, 60), modes=("hom",)), workers=1)

    ordered = table.sort_values("degree")
    assert list(ordered["limsup_upper"]) == list(ordered["normalized_upper"].cummax())
    assert list(ordered["liminf_lower"]) == list(ordered["normalized_lower"].cummin())


def test_zcase_bracket_is_nonzero_and_below_block_bound() -> None:
    table = dim_pipeline(_trivial_z_problem(), workers=1)

    assert set(table["blocks"]) == {2, 4, 8}
    for _, row in table.iterrows():
        assert row["admitted"] == 6
        assert row["upper"] >= 1
        assert row["normalized_upper"] <= 1 / row["blocks"] + 0.05


def test_zcase_witnesses_are_unit_and_nearly_invariant() -> None:
    problem = _trivial_z_problem()
    generating = problem.generating
    sofic_map = build_model(problem.group, 100, 1)
    words = parse_word_set("generators", problem.group)
    basis = span_basis(generating.rep, generating, words, 1)

    witnesses = pipeline.sample_witnesses(
        basis, sofic_map, generating.rep, 6, 50, rng_stream(1, "unit-witness")
    )

    for witness in witnesses:
        assert witness.operator_norm == pytest.approx(1.0)
        assert hom_defect(witness, generating, sofic_map, words, 1) < 0.1


def test_zcase_cover_needs_compressible_tuples() -> None:
    problem = _trivial_z_problem()
    sofic_map = build_model(problem.group, 100, 1)
    norm = BlockNorm(problem.rho, 100, problem.p)
    flat = SampleCloud(np.full((2, 100), 0.1) * np.array([[1.0], [1.0j]]), norm)

    cover = pipeline._zcase_cover(problem, flat, sofic_map, 0.25, 4)

    assert cover is not None
    assert cover.strategy == "zcase"
    assert cover.dimension == 25
    rough = SampleCloud(rng_stream(2, "rough").standard_normal((2, 100)) / 10, norm)
    assert pipeline._zcase_cover(problem, rough, sofic_map, 0.25, 4) is None


def test_dim_pipeline_resumes_from_cell_cache(tmp_path, monkeypatch) -> None:
    cache = CellCache(tmp_path)
    problem = _trivial_z_problem(seeds=(1,), compression=(4,))

    first = dim_pipeline(problem, workers=1, cache=cache, manifest_hash="abc")
    assert list(tmp_path.joinpath("epsdim", "abc").glob("*.parquet"))

    def fail(*_args, **_kwargs):
        raise AssertionError("cell recomputed")

    monkeypatch.setattr(pipeline, "dim_cell", fail)
    second = dim_pipeline(problem, workers=1, cache=cache, manifest_hash="abc")

    assert list(second["normalized_upper"]) == list(first["normalized_upper"])


def test_approx_table_for_cyclic_and_free_groups() -> None:
    cyclic = approx_table(parse_group_spec("cyclic:5"), [50], [1], workers=1)
    assert cyclic.loc[0, "defect"] == 0.0
    assert cyclic.loc[0, "freeness"] == pytest.approx(1.0)

    free = approx_table(parse_group_spec("free:2"), [100, 200], [1, 2, 3], workers=1)
    assert len(free) == 6
    assert (free["defect"] == 0.0).all()
    summary = defect_quantiles(free)
    assert list(summary["degree"]) == [100, 200]
    assert "freeness_q50" in summary.columns


def test_parse_coefficients() -> None:
    assert parse_coefficients("0:0.5, 2:0.5") == {0: 0.5, 2: 0.5}
    with pytest.raises(PreconditionError):
        parse_coefficients("0=0.5")


def test_probe_table_recovers_trace() -> None:
    table = probe_table(cyclic_group(4), {0: 0.5, 2: 0.5}, [16], [1], [0.1], samples=3, workers=1)

    row = table.iloc[0]
    assert row["trace"] == pytest.approx(0.5)
    assert row["normalized_upper"] == pytest.approx(0.5)
    assert row["normalized_lower"] == pytest.approx(0.5, abs=0.1)
    assert row["max_defect"] == pytest.approx(0.0)
