from sofic_dim.acceptance import (
    TRACE_EXPONENTS,
    check_functional_calculus,
    check_zcase,
    run_checks,
)


def test_functional_calculus_check_spans_exponents_below_and_above_one() -> None:
    assert min(TRACE_EXPONENTS) < 1 < max(TRACE_EXPONENTS)

    passed, detail = check_functional_calculus(quick=True)

    assert passed, detail


def test_zcase_check_needs_nonzero_covers() -> None:
    passed, detail = check_zcase(quick=True)

    assert passed, detail
    assert "min_upper=0" not in detail


def test_run_checks_filters_by_name() -> None:
    results = run_checks(quick=True, names=("volume-ratio",))

    assert [result.name for result in results] == ["volume-ratio"]
    assert results[0].passed
