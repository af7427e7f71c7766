import math

import numpy as np
import pytest

from sofic_dim.errors import NotHermitianError, PreconditionError
from sofic_dim.lp_linalg import (
    Interval,
    LpMatrix,
    ball_volume_log,
    schatten_norm,
    spectral_truncate,
    trace_monotone_check,
    truncation_bound,
    volume_ratio_sequence,
)
from sofic_dim.parallel import rng_stream


def _random_matrix(rng, dimension: int) -> np.ndarray:
    return rng.standard_normal((dimension, dimension)) + 1j * rng.standard_normal(
        (dimension, dimension)
    )


def _random_hermitian(rng, dimension: int) -> np.ndarray:
    values = _random_matrix(rng, dimension)
    return (values + values.conj().T) / 2


def test_schatten_norm_known_values() -> None:
    for p in (1, 2, 3, math.inf):
        assert schatten_norm(np.eye(4), p) == pytest.approx(1.0)
    assert schatten_norm(np.diag([3.0, 4.0]), math.inf) == pytest.approx(4.0)
    assert schatten_norm(np.diag([3.0, 4.0]), 2) == pytest.approx(math.sqrt(12.5))


def test_schatten_two_norm_matches_trace() -> None:
    rng = rng_stream(1, "schatten")
    values = _random_matrix(rng, 6)

    expected = np.trace(values.conj().T @ values).real / 6
    assert schatten_norm(values, 2) ** 2 == pytest.approx(expected, rel=1e-10)


def test_holder_inequality_on_random_pairs() -> None:
    rng = rng_stream(2, "holder")
    for _ in range(200):
        a = _random_matrix(rng, 5)
        b = _random_matrix(rng, 5)
        p = rng.uniform(1.0, 4.0)
        q = rng.uniform(1.0, 4.0)
        r = 1.0 / (1.0 / p + 1.0 / q)
        assert schatten_norm(a @ b, r) <= schatten_norm(a, p) * schatten_norm(b, q) + 1e-9


def test_spectral_truncate_known_values() -> None:
    projection = spectral_truncate(np.diag([0.1, 0.9]), Interval(0.5))
    assert np.allclose(projection.matrix, np.diag([0.0, 1.0]))

    full = spectral_truncate(np.eye(3), Interval(0.0, 2.0))
    assert np.allclose(full.matrix, np.eye(3))
    assert full.rank == 3


def test_spectral_truncate_of_random_hermitian() -> None:
    rng = rng_stream(3, "truncate")
    values = _random_hermitian(rng, 8)

    e = spectral_truncate(values, Interval(0.0, 1.5, lower_closed=True)).matrix

    assert np.allclose(e @ e, e, atol=1e-10)
    assert np.allclose(e, e.conj().T, atol=1e-10)
    assert np.allclose(e @ values, values @ e, atol=1e-10)


def test_spectral_truncate_rejects_non_hermitian() -> None:
    with pytest.raises(NotHermitianError):
        spectral_truncate(np.array([[0.0, 1.0], [0.0, 0.0]]), Interval(0.5))


def test_lp_matrix_eigendecomposition_reassembles() -> None:
    rng = rng_stream(4, "eigh")
    matrix = LpMatrix(_random_hermitian(rng, 6))

    values, vectors = matrix.eigh

    assert np.allclose((vectors * values) @ vectors.conj().T, matrix.entries, atol=1e-10)
    assert np.allclose(LpMatrix.from_json(matrix.to_json()).entries, matrix.entries)


def test_trace_monotone_check_known_values() -> None:
    rng = rng_stream(5, "monotone")
    b = _random_matrix(rng, 4)

    assert trace_monotone_check(b, b, 2.0)
    assert trace_monotone_check(np.zeros((4, 4)), b, 0.5)


def test_trace_monotone_check_on_random_pairs() -> None:
    rng = rng_stream(6, "monotone-pairs")
    for _ in range(250):
        a = _random_matrix(rng, 4)
        modulus = LpMatrix(a).modulus.entries
        bump = _random_matrix(rng, 4)
        b = modulus + bump @ bump.conj().T
        for beta in (0.5, 1.0, 2.0, 3.0):
            assert trace_monotone_check(a, b, beta)


def test_trace_monotone_check_rejects_unordered_pair() -> None:
    with pytest.raises(PreconditionError):
        trace_monotone_check(np.eye(2), np.zeros((2, 2)), 1.0)


def test_truncation_bound_two_by_two_example() -> None:
    diag = np.diag([1.0, 0.0])

    result = truncation_bound(diag, diag, diag, p=2, delta=0.04, eta=0.1)

    assert np.allclose(result.projection.matrix, diag)
    assert result.residual == pytest.approx(0.0, abs=1e-12)
    assert result.trace == pytest.approx(0.5)
    assert result.trace_bound == pytest.approx(0.5 + (0.1 / 0.8) ** 2)
    assert result.residual_ok and result.trace_ok


def test_truncation_bound_with_identity() -> None:
    rng = rng_stream(7, "identity")
    b = _random_matrix(rng, 3)

    result = truncation_bound(np.eye(3), b, np.eye(3), p=1, delta=0.5, eta=0.5)

    assert np.allclose(result.projection.matrix, np.eye(3))
    assert result.residual == pytest.approx(0.0, abs=1e-12)


def test_truncation_bound_conclusions_on_random_instances() -> None:
    rng = rng_stream(8, "truncation")
    checked = 0
    for _ in range(300):
        dimension = int(rng.integers(2, 13))
        p = float(rng.choice([1.0, 2.0, 4.0]))
        basis, _ = np.linalg.qr(_random_matrix(rng, dimension))
        rank = int(rng.integers(0, dimension + 1))
        q = basis[:, :rank] @ basis[:, :rank].conj().T
        noise = _random_hermitian(rng, dimension)
        a = q + 0.02 * noise / np.linalg.norm(noise, 2)
        c = _random_matrix(rng, dimension)
        b = q @ c / np.linalg.norm(c, 2) + 0.01 * np.eye(dimension)
        try:
            result = truncation_bound(a, b, q, p=p, delta=0.3, eta=0.3)
        except PreconditionError:
            continue
        checked += 1
        assert result.residual_ok
        assert result.trace_ok
    assert checked > 100


def test_ball_volume_log_known_values() -> None:
    assert ball_volume_log(0) == 0.0
    assert ball_volume_log(1) == pytest.approx(math.log(math.pi))
    assert ball_volume_log(10) == pytest.approx(-3.6571, abs=1e-4)


def test_volume_ratio_sequence_is_bounded() -> None:
    assert volume_ratio_sequence(0.0, [10, 20])[0].ratio == pytest.approx(1.0)

    rows = volume_ratio_sequence(0.5, list(range(10, 201, 10)))
    ratios = [row.ratio for row in rows]
    assert max(ratios) < 2.0
    assert min(ratios) > 0.5
    steps = np.abs(np.diff(ratios))
    assert steps[-1] <= steps[0]
