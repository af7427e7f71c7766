import math

import numpy as np
import pytest

from sofic_dim.almost_equiv import (
    GeneratingTuple,
    LinearWitness,
    folner_average,
    folner_window,
    generator_words,
    hom_defect,
    multiplication_probe,
    probe_estimate,
    progression_basis,
    random_contraction,
    span_basis,
    tuple_to_map,
    vect_check,
    zcase_compress,
)
from sofic_dim.eps_dim import deps_lower_packing
from sofic_dim.errors import DimensionMismatchError, IllConditionedError, PreconditionError
from sofic_dim.groups import IDENTITY, FinRep, character_rep, cyclic_group, free_group
from sofic_dim.parallel import rng_stream
from sofic_dim.sofic import cyclic_character, cyclic_model, finite_block_model, isotypic_projection


def _z3_setup(degree: int = 30):
    group = cyclic_group(3)
    rep = character_rep(group, (1, 2))
    generating = GeneratingTuple(rep, np.array([[1.0, 0.0], [0.0, 2.0]]))
    model = finite_block_model(group, degree)
    words = generator_words(group)
    return group, rep, generating, model, words


def _equivariant_witness(basis, model, seed: int) -> LinearWitness:
    rng = rng_stream(seed, "equivariant")
    columns = []
    for character in (1, 2):
        projection = isotypic_projection(model, cyclic_character(3, character))
        vector = projection @ (rng.standard_normal(model.degree) + 0j)
        columns.append(vector / np.linalg.norm(vector))
    return LinearWitness(basis, np.column_stack(columns) @ basis.q)


def _trivial_z_setup(degree: int):
    group = free_group(1)
    rep = FinRep((np.eye(1),), group)
    generating = GeneratingTuple(rep, np.array([[1.0]]))
    words = generator_words(group)
    basis = span_basis(rep, generating, words, 1)
    return group, rep, generating, words, basis, cyclic_model(range(-3, 4), degree)


def test_span_basis_spans_products() -> None:
    _, rep, generating, _, words = _z3_setup()

    basis = span_basis(rep, generating, words, 2)

    assert basis.rank == 2
    assert np.allclose(basis.q.conj().T @ basis.q, np.eye(2))
    coords = basis.coordinates(basis.product_vectors)
    assert np.allclose(basis.q @ coords, basis.product_vectors)


def test_span_basis_rejects_vectors_outside_span() -> None:
    group = free_group(1)
    rep = FinRep((np.eye(2),), group)
    generating = GeneratingTuple(rep, np.array([[1.0, 0.0]]))
    basis = span_basis(rep, generating, generator_words(group), 1)

    assert basis.rank == 1
    with pytest.raises(DimensionMismatchError):
        basis.coordinates(np.array([0.0, 1.0]))


def test_hom_defect_of_equivariant_witness_is_zero() -> None:
    _, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 2)
    witness = _equivariant_witness(basis, model, 1)

    assert witness.operator_norm == pytest.approx(1.0)
    assert hom_defect(witness, generating, model, words, 2) == pytest.approx(0.0, abs=1e-12)


def test_hom_defect_restriction() -> None:
    _, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 2)
    rng = rng_stream(2, "restrict")
    for _ in range(10):
        witness = LinearWitness(basis, random_contraction(rng, model.degree, basis.rank))
        full = hom_defect(witness, generating, model, words, 2)
        everything = hom_defect(witness, generating, model, words, 2, np.arange(model.degree))
        subset = np.sort(rng.choice(model.degree, size=27, replace=False))
        assert everything == pytest.approx(full)
        assert hom_defect(witness, generating, model, words, 2, subset) <= full + 1e-12


def test_folner_average_trivial_window_and_equivariant_input() -> None:
    group, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 1)
    rng = rng_stream(3, "average")
    witness = LinearWitness(basis, random_contraction(rng, model.degree, basis.rank))

    same = folner_average(witness, [IDENTITY], model, rep)
    assert np.allclose(same.matrix, witness.matrix)

    equivariant = _equivariant_witness(basis, model, 4)
    averaged = folner_average(equivariant, folner_window(group, 0), model, rep)
    assert np.allclose(averaged.matrix, equivariant.matrix)


def test_folner_average_makes_witness_equivariant_without_growing_norm() -> None:
    group, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 1)
    rng = rng_stream(5, "average-norm")
    for _ in range(10):
        witness = LinearWitness(basis, random_contraction(rng, model.degree, basis.rank))
        averaged = folner_average(witness, folner_window(group, 0), model, rep)
        assert averaged.operator_norm <= witness.operator_norm + 1e-9
        assert hom_defect(averaged, generating, model, words, 1) == pytest.approx(0.0, abs=1e-12)


def test_folner_window_on_z_reduces_defect() -> None:
    group, rep, generating, words, basis, model = _trivial_z_setup(200)
    medians = []
    for length in (1, 10, 50):
        defects = []
        for seed in range(5):
            rng = rng_stream(seed, "window")
            witness = LinearWitness(basis, random_contraction(rng, model.degree, 1))
            averaged = folner_average(witness, folner_window(group, length), model, rep)
            defects.append(hom_defect(averaged, generating, model, words, 1))
        medians.append(float(np.median(defects)))

    assert medians[2] < medians[1] < medians[0]


def test_vect_check_passes_equivariant_tuple() -> None:
    _, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 2)
    witness = _equivariant_witness(basis, model, 6)
    xi = witness.apply(generating.vectors.T).T

    rng = rng_stream(6, "vect")
    verdict = vect_check(generating, xi, words, 2, 0.05, model, trials=64, rng=rng)

    assert verdict.passed
    assert verdict.max_violation <= 1e-9


def test_vect_check_certifies_failure_on_long_vector() -> None:
    _, _, generating, model, words = _z3_setup()
    xi = np.zeros((2, model.degree), dtype=complex)
    xi[0, 0] = 1.5

    verdict = vect_check(generating, xi, words, 1, 0.1, model, trials=16)

    assert verdict.status == "certified-fail"
    assert verdict.max_violation > 0.1
    assert np.abs(verdict.certificate).sum() <= 1 + 1e-12


def test_tuple_to_map_interpolates_exact_contraction() -> None:
    _, rep, generating, model, words = _z3_setup()
    basis = span_basis(rep, generating, words, 1)
    rng = rng_stream(7, "interpolate")
    t0 = random_contraction(rng, model.degree, 2)
    targets = t0 @ basis.product_vectors

    witness = tuple_to_map(basis, targets, delta=0.0, eps=1e-6)

    assert np.max(witness.deviations) < 1e-9
    assert witness.operator_norm <= 1 + 1e-9
    assert np.allclose(witness.matrix, t0 @ basis.q, atol=1e-9)


def test_tuple_to_map_postconditions_on_random_instances() -> None:
    _, rep, generating, model, words = _z3_setup(24)
    basis = span_basis(rep, generating, words, 1)
    rng = rng_stream(8, "interpolate-many")
    for _ in range(20):
        t0 = random_contraction(rng, model.degree, 2)
        witness = tuple_to_map(basis, t0 @ basis.product_vectors, delta=0.05, eps=0.2)
        assert witness.operator_norm <= 1 + 1e-9
        assert np.max(witness.deviations) < 0.2


def test_tuple_to_map_rejects_ill_conditioned_products() -> None:
    group = free_group(1)
    rep = FinRep((np.eye(2),), group)
    generating = GeneratingTuple(rep, np.array([[1.0, 0.0], [1.0, 1e-9]]))
    basis = span_basis(rep, generating, generator_words(group), 1)
    targets = np.zeros((5, basis.product_vectors.shape[1]))

    with pytest.raises(IllConditionedError):
        tuple_to_map(basis, targets, delta=0.0, eps=1.0)


def test_progression_basis_dimensions() -> None:
    basis, q, r = progression_basis(100, 3, 4)

    assert (q, r) == (8, 4)
    assert basis.shape == (100, 28)
    assert np.allclose(basis.T @ basis, np.eye(28))
    with pytest.raises(PreconditionError):
        progression_basis(10, 3, 4)


def test_zcase_compress_periodic_vector() -> None:
    model = cyclic_model(range(-3, 4), 24)
    xi = np.tile([0.1, -0.2, 0.05], 8)

    result = zcase_compress(xi, model, period=3, blocks=4, delta=0.01)

    assert result.residual == 0.0
    assert result.dimension == 6
    assert result.bound_ok


def test_zcase_compress_near_invariant_vector() -> None:
    degree = 100
    model = cyclic_model(range(-3, 4), degree)
    rng = rng_stream(9, "zcase")
    for _ in range(10):
        phase = rng.uniform(0, 2 * np.pi)
        amplitude = rng.uniform(0.0002, 0.001)
        xi = amplitude * np.cos(2 * np.pi * np.arange(degree) / degree + phase)
        result = zcase_compress(xi, model, period=3, blocks=4, delta=0.01)
        assert result.residual < (2 * 1e-4 * 4) ** 0.5
        assert result.bound_ok


def test_zcase_compress_rejects_rough_vector() -> None:
    model = cyclic_model(range(-3, 4), 60)
    xi = rng_stream(10, "rough").standard_normal(60)

    with pytest.raises(PreconditionError):
        zcase_compress(xi, model, period=2, blocks=3, delta=0.01)


def test_multiplication_probe_trivial_cases() -> None:
    group = cyclic_group(4)
    model = finite_block_model(group, 8)

    identity = multiplication_probe({0: 1.0}, model, samples=np.eye(8)[None, :, :])
    assert np.allclose(identity.cloud.points[0], np.eye(8).reshape(-1))

    zero = multiplication_probe({}, model, samples=4, rng=rng_stream(11, "probe"))
    assert np.allclose(zero.cloud.points, 0.0)


def test_probe_estimate_recovers_trace_of_projection() -> None:
    group = cyclic_group(4)
    model = finite_block_model(group, 64)
    probe = multiplication_probe(
        {0: 0.5, 2: 0.5},
        model,
        samples=4,
        words=generator_words(group),
        rng=rng_stream(12, "probe-trace"),
    )

    result = probe_estimate(probe, 0.1)

    assert np.allclose(probe.defects, 0.0)
    assert result.normalized_upper == pytest.approx(0.5)
    assert result.normalized_lower == pytest.approx(0.5, abs=0.1)
    assert result.riesz.route == "core"


def test_packing_bound_follows_schatten_exponent() -> None:
    group = cyclic_group(4)
    model = finite_block_model(group, 16)
    packings = {}
    for p in (1.0, 2.0, math.inf):
        sampled = multiplication_probe(
            {0: 0.5, 2: 0.5}, model, samples=3, p=p, rng=rng_stream(13, "packing")
        )
        result = probe_estimate(sampled, 0.01)
        packings[p] = result.packing
        if result.packing is not None:
            assert result.packing <= result.upper

    real_dim = 2 * 16 * 8
    assert packings[1.0] == deps_lower_packing(-real_dim * math.log(16), 0.01, real_dim, 0.0)
    assert packings[2.0] == deps_lower_packing(
        -(real_dim / 2) * math.log(16), 0.01, real_dim, 0.0
    )
    assert 0 < packings[1.0] < packings[2.0]
    assert packings[math.inf] is None
