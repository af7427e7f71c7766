from fractions import Fraction

import numpy as np
import pytest

from sofic_dim.errors import ConvergenceError, PreconditionError
from sofic_dim.groups import IDENTITY, Word
from sofic_dim.parallel import rng_stream
from sofic_dim.tree_calculus import (
    EdgeFunction,
    averaging_operator,
    basis_edge,
    boundary,
    coboundary,
    coboundary_constant,
    cohomology_push,
    edge_frame,
    edge_pairing,
    embed_via_phi,
    flow_generator,
    flow_power_sum,
    geodesic_primitive,
    hodge_decompose,
    interpolated_constant,
    laplacian_solve,
    source_push,
    source_push_central,
    source_push_limit,
    tree_ball,
    tree_flow,
    write_dot,
)

A = Word.generator(0)
B = Word.generator(1)
A_INV = Word.generator(0, -1)
B_INV = Word.generator(1, -1)


def _interior_vertex_function(ball, seed: int) -> np.ndarray:
    values = rng_stream(seed, "tree").standard_normal(ball.vertex_count)
    values[~ball.interior] = 0.0
    return values


def test_tree_ball_counts_and_interior() -> None:
    ball = tree_ball(2, 3)

    assert ball.vertex_count == 53
    assert ball.edge_count == ball.vertex_count - 1
    assert ball.interior.sum() == 17
    index, sign = ball.edge(IDENTITY, A_INV)
    assert ball.edge(A_INV, IDENTITY) == (index, -sign)


def test_coboundary_of_identity_indicator() -> None:
    ball = tree_ball(2, 2)
    delta = coboundary(ball.indicator(IDENTITY), ball)

    assert delta.at(IDENTITY, A) == -1
    assert delta.at(IDENTITY, B) == -1
    assert delta.at(A_INV, IDENTITY) == 1
    assert delta.at(IDENTITY, A_INV) == -1


def test_boundary_is_transpose_of_coboundary() -> None:
    ball = tree_ball(2, 3)
    rng = rng_stream(1, "adjoint")
    g = rng.standard_normal(ball.vertex_count)
    f = EdgeFunction(ball, rng.standard_normal(ball.edge_count))

    assert edge_pairing(coboundary(g, ball), f) == pytest.approx(float(np.dot(g, boundary(f))))

    laplace = boundary(coboundary(ball.indicator(IDENTITY), ball))
    assert laplace[ball.index(IDENTITY)] == 4
    assert laplace[ball.index(A)] == -1


def test_boundary_of_basis_edge() -> None:
    ball = tree_ball(2, 2)
    divergence = boundary(basis_edge(ball, IDENTITY, A))

    expected = ball.indicator(A) - ball.indicator(IDENTITY)
    assert np.array_equal(divergence, expected)


def test_coboundary_constant_is_positive() -> None:
    assert coboundary_constant(tree_ball(2, 4)) > 0.1


def test_averaging_operator_preserves_constants_inside() -> None:
    ball = tree_ball(2, 4)
    operator = averaging_operator(ball)

    image = operator.matrix @ np.ones(ball.vertex_count)

    assert np.allclose(image[ball.interior], 1.0)
    assert np.allclose(image[~ball.interior], 0.0)


def test_averaging_norm_is_below_one_and_stable() -> None:
    limits = []
    for radius in (6, 8, 10):
        operator = averaging_operator(tree_ball(2, radius))
        assert operator.truncated_norm < 0.92
        limits.append(operator.limit)

    assert limits[0] < 0.92
    assert limits[0] == pytest.approx(limits[1], abs=5e-4)
    assert limits[1] == pytest.approx(limits[2], abs=5e-4)
    assert limits[2] == pytest.approx(np.sqrt(3) / 2, abs=1e-3)


def test_interpolated_constant() -> None:
    assert interpolated_constant(0.8, 2.0) == pytest.approx(0.8)
    assert interpolated_constant(0.8, 1.0) == 1.0
    assert interpolated_constant(0.8, 1.5) == pytest.approx(0.8 ** (2 / 3))
    assert interpolated_constant(0.8, 3.0) == pytest.approx(interpolated_constant(0.8, 1.5))
    assert averaging_operator(tree_ball(2, 3), p=1.5).norm_estimate < 1


def test_laplacian_round_trip_and_solver_agreement() -> None:
    ball = tree_ball(2, 6)
    g0 = _interior_vertex_function(ball, 2)
    h = boundary(coboundary(g0, ball))
    h[~ball.interior] = 0.0

    direct = laplacian_solve(h, ball, "direct")
    neumann = laplacian_solve(h, ball, "neumann")

    assert np.allclose(direct, g0, atol=1e-8)
    assert np.max(np.abs(direct - neumann)) < 1e-9


def test_laplacian_solve_zero_and_rank_one() -> None:
    ball = tree_ball(2, 3)
    assert not laplacian_solve(np.zeros(ball.vertex_count), ball).any()

    line = tree_ball(1, 5)
    h = np.zeros(line.vertex_count)
    h[0] = 1.0
    with pytest.raises(PreconditionError):
        laplacian_solve(h, line, "neumann")


def test_laplacian_solve_rejects_unconverged_operator() -> None:
    ball = tree_ball(2, 3)
    operator = averaging_operator(ball)
    stuck = type(operator)(ball, operator.matrix, operator.interior_matrix, 2.0, 1.0, 0)
    h = ball.indicator(IDENTITY)

    with pytest.raises(ConvergenceError):
        laplacian_solve(h, ball, "neumann", stuck)


def test_hodge_decompose_has_divergence_free_part() -> None:
    ball = tree_ball(2, 5)
    f = EdgeFunction(ball, rng_stream(3, "hodge").standard_normal(ball.edge_count))

    parts = hodge_decompose(f)

    assert parts.interior_residual < 1e-8
    assert np.allclose((parts.harmonic + parts.exact_part).values, f.values)


def test_flow_generator_values_and_divergence() -> None:
    ball = tree_ball(2, 4)
    f = flow_generator(ball, exact=True)

    assert f.at(IDENTITY, A) == 1
    assert f.at(IDENTITY, B) == 1
    assert f.at(A_INV, IDENTITY) == 1
    assert f.at(B_INV, IDENTITY) == 1
    assert f.at(A, A * A) == Fraction(1, 3)
    assert f.at(A, A * B_INV) == Fraction(1, 3)
    assert f.at(A_INV * A_INV, A_INV) == Fraction(1, 3)
    assert f.at(A * B, A * B * B) == Fraction(1, 9)
    divergence = boundary(f)
    assert all(value == 0 for value in divergence[ball.interior])
    assert f.power_sum(2) == flow_power_sum(2, 4) == 4 * sum(Fraction(1, 3**k) for k in range(4))


def test_tree_flow_general_rank() -> None:
    ball = tree_ball(3, 3)
    f = tree_flow(ball, exact=True)
    c = Word.generator(2)

    assert f.at(IDENTITY, c) == 1
    assert f.at(c, c * A) == Fraction(1, 5)
    assert all(value == 0 for value in boundary(f)[ball.interior])
    with pytest.raises(PreconditionError):
        flow_generator(ball)


def test_embed_via_phi_into_f3() -> None:
    f = flow_generator(tree_ball(2, 3), exact=True)
    first = embed_via_phi(f, 1, 3)
    second = embed_via_phi(f, 2, 3)
    target = first.ball

    a2, a3 = Word.generator(1), Word.generator(2)
    assert first.at(IDENTITY, a2) == f.at(IDENTITY, A)
    assert first.at(IDENTITY, a3) == f.at(IDENTITY, B)
    assert first.power_sum(2) == f.power_sum(2)
    assert all(value == 0 for value in boundary(first)[target.interior])
    assert all(value == 0 for value in boundary(second)[second.ball.interior])

    shared = set(first.support) & set(second.support)
    for edge in shared:
        word = target.words[target.tails[edge]]
        assert all(gen == 2 for gen, _ in word.letters)
    with pytest.raises(PreconditionError):
        embed_via_phi(f, 3, 3)


def test_source_push_central_values() -> None:
    ball = tree_ball(2, 5)
    f = flow_generator(ball, exact=True)

    for level, expected in ((1, Fraction(1)), (2, Fraction(4, 3)), (3, Fraction(13, 9))):
        push = source_push(f, level)
        assert push.central_values() == [expected] * 4
        assert source_push_central(level) == expected
        difference = push.result - f
        assert np.array_equal(difference.values, coboundary(push.potential, ball).values)
        outside = ball.depths[ball.tails] + ball.depths[ball.heads] > 2 * level
        assert np.array_equal(push.result.values[outside], f.values[outside])
    assert source_push_limit() == Fraction(3, 2)
    with pytest.raises(PreconditionError):
        source_push(f, 5)


def test_cohomology_push_identity() -> None:
    for rank, level in ((2, 0), (2, 1), (3, 2)):
        ball = tree_ball(rank, level + 2)
        push = cohomology_push(rank, level, ball)
        last = Word.generator(rank - 1)
        start = basis_edge(ball, IDENTITY, last, exact=True)

        assert np.array_equal((push.far_edge + push.remainder).values, start.values)
        if level == 0:
            assert not push.remainder.support.size
        else:
            assert len(push.translates) == 2 * (rank - 1) * level


def test_far_edge_pairing_vanishes() -> None:
    ball = tree_ball(2, 6)
    dual = EdgeFunction(ball, np.where(ball.depths[ball.heads] <= 3, 1.0, 0.0))
    for level in (3, 4):
        push = cohomology_push(2, level, ball)
        assert edge_pairing(push.far_edge, dual) == 0


def test_geodesic_primitive_inverts_coboundary() -> None:
    ball = tree_ball(2, 4)
    f = EdgeFunction(ball, rng_stream(4, "primitive").standard_normal(ball.edge_count))

    primitive = geodesic_primitive(f)

    assert np.allclose(coboundary(primitive, ball).values, f.values)
    indicator = geodesic_primitive(basis_edge(ball, IDENTITY, A))
    starts_with_a = np.array([bool(w.letters) and w.letters[0] == (0, 1) for w in ball.words])
    assert np.array_equal(indicator, starts_with_a.astype(float))


def test_edge_frame_and_dot_export(tmp_path) -> None:
    ball = tree_ball(2, 2)
    f = flow_generator(ball, exact=True)

    frame = edge_frame(f)
    path = write_dot(f, tmp_path / "ball.dot", max_depth=1)

    assert list(frame.columns) == ["word", "generator", "value"]
    assert len(frame) == ball.edge_count
    assert set(frame["value"]) == {"1", "1/3", "-1/3"}
    text = path.read_text(encoding="utf-8")
    assert text.startswith("digraph ball {")
    assert text.count("->") == 4


def test_dot_export_writes_header_comments(tmp_path) -> None:
    f = flow_generator(tree_ball(2, 2), exact=True)

    path = write_dot(f, tmp_path / "ball.dot", header={"manifest_hash": "abc", "version": "1.0"})

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:3] == ["// manifest_hash: abc", "// version: 1.0", "digraph ball {"]
    assert lines[-1] == "}"
