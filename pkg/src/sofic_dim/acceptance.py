"""End-to-end checks behind `sofic-dim verify`; each returns a pass flag and a short detail."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .almost_equiv import generator_words, random_contraction, span_basis, tuple_to_map
from .betti import betti1_estimate, build_complex
from .errors import PreconditionError
from .groups import IDENTITY, Word, cyclic_group, free_group
from .lp_linalg import LpMatrix, trace_monotone_check, truncation_bound, volume_ratio_sequence
from .parallel import rng_stream
from .pipeline import (
    PipelineProblem,
    ScheduleEntry,
    brackets_intersect,
    dim_pipeline,
    rep_from_spec,
    tuple_from_spec,
)
from .sofic import random_perm_model
from .tree_calculus import (
    EdgeFunction,
    averaging_operator,
    boundary,
    flow_generator,
    flow_power_sum,
    hodge_decompose,
    interpolated_constant,
    laplacian_solve,
    source_push,
    tree_ball,
)


TRACE_EXPONENTS = (0.5, 1.0, 2.0, 3.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _finite_group_problem(quick: bool) -> PipelineProblem:
    rep = rep_from_spec("character:1,2", cyclic_group(3))
    return PipelineProblem(
        generating=tuple_from_spec("1,2", rep),
        degrees=(60, 120) if quick else (60, 120, 300),
        seeds=(1,),
        schedule=(ScheduleEntry("generators", 1, 0.1),),
        epsilons=(0.25,),
        witnesses=4,
        modes=("hom", "vect"),
    )


def check_finite_group(quick: bool = False) -> tuple[bool, str]:
    table = dim_pipeline(_finite_group_problem(quick))
    hom = table[table["mode"] == "hom"]
    target = 2 / 3
    contains = (hom["normalized_upper"] >= target - 1e-9) & (
        hom["normalized_lower"] <= target + 1e-9
    )
    width = (hom["normalized_upper"] - hom["normalized_lower"]).max()
    lower = hom["normalized_lower"].min()
    passed = bool(contains.all() and width <= 0.2 and lower >= target - 0.05)
    return passed, f"width={width:.4f} lower={lower:.4f}"


def check_formulations_agree(quick: bool = False) -> tuple[bool, str]:
    problem = _finite_group_problem(quick)
    table = dim_pipeline(problem)
    agree = [brackets_intersect(table, eps) for eps in problem.epsilons]
    return all(agree), f"eps={list(problem.epsilons)}"


def check_zcase(quick: bool = False) -> tuple[bool, str]:
    rep = rep_from_spec("trivial", free_group(1))
    problem = PipelineProblem(
        generating=tuple_from_spec("1", rep),
        degrees=(100,) if quick else (100, 200),
        seeds=(1, 2),
        schedule=(ScheduleEntry("generators", 1, 0.1),),
        epsilons=(0.25,),
        witnesses=6,
        folner=50,
        compression=(2, 4, 8),
    )
    table = dim_pipeline(problem)
    slack = table["normalized_upper"] - 1 / table["blocks"]
    nontrivial = bool(((table["admitted"] > 0) & (table["upper"] > 0)).all())
    passed = nontrivial and bool((slack <= 0.05).all())
    return passed, f"max(upper - 1/k)={slack.max():.4f} min_upper={table['upper'].min()}"


def check_betti(quick: bool = False) -> tuple[bool, str]:
    seeds = range(1, 4 if quick else 11)
    details = []
    passed = True
    for n in (2, 3):
        connected = 0
        for seed in seeds:
            complex_ = build_complex(random_perm_model(n, 400, seed))
            report = betti1_estimate(complex_)
            passed &= report.estimate == n - 1 + Fraction(complex_.components, 400)
            connected += complex_.components == 1
        passed &= connected >= 0.8 * len(seeds)
        details.append(f"n={n} connected={connected}/{len(seeds)}")
    return passed, ", ".join(details)


def check_flow_generator(quick: bool = False) -> tuple[bool, str]:
    ball = tree_ball(2, 6)
    f = flow_generator(ball, exact=True)
    a, b = Word.generator(0), Word.generator(1)
    values = [f.at(IDENTITY, a), f.at(a, a * a), f.at(a * b, a * b * b)]
    divergence_free = all(value == 0 for value in boundary(f)[ball.interior])
    closed_form = f.power_sum(2) == flow_power_sum(2, 6)
    pushes = [source_push(f, level).central_values()[0] for level in (2, 3)]
    passed = (
        values == [1, Fraction(1, 3), Fraction(1, 9)]
        and divergence_free
        and closed_form
        and pushes == [Fraction(4, 3), Fraction(13, 9)]
    )
    return passed, f"values={[str(v) for v in values]} pushes={[str(v) for v in pushes]}"


def check_hodge(quick: bool = False) -> tuple[bool, str]:
    ball = tree_ball(2, 6)
    operator = averaging_operator(ball)
    rng = rng_stream(0, "acceptance-hodge")
    worst_residual = 0.0
    worst_gap = 0.0
    identity_ok = True
    for _ in range(10 if quick else 100):
        f = EdgeFunction(ball, rng.standard_normal(ball.edge_count))
        parts = hodge_decompose(f, "direct")
        identity_ok &= bool(np.allclose((parts.harmonic + parts.exact_part).values, f.values))
        worst_residual = max(worst_residual, parts.interior_residual)
        divergence = boundary(f)
        divergence[~ball.interior] = 0.0
        neumann = laplacian_solve(divergence, ball, "neumann", operator)
        worst_gap = max(worst_gap, float(np.max(np.abs(neumann - parts.potential))))
    passed = identity_ok and worst_residual < 1e-8 and worst_gap < 1e-9
    return passed, f"residual={worst_residual:.2e} solver_gap={worst_gap:.2e}"


def check_spectral_gap(quick: bool = False) -> tuple[bool, str]:
    radii = (6, 8) if quick else (6, 8, 10)
    operators = [averaging_operator(tree_ball(2, radius)) for radius in radii]
    norms = [op.truncated_norm for op in operators]
    limits = [op.limit for op in operators]
    stable = max(limits) - min(limits) < 5e-4
    interpolated = [interpolated_constant(norms[-1], p) for p in (1.25, 1.5)]
    passed = max(norms) < 0.92 and max(limits) < 0.92 and stable and max(interpolated) < 1
    return passed, f"norms={[round(v, 4) for v in norms]} limit={limits[-1]:.4f}"


def _random_matrix(rng: np.random.Generator, dimension: int) -> np.ndarray:
    return rng.standard_normal((dimension, dimension)) + 1j * rng.standard_normal(
        (dimension, dimension)
    )


def check_functional_calculus(quick: bool = False) -> tuple[bool, str]:
    rng = rng_stream(0, "acceptance-calculus")
    count = 100 if quick else 1000
    violations = 0
    for _ in range(count):
        dimension = int(rng.integers(1, 13))
        a = _random_matrix(rng, dimension)
        bump = _random_matrix(rng, dimension)
        b = LpMatrix(a).modulus.entries + bump @ bump.conj().T
        for beta in TRACE_EXPONENTS:
            violations += not trace_monotone_check(a, b, beta)
    checked = 0
    for _ in range(5 * count):
        if checked >= count:
            break
        dimension = int(rng.integers(2, 13))
        p = float(rng.choice([1.0, 2.0, 4.0]))
        basis, _ = np.linalg.qr(_random_matrix(rng, dimension))
        rank = int(rng.integers(0, dimension + 1))
        q = basis[:, :rank] @ basis[:, :rank].conj().T
        noise = _random_matrix(rng, dimension)
        noise = (noise + noise.conj().T) / 2
        a = q + 0.02 * noise / np.linalg.norm(noise, 2)
        c = _random_matrix(rng, dimension)
        b = q @ c / np.linalg.norm(c, 2) + 0.01 * np.eye(dimension)
        try:
            result = truncation_bound(a, b, q, p=p, delta=0.3, eta=0.3)
        except PreconditionError:
            continue
        checked += 1
        violations += (not result.residual_ok) + (not result.trace_ok)
    passed = violations == 0 and checked >= count // 2
    return passed, f"violations={violations} instances={checked}"


def check_perturbation(quick: bool = False) -> tuple[bool, str]:
    group = cyclic_group(3)
    rep = rep_from_spec("character:1,2", group)
    generating = tuple_from_spec("1,2", rep)
    basis = span_basis(rep, generating, generator_words(group), 1)
    rng = rng_stream(0, "acceptance-perturbation")
    worst_norm = 0.0
    worst_deviation = 0.0
    eps = 0.2
    for _ in range(20 if quick else 100):
        t0 = random_contraction(rng, 24, 2)
        witness = tuple_to_map(basis, t0 @ basis.product_vectors, delta=0.05, eps=eps)
        worst_norm = max(worst_norm, witness.operator_norm)
        worst_deviation = max(worst_deviation, float(np.max(witness.deviations)))
    passed = worst_norm <= 1 + 1e-9 and worst_deviation < eps
    return passed, f"norm={worst_norm:.6f} deviation={worst_deviation:.4f}"


def check_volume_ratio(quick: bool = False) -> tuple[bool, str]:
    rows = volume_ratio_sequence(0.5, list(range(2, 201)))
    ratios = np.array([row.ratio for row in rows])
    steps = np.abs(np.diff(ratios))
    passed = bool(np.isfinite(ratios).all() and steps[-1] < 1e-3)
    return passed, f"max={ratios.max():.6f} last_step={steps[-1]:.2e}"


CHECKS: tuple[tuple[str, Callable[[bool], tuple[bool, str]]], ...] = (
    ("finite-group", check_finite_group),
    ("zcase", check_zcase),
    ("betti", check_betti),
    ("flow-generator", check_flow_generator),
    ("hodge", check_hodge),
    ("spectral-gap", check_spectral_gap),
    ("functional-calculus", check_functional_calculus),
    ("perturbation", check_perturbation),
    ("formulations", check_formulations_agree),
    ("volume-ratio", check_volume_ratio),
)


def run_checks(quick: bool = False, names: tuple[str, ...] = ()) -> list[CheckResult]:
    results = []
    for name, check in CHECKS:
        if names and name not in names:
            continue
        try:
            passed, detail = check(quick)
        except Exception as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results
