"""Experiment builders over (degree, seed) cells: defect runs, dimension brackets, probes."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Any, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from .almost_equiv import (
    GeneratingTuple,
    LinearWitness,
    SpanBasis,
    alpha_blocks,
    folner_average,
    folner_window,
    hom_defect,
    multiplication_probe,
    parse_word_set,
    probe_estimate,
    progression_basis,
    random_contraction,
    span_basis,
    tuple_to_map,
    vect_check,
    zcase_compress,
)
from .cache import CellCache
from .eps_dim import (
    BlockNorm,
    BlockProjection,
    CoreCertificate,
    CoverSubspace,
    DimEstimate,
    ProductNorm,
    SampleCloud,
    deps_lower_riesz,
    deps_upper,
    eps_contains,
)
from .errors import IllConditionedError, PreconditionError
from .groups import (
    FinRep,
    GroupSpec,
    character_rep,
    enumerate_ball,
    is_diagonal,
    trivial_rep,
)
from .parallel import ordered_map, rng_stream
from .sofic import (
    SoficMap,
    build_model,
    cyclic_character,
    defect_report,
    isotypic_projection,
    permute,
)

MODES = ("hom", "vect")
DEFAULT_EPSILONS = (0.5, 0.25, 0.1)
GROUP_KEYS = ["mode", "schedule", "blocks", "eps", "seed"]

DIM_COLUMNS = [
    "mode",
    "degree",
    "seed",
    "schedule",
    "length",
    "delta",
    "blocks",
    "eps",
    "sampled",
    "admitted",
    "mapped",
    "upper",
    "lower",
    "normalized_upper",
    "normalized_lower",
    "upper_strategy",
    "lower_route",
    "empirical",
]


@dataclass(frozen=True)
class ScheduleEntry:
    """One (F, m, delta) triple; F is a word-set spec."""

    words: str = "generators"
    length: int = 1
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.length < 1:
            raise PreconditionError("schedule word length m must be at least 1")
        if not self.delta > 0:
            raise PreconditionError("schedule delta must be positive")

    @property
    def text(self) -> str:
        return f"{self.words}:{self.length}:{self.delta:g}"


DEFAULT_SCHEDULE = tuple(
    ScheduleEntry("generators", length, delta)
    for length in (1, 2)
    for delta in (0.1, 0.03, 0.01)
)


def parse_schedule_entry(text: str) -> ScheduleEntry:
    """`generators:2:0.1` or `words:a;b^-1:1:0.05`."""
    parts = str(text).strip().rsplit(":", 2)
    if len(parts) != 3 or not parts[0]:
        raise PreconditionError(f"schedule entry {text!r} is not F:m:delta")
    try:
        length = int(parts[1])
        delta = float(parts[2])
    except ValueError as exc:
        raise PreconditionError(f"schedule entry {text!r} is not F:m:delta") from exc
    return ScheduleEntry(parts[0], length, delta)


def rep_from_spec(text: str, group: GroupSpec) -> FinRep:
    """`character:1,2` (cyclic groups), `trivial` or `trivial:dim`."""
    kind, _, rest = str(text).strip().partition(":")
    kind = kind.strip().lower()
    if kind == "character":
        try:
            characters = [int(item) for item in rest.split(",") if item.strip()]
        except ValueError as exc:
            raise PreconditionError(f"invalid character list {rest!r}") from exc
        if not characters:
            raise PreconditionError("character representation needs at least one character")
        return character_rep(group, characters)
    if kind == "trivial":
        dimension = int(rest) if rest.strip() else 1
        if dimension < 1:
            raise PreconditionError("representation dimension must be positive")
        return trivial_rep(group, dimension)
    raise PreconditionError(f"invalid representation spec {text!r}")


def tuple_from_spec(text: str | None, rep: FinRep, p: float = 2.0) -> GeneratingTuple:
    """`1,2` gives x_j = c_j e_j; empty gives the standard basis."""
    if text is None or not str(text).strip():
        coefficients = [1.0] * rep.dimension
    else:
        try:
            coefficients = [float(item) for item in str(text).split(",") if item.strip()]
        except ValueError as exc:
            raise PreconditionError(f"invalid vector coefficients {text!r}") from exc
    if not coefficients or len(coefficients) > rep.dimension:
        raise PreconditionError(
            f"need between 1 and {rep.dimension} vector coefficients, got {len(coefficients)}"
        )
    vectors = np.zeros((len(coefficients), rep.dimension))
    for j, value in enumerate(coefficients):
        vectors[j, j] = value
    return GeneratingTuple(rep, vectors, p)


@dataclass(frozen=True, eq=False)
class PipelineProblem:
    generating: GeneratingTuple
    degrees: tuple[int, ...]
    seeds: tuple[int, ...]
    schedule: tuple[ScheduleEntry, ...] = DEFAULT_SCHEDULE
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    witnesses: int = 16
    constructed: bool = True
    folner: int = 0
    compression: tuple[int, ...] = ()
    period: int = 1
    modes: tuple[str, ...] = ("hom",)
    p: float = 2.0
    rho: ProductNorm = field(default_factory=ProductNorm)
    trials: int = 32

    def __post_init__(self) -> None:
        if self.generating.rep.group is None:
            raise PreconditionError("the representation must name its group")
        for name in ("degrees", "seeds", "schedule", "epsilons", "modes"):
            if not getattr(self, name):
                raise PreconditionError(f"{name} must not be empty")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise PreconditionError(f"unknown pipeline modes {sorted(unknown)}")
        if self.witnesses < 0:
            raise PreconditionError("witness count must be non-negative")

    @property
    def group(self) -> GroupSpec:
        return self.generating.rep.group  # type: ignore[return-value]


def isotypic_core(
    generating: GeneratingTuple, sofic_map: SoficMap, rho: ProductNorm, p: float = 2.0
) -> CoreCertificate | None:
    """Block-equivariant witnesses x_j -> u_j in the isotypic subspace of x_j's character.

    Applies to diagonal character representations of cyclic groups when each x_j sits on its
    own coordinate with its own character; the certified radius is min_j w_j |x_j|.
    """
    rep = generating.rep
    group = rep.group
    if p != 2 or group is None or group.kind != "cyclic" or not is_diagonal(rep):
        return None
    order = int(group.order)  # type: ignore[arg-type]
    angles = np.angle(np.diag(rep.matrices[0]))
    characters = np.round(angles * order / (2 * np.pi)).astype(int) % order
    weights = rho.weight_vector(generating.size)
    blocks: list[np.ndarray] = []
    radii: list[float] = []
    used: set[tuple[str, int]] = set()
    for j, vector in enumerate(generating.vectors):
        support = np.flatnonzero(np.abs(vector) > 1e-12)
        if support.size != 1:
            return None
        coordinate = int(support[0])
        character = int(characters[coordinate])
        if ("coordinate", coordinate) in used or ("character", character) in used:
            return None
        used.update({("coordinate", coordinate), ("character", character)})
        blocks.append(isotypic_projection(sofic_map, cyclic_character(order, character)))
        radii.append(float(weights[j] * abs(vector[coordinate])))
    return CoreCertificate(BlockProjection(tuple(blocks), p), min(radii))


def sample_witnesses(
    basis: SpanBasis,
    sofic_map: SoficMap,
    rep: FinRep,
    count: int,
    folner: int,
    rng: np.random.Generator,
    p: float = 2.0,
) -> list[LinearWitness]:
    """Random contractions, Folner-averaged when the group is finite or Z.

    On Z the average is taken twice and rescaled to operator norm one.
    """
    group = rep.group
    amenable = group is not None and (group.is_finite or group.rank == 1)
    window = folner_window(group, folner) if amenable else None
    witnesses = []
    for _ in range(count):
        witness = LinearWitness(basis, random_contraction(rng, sofic_map.degree, basis.rank), p)
        if window is not None:
            witness = folner_average(witness, window, sofic_map, rep)
            if not group.is_finite:
                witness = _unit_witness(folner_average(witness, window, sofic_map, rep))
        witnesses.append(witness)
    return witnesses


def _unit_witness(witness: LinearWitness) -> LinearWitness:
    scale = witness.operator_norm
    if scale == 0:
        return witness
    return LinearWitness(witness.basis, witness.matrix / scale, witness.p)


def _core_points(
    core: CoreCertificate, norm: BlockNorm, count: int, rng: np.random.Generator, size: int
) -> np.ndarray:
    points = core.projection.sample(rng, count, size)
    lengths = norm.norms(points)
    keep = lengths > 0
    points = points[keep] / lengths[keep][:, None]
    scale = core.radius * rng.uniform(size=(points.shape[0], 1))
    return points * scale


def _perturb(
    xi: np.ndarray, delta: float, p: float, rng: np.random.Generator
) -> np.ndarray:
    noise = rng.standard_normal(xi.shape) + 1j * rng.standard_normal(xi.shape)
    noise /= np.linalg.norm(noise, ord=p, axis=1, keepdims=True)
    return xi + noise * (delta / 4)


def _progression_cover(
    degree: int, tuple_size: int, period: int, blocks: int
) -> CoverSubspace | None:
    try:
        basis, _, _ = progression_basis(degree, period, blocks)
    except PreconditionError:
        return None
    return CoverSubspace(scipy.linalg.block_diag(*([basis] * tuple_size)), None, "zcase")


@dataclass
class _ModeCloud:
    cloud: SampleCloud
    sampled: int
    admitted: int
    tuples: list[np.ndarray]


def _witness_cloud(
    problem: PipelineProblem,
    mode: str,
    entry: ScheduleEntry,
    sofic_map: SoficMap,
    witnesses: list[LinearWitness],
    core: CoreCertificate | None,
    rng: np.random.Generator,
) -> _ModeCloud:
    generating = problem.generating
    degree = sofic_map.degree
    words = parse_word_set(entry.words, problem.group)
    norm = BlockNorm(problem.rho, degree, problem.p)
    size = generating.size * degree

    tuples: list[np.ndarray] = []
    tags: list[str] = []
    sampled = 0
    if mode == "hom":
        for witness in witnesses:
            sampled += 1
            defect = hom_defect(witness, generating, sofic_map, words, entry.length)
            if defect < entry.delta:
                tuples.append(alpha_blocks(witness, generating, generating.size))
                tags.append("sampled")
    else:
        candidates = [
            witness.apply(generating.vectors.T).T for witness in witnesses
        ]
        candidates += [_perturb(xi, entry.delta, problem.p, rng) for xi in list(candidates)]
        for xi in candidates:
            sampled += 1
            verdict = vect_check(
                generating,
                xi,
                words,
                entry.length,
                entry.delta,
                sofic_map,
                trials=problem.trials,
                p=problem.p,
                rng=rng,
            )
            if verdict.passed:
                tuples.append(xi.reshape(-1))
                tags.append("sampled")
    admitted = len(tuples)
    if core is not None:
        count = max(1, problem.witnesses // 2)
        for point in _core_points(core, norm, count, rng, size):
            tuples.append(point)
            tags.append("constructed")
    points = np.array(tuples, dtype=complex) if tuples else np.zeros((0, size), dtype=complex)
    cloud = SampleCloud(points, norm, tuple(tags), core)
    return _ModeCloud(cloud, sampled, admitted, tuples[:admitted])


def _mapped_count(
    problem: PipelineProblem,
    entry: ScheduleEntry,
    sofic_map: SoficMap,
    tuples: Sequence[np.ndarray],
    eps: float,
) -> int:
    """Admitted Vect tuples that tuple_to_map turns into a Hom witness at this eps."""
    generating = problem.generating
    words = parse_word_set(entry.words, problem.group)
    basis = span_basis(generating.rep, generating, words, entry.length)
    mapped = 0
    for flat in tuples:
        xi = flat.reshape(generating.size, sofic_map.degree)
        targets = np.column_stack(
            [permute(sofic_map.product(word), xi[j]) for word, j in basis.products]
        )
        try:
            tuple_to_map(basis, targets, entry.delta, eps, problem.p)
        except (PreconditionError, IllConditionedError):
            continue
        mapped += 1
    return mapped


def _zcase_cover(
    problem: PipelineProblem,
    cloud: SampleCloud,
    sofic_map: SoficMap,
    eps: float,
    blocks: int,
) -> CoverSubspace | None:
    """Progression cover, when every block of every tuple compresses onto it within eps."""
    degree = sofic_map.degree
    size = problem.generating.size
    candidate = _progression_cover(degree, size, problem.period, blocks)
    if candidate is None:
        return None
    for point in cloud.points:
        for block in point.reshape(size, degree):
            try:
                compression = zcase_compress(
                    block, sofic_map, problem.period, blocks, eps, problem.p
                )
            except PreconditionError:
                return None
            if not compression.bound_ok:
                return None
    return candidate if eps_contains(candidate, cloud, eps) else None


def _bracket(
    problem: PipelineProblem,
    cloud: SampleCloud,
    eps: float,
    blocks: int,
    sofic_map: SoficMap,
    rng: np.random.Generator,
) -> DimEstimate:
    """Smallest of the plain cover and, with blocks, the progression cover."""
    degree = sofic_map.degree
    cover = deps_upper(cloud, eps, workers=1)
    if blocks and cloud.size:
        compressed = _zcase_cover(problem, cloud, sofic_map, eps, blocks)
        if compressed is not None and compressed.dimension < cover.dimension:
            cover = compressed
    riesz = None
    if cloud.core is not None:
        riesz = deps_lower_riesz(cloud, None, cloud.core.projection, eps, rng=rng)
    return DimEstimate(
        eps=eps,
        upper=cover.dimension,
        upper_strategy=cover.strategy,
        riesz=riesz,
        degree=degree,
        normalization=float(degree),
        subspace=cover,
    )


def dim_cell(problem: PipelineProblem, degree: int, seed: int) -> list[dict[str, Any]]:
    """All rows of one (degree, seed) cell."""
    generating = problem.generating
    rep = generating.rep
    sofic_map = build_model(problem.group, degree, seed)
    core = None
    if problem.constructed:
        core = isotypic_core(generating, sofic_map, problem.rho, problem.p)
    rows: list[dict[str, Any]] = []
    for index, entry in enumerate(problem.schedule):
        rng = rng_stream(seed, f"witness:{degree}:{index}")
        words = parse_word_set(entry.words, problem.group)
        basis = span_basis(rep, generating, words, entry.length)
        witnesses = sample_witnesses(
            basis, sofic_map, rep, problem.witnesses, problem.folner, rng, problem.p
        )
        for mode in problem.modes:
            mode_cloud = _witness_cloud(problem, mode, entry, sofic_map, witnesses, core, rng)
            for blocks in problem.compression or (0,):
                for eps in problem.epsilons:
                    result = _bracket(problem, mode_cloud.cloud, eps, blocks, sofic_map, rng)
                    mapped = None
                    if mode == "vect":
                        mapped = _mapped_count(problem, entry, sofic_map, mode_cloud.tuples, eps)
                    rows.append(
                        {
                            "mode": mode,
                            "degree": degree,
                            "seed": seed,
                            "schedule": entry.text,
                            "length": entry.length,
                            "delta": entry.delta,
                            "blocks": blocks,
                            "eps": eps,
                            "sampled": mode_cloud.sampled,
                            "admitted": mode_cloud.admitted,
                            "mapped": mapped,
                            "upper": result.upper,
                            "lower": result.lower,
                            "normalized_upper": result.normalized_upper,
                            "normalized_lower": result.normalized_lower,
                            "upper_strategy": result.upper_strategy,
                            "lower_route": result.riesz.route if result.riesz else "",
                            "empirical": mode == "vect",
                        }
                    )
    return rows


def add_running_bounds(table: pd.DataFrame) -> pd.DataFrame:
    """limsup proxy: running max of the upper bound over degrees; liminf: running min of lower."""
    table = table.copy()
    table["normalized_lower"] = pd.to_numeric(table["normalized_lower"], errors="coerce")
    if table.empty:
        table["limsup_upper"] = pd.Series(dtype=float)
        table["liminf_lower"] = pd.Series(dtype=float)
        return table
    ordered = table.sort_values("degree", kind="stable")
    grouped = ordered.groupby(GROUP_KEYS, sort=False)
    table["limsup_upper"] = grouped["normalized_upper"].cummax()
    table["liminf_lower"] = grouped["normalized_lower"].transform(
        lambda values: values.fillna(0.0).cummin()
    )
    return table


def dim_pipeline(
    problem: PipelineProblem,
    workers: int | None = None,
    cache: CellCache | None = None,
    manifest_hash: str = "",
) -> pd.DataFrame:
    cells = [(degree, seed) for degree in problem.degrees for seed in problem.seeds]

    def run(cell: tuple[int, int]) -> pd.DataFrame:
        degree, seed = cell
        key = f"d{degree}-s{seed}"
        if cache is not None:
            cached = cache.load("epsdim", manifest_hash, key)
            if cached is not None:
                return cached
        frame = pd.DataFrame(dim_cell(problem, degree, seed), columns=DIM_COLUMNS)
        if cache is not None:
            cache.store("epsdim", manifest_hash, key, frame)
        return frame

    frames = ordered_map(run, cells, workers)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=DIM_COLUMNS)
    return add_running_bounds(table)


def summarize_brackets(table: pd.DataFrame) -> pd.DataFrame:
    """Median bracket over seeds per (mode, schedule, blocks, eps, degree)."""
    keys = ["mode", "schedule", "blocks", "eps", "degree"]
    summary = (
        table.groupby(keys, sort=False)
        .agg(
            normalized_lower=("normalized_lower", "median"),
            normalized_upper=("normalized_upper", "median"),
            limsup_upper=("limsup_upper", "max"),
            liminf_lower=("liminf_lower", "min"),
            seeds=("seed", "nunique"),
        )
        .reset_index()
    )
    return summary


def brackets_intersect(table: pd.DataFrame, eps: float) -> bool:
    """Do the Hom and Vect brackets share a point at this eps (missing lower bound = 0)?"""
    rows = table[np.isclose(table["eps"].astype(float), eps)]
    bounds = {}
    for mode in MODES:
        subset = rows[rows["mode"] == mode]
        if subset.empty:
            return False
        lower = pd.to_numeric(subset["normalized_lower"], errors="coerce").fillna(0.0)
        bounds[mode] = (float(lower.max()), float(subset["normalized_upper"].min()))
    low = max(bound[0] for bound in bounds.values())
    high = min(bound[1] for bound in bounds.values())
    return low <= high + 1e-12


APPROX_COLUMNS = [
    "degree",
    "seed",
    "model",
    "words",
    "defect",
    "freeness",
    "pairs",
    "distinct_pairs",
    "worst_pair",
]


def approx_words(group: GroupSpec, radius: int) -> list:
    if group.is_finite:
        return list(group.element_words.values())
    return enumerate_ball(group, radius)


def approx_table(
    group: GroupSpec,
    degrees: Sequence[int],
    seeds: Sequence[int],
    radius: int = 2,
    workers: int | None = None,
) -> pd.DataFrame:
    """Defect and freeness of the model for every (degree, seed) cell."""
    words = approx_words(group, radius)
    cells = [(degree, seed) for degree in degrees for seed in seeds]

    def run(cell: tuple[int, int]) -> dict[str, Any]:
        degree, seed = cell
        sofic_map = build_model(group, degree, seed, radius=max(radius, 1) * 2)
        report = defect_report(sofic_map, words)
        return {
            "degree": degree,
            "seed": seed,
            "model": sofic_map.model,
            "words": len(words),
            "defect": report.defect,
            "freeness": report.freeness,
            "pairs": report.pairs,
            "distinct_pairs": report.distinct_pairs,
            "worst_pair": " | ".join(report.worst_pair) if report.worst_pair else "",
        }

    return pd.DataFrame(ordered_map(run, cells, workers), columns=APPROX_COLUMNS)


def defect_quantiles(table: pd.DataFrame) -> pd.DataFrame:
    quantiles = (
        table.groupby("degree")[["defect", "freeness"]]
        .quantile([0.0, 0.5, 1.0])
        .unstack()
    )
    quantiles.columns = [f"{name}_q{int(q * 100)}" for name, q in quantiles.columns]
    return quantiles.reset_index()


PROBE_COLUMNS = [
    "degree",
    "seed",
    "eps",
    "trace",
    "max_defect",
    "upper",
    "lower",
    "normalized_upper",
    "normalized_lower",
    "lower_route",
]


def parse_coefficients(text: str) -> dict[int, complex]:
    """`0:0.5,2:0.5` gives the group-algebra element 0.5 e + 0.5 a^2."""
    coefficients: dict[int, complex] = {}
    for item in str(text).split(","):
        if not item.strip():
            continue
        element, sep, value = item.partition(":")
        if not sep:
            raise PreconditionError(f"coefficient {item!r} is not element:value")
        try:
            coefficients[int(element)] = complex(value.strip())
        except ValueError as exc:
            raise PreconditionError(f"coefficient {item!r} is not element:value") from exc
    return coefficients


def probe_table(
    group: GroupSpec,
    coefficients: dict[int, complex],
    degrees: Sequence[int],
    seeds: Sequence[int],
    epsilons: Sequence[float],
    samples: int = 8,
    p: float = 2.0,
    workers: int | None = None,
) -> pd.DataFrame:
    """Multiplication-action probe bracket normalized by d^2, one row per cell and eps."""
    words = parse_word_set("generators", group)
    cells = [(degree, seed) for degree in degrees for seed in seeds]

    def run(cell: tuple[int, int]) -> list[dict[str, Any]]:
        degree, seed = cell
        sofic_map = build_model(group, degree, seed)
        probe = multiplication_probe(
            coefficients, sofic_map, samples, p, words, rng_stream(seed, f"probe:{degree}")
        )
        trace = float(np.trace(probe.projection).real) / degree
        out = []
        for eps in epsilons:
            result = probe_estimate(probe, eps, workers=1)
            out.append(
                {
                    "degree": degree,
                    "seed": seed,
                    "eps": eps,
                    "trace": trace,
                    "max_defect": float(probe.defects.max()) if probe.defects.size else 0.0,
                    "upper": result.upper,
                    "lower": result.lower,
                    "normalized_upper": result.normalized_upper,
                    "normalized_lower": result.normalized_lower,
                    "lower_route": result.riesz.route if result.riesz else "",
                }
            )
        return out

    rows = [row for chunk in ordered_map(run, cells, workers) for row in chunk]
    return pd.DataFrame(rows, columns=PROBE_COLUMNS)


def finite_dimension_value(rep: FinRep) -> float:
    """dim X / |G| for a finite group."""
    group = rep.group
    if group is None or not group.is_finite:
        raise PreconditionError("the closed form needs a finite group")
    return rep.dimension / len(group.elements())


def zcase_bound(blocks: int) -> float:
    return 1.0 / blocks if blocks else math.inf
