"""Almost-equivariant witnesses: span bases, Hom/Vect checks, averaging and compression."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as cartesian
import math
from typing import Hashable, Mapping, Sequence
import warnings

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, IllConditionedError, PreconditionError
from .eps_dim import (
    CoreCertificate,
    DimEstimate,
    LeftMultiplication,
    SampleCloud,
    SchattenNorm,
    deps_lower_packing,
    deps_lower_riesz,
    deps_upper,
)
from .groups import IDENTITY, FinRep, GroupSpec, Word, parse_word, rep_apply
from .lp_linalg import Interval, schatten_norm, spectral_truncate
from .sofic import SoficMap, permutation_isometry, permute

SPAN_TOLERANCE = 1e-10
CONDITION_LIMIT = 1e8
ASCENT_STEPS = 200


@dataclass(frozen=True, eq=False)
class GeneratingTuple:
    rep: FinRep
    vectors: np.ndarray
    p: float = 2.0
    bound: float | None = None

    def __post_init__(self) -> None:
        vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if vectors.shape[1] != self.rep.dimension:
            raise DimensionMismatchError(
                f"vectors have dimension {vectors.shape[1]}, representation {self.rep.dimension}"
            )
        norms = np.linalg.norm(vectors, ord=self.p, axis=1)
        if self.bound is not None and np.any(norms > self.bound + 1e-12):
            raise PreconditionError(f"generating vectors exceed the declared bound {self.bound}")
        object.__setattr__(self, "vectors", vectors)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def generator_words(group: GroupSpec) -> list[Word]:
    words: list[Word] = []
    for gen in range(group.rank):
        words.append(Word.generator(gen, 1))
        words.append(Word.generator(gen, -1))
    return words


def parse_word_set(text: str, group: GroupSpec) -> list[Word]:
    """`generators` or `words:a;b^-1;...`."""
    stripped = text.strip()
    if stripped == "generators":
        return generator_words(group)
    if stripped.startswith("words:"):
        return [parse_word(item, group.labels) for item in stripped[6:].split(";") if item.strip()]
    raise PreconditionError(f"unknown word set {text!r}")


def product_tuples(words: Sequence[Word], length: int) -> list[Word]:
    """Concatenations g1...g_length with each g in words or e, without repeats."""
    alphabet = [IDENTITY, *words]
    seen: dict[tuple, Word] = {}
    for combo in cartesian(alphabet, repeat=length):
        word = IDENTITY
        for letter in combo:
            word = word.concat(letter)
        seen.setdefault(word.letters, word)
    return sorted(seen.values(), key=Word.sort_key)


def bounded_words(words: Sequence[Word], length: int) -> list[Word]:
    """Products of 1..length words from the set."""
    out: list[Word] = []
    for k in range(1, length + 1):
        for combo in cartesian(words, repeat=k):
            word = IDENTITY
            for letter in combo:
                word = word.concat(letter)
            out.append(word)
    return out


@dataclass(frozen=True, eq=False)
class SpanBasis:
    q: np.ndarray
    labels: tuple[tuple[Word, int], ...]
    products: tuple[tuple[Word, int], ...]
    product_vectors: np.ndarray

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    @property
    def ambient(self) -> int:
        return self.q.shape[0]

    def coordinates(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=complex)
        coords = self.q.conj().T @ vectors
        leftover = vectors - self.q @ coords
        scale = max(1.0, float(np.max(np.abs(vectors)))) if vectors.size else 1.0
        if leftover.size and np.max(np.abs(leftover)) > 1e-8 * scale:
            raise DimensionMismatchError("vector lies outside the span")
        return coords


def span_basis(
    rep: FinRep, generating: GeneratingTuple, words: Sequence[Word], length: int
) -> SpanBasis:
    """Orthonormal basis of span{g x_j : g a product of at most `length` words}."""
    if rep.dimension != generating.rep.dimension:
        raise DimensionMismatchError("representation and tuple disagree on dimension")
    tuples = product_tuples(words, length)
    products: list[tuple[Word, int]] = []
    columns: list[np.ndarray] = []
    for word in tuples:
        images = rep_apply(rep, word, generating.vectors.T)
        for j in range(generating.size):
            products.append((word, j))
            columns.append(images[:, j])
    product_vectors = np.column_stack(columns) if columns else np.zeros((rep.dimension, 0))

    basis: list[np.ndarray] = []
    labels: list[tuple[Word, int]] = []
    for label, column in zip(products, columns):
        residual = column.copy()
        for _ in range(2):
            for vector in basis:
                residual -= vector * np.vdot(vector, residual)
        length_ = np.linalg.norm(residual)
        if length_ > SPAN_TOLERANCE * max(1.0, np.linalg.norm(column)):
            basis.append(residual / length_)
            labels.append(label)
    q = np.column_stack(basis) if basis else np.zeros((rep.dimension, 0), dtype=complex)
    return SpanBasis(q, tuple(labels), tuple(products), product_vectors)


def _target_bound(matrix: np.ndarray, p: float) -> float:
    if matrix.size == 0:
        return 0.0
    spectral = float(np.linalg.norm(matrix, 2))
    if p == 2:
        return spectral
    exponent = max(0.0, 1.0 / p - 0.5) if not math.isinf(p) else 0.0
    return spectral * matrix.shape[0] ** exponent


@dataclass(frozen=True, eq=False)
class LinearWitness:
    """T from the span (Euclidean coordinates in basis.q) to l^p(d)."""

    basis: SpanBasis
    matrix: np.ndarray
    p: float = 2.0
    deviations: np.ndarray | None = None
    constant: float | None = None

    @property
    def degree(self) -> int:
        return self.matrix.shape[0]

    @property
    def operator_norm(self) -> float:
        """Exact for p=2, otherwise an upper bound."""
        return _target_bound(self.matrix, self.p)

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return self.matrix @ self.basis.coordinates(vectors)


def random_contraction(
    rng: np.random.Generator, rows: int, cols: int, complex_field: bool = True
) -> np.ndarray:
    values = rng.standard_normal((rows, cols))
    if complex_field:
        values = values + 1j * rng.standard_normal((rows, cols))
    norm = np.linalg.norm(values, 2)
    return values / norm if norm > 0 else values


def _perm_apply(
    sofic_map: SoficMap, word: Word, values: np.ndarray, direct: bool = False
) -> np.ndarray:
    perm = sofic_map.image(word) if direct else sofic_map.product(word)
    return permute(perm, values)


def hom_defect(
    witness: LinearWitness,
    generating: GeneratingTuple,
    sofic_map: SoficMap,
    words: Sequence[Word],
    length: int,
    restrict_to: np.ndarray | None = None,
) -> float:
    """max ||T(g x_j) - sigma(g1)...sigma(gk) T(x_j)||_p over products of at most `length` words."""
    rep = generating.rep
    if witness.degree != sofic_map.degree:
        raise DimensionMismatchError("witness and sofic map disagree on degree")
    base = witness.apply(generating.vectors.T)
    worst = 0.0
    for word in bounded_words(words, length):
        moved = witness.apply(rep_apply(rep, word, generating.vectors.T))
        pushed = _perm_apply(sofic_map, word, base)
        gap = moved - pushed
        if restrict_to is not None:
            gap = gap[restrict_to]
        if gap.size:
            worst = max(worst, float(np.max(np.linalg.norm(gap, ord=witness.p, axis=0))))
    return worst


def folner_average(
    witness: LinearWitness, window: Sequence[Word], sofic_map: SoficMap, rep: FinRep
) -> LinearWitness:
    """(1/|E|) sum_s sigma(s) T rep(s^-1) over the window E."""
    if not window:
        raise PreconditionError("averaging window must be non-empty")
    basis = witness.basis
    total = np.zeros_like(witness.matrix, dtype=complex)
    for word in window:
        moved = rep_apply(rep, word.inverse(), basis.q)
        inner = witness.matrix @ basis.coordinates(moved)
        total += _perm_apply(sofic_map, word, inner, direct=True)
    return LinearWitness(basis, total / len(window), witness.p)


def folner_window(group: GroupSpec, length: int) -> list[Word]:
    if group.is_finite:
        return list(group.element_words.values())
    if group.rank != 1:
        raise PreconditionError("Folner windows are built for Z and finite groups")
    return [Word.power(0, l) for l in range(max(1, length))]


@dataclass(frozen=True)
class VectVerdict:
    status: str
    max_violation: float
    trials: int
    delta: float
    certificate: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return self.status == "sampled-pass"


def _project_l1_ball(values: np.ndarray) -> np.ndarray:
    magnitude = np.abs(values)
    if magnitude.sum() <= 1.0:
        return values
    ordered = np.sort(magnitude)[::-1]
    cumulative = np.cumsum(ordered) - 1.0
    index = np.nonzero(ordered - cumulative / np.arange(1, ordered.size + 1) > 0)[0][-1]
    theta = cumulative[index] / (index + 1)
    shrunk = np.clip(magnitude - theta, 0.0, None)
    phase = np.zeros_like(values)
    mask = magnitude > 0
    phase[mask] = values[mask] / magnitude[mask]
    return shrunk * phase


def vect_check(
    generating: GeneratingTuple,
    xi: np.ndarray,
    words: Sequence[Word],
    length: int,
    delta: float,
    sofic_map: SoficMap,
    trials: int = 256,
    p: float = 2.0,
    rng: np.random.Generator | None = None,
) -> VectVerdict:
    """Search c with sum|c| <= 1 for ||sum c sigma(g)xi_j||_p - ||sum c g x_j|| > delta."""
    rng = rng or np.random.default_rng(0)
    xi = np.atleast_2d(np.asarray(xi, dtype=complex))
    if xi.shape != (generating.size, sofic_map.degree):
        raise DimensionMismatchError("xi must hold one vector of the degree per generating vector")
    rep = generating.rep
    targets: list[np.ndarray] = []
    sources: list[np.ndarray] = []
    for word in product_tuples(words, length):
        pushed = _perm_apply(sofic_map, word, xi.T)
        moved = rep_apply(rep, word, generating.vectors.T)
        for j in range(generating.size):
            targets.append(pushed[:, j])
            sources.append(moved[:, j])
    y = np.column_stack(targets)
    z = np.column_stack(sources)
    count = y.shape[1]

    def gap(c: np.ndarray) -> float:
        return float(np.linalg.norm(y @ c, ord=p) - np.linalg.norm(z @ c, ord=generating.p))

    best_value = -math.inf
    best: np.ndarray | None = None
    for index in range(count):
        c = np.zeros(count, dtype=complex)
        c[index] = 1.0
        value = gap(c)
        if value > best_value:
            best_value, best = value, c

    starts: list[tuple[float, np.ndarray]] = []
    for _ in range(trials):
        c = rng.standard_normal(count) + 1j * rng.standard_normal(count)
        c /= np.abs(c).sum()
        value = gap(c)
        starts.append((value, c))
        if value > best_value:
            best_value, best = value, c

    starts.sort(key=lambda item: item[0], reverse=True)
    for _, c in [(best_value, best), *starts[:3]]:
        current = np.array(c, dtype=complex)
        for step in range(1, ASCENT_STEPS + 1):
            up = y @ current
            down = z @ current
            grad = y.conj().T @ _norm_gradient(up, p)
            grad = grad - z.conj().T @ _norm_gradient(down, generating.p)
            if not np.any(grad):
                break
            current = _project_l1_ball(current + grad / (np.linalg.norm(grad) * math.sqrt(step)))
            value = gap(current)
            if value > best_value:
                best_value, best = value, current.copy()

    if best_value > delta:
        return VectVerdict("certified-fail", best_value, trials, delta, best)
    return VectVerdict("sampled-pass", best_value, trials, delta)


def _norm_gradient(vector: np.ndarray, p: float) -> np.ndarray:
    total = np.linalg.norm(vector, ord=p)
    if total == 0:
        return np.zeros_like(vector)
    magnitude = np.abs(vector)
    phase = np.zeros_like(vector)
    mask = magnitude > 0
    phase[mask] = vector[mask] / magnitude[mask]
    if math.isinf(p):
        out = np.zeros_like(vector)
        index = int(np.argmax(magnitude))
        out[index] = phase[index]
        return out
    return magnitude ** (p - 1) * phase / total ** (p - 1)


def tuple_to_map(
    basis: SpanBasis, targets: np.ndarray, delta: float, eps: float, p: float = 2.0
) -> LinearWitness:
    """Interpolate a contraction on a well-spread subset of the products.

    `targets` has one column per entry of basis.products. The result is scaled by
    1/(1 + C delta), C the l1 coefficient constant of the chosen subset.
    """
    targets = np.asarray(targets, dtype=complex)
    vectors = basis.product_vectors
    if targets.shape[1] != vectors.shape[1]:
        raise DimensionMismatchError("one target per listed product is required")
    rank = basis.rank
    if rank == 0:
        matrix = np.zeros((targets.shape[0], 0), dtype=complex)
        return LinearWitness(basis, matrix, p, np.linalg.norm(targets, ord=p, axis=0), 0.0)
    _, _, pivots = scipy.linalg.qr(vectors, pivoting=True, mode="economic")
    chosen = pivots[:rank]
    coords = basis.q.conj().T @ vectors[:, chosen]
    singular = np.linalg.svd(coords, compute_uv=False)
    if singular[-1] == 0 or singular[0] / singular[-1] > CONDITION_LIMIT:
        raise IllConditionedError("chosen products are too close to dependent")
    constant = math.sqrt(rank) / singular[-1]
    interpolant = targets[:, chosen] @ np.linalg.inv(coords)
    scale = 1.0 + constant * delta
    norm = _target_bound(interpolant, p)
    if norm > scale * (1 + 1e-9):
        if p == 2:
            raise PreconditionError(
                f"interpolant norm {norm:.6g} exceeds 1 + C delta = {scale:.6g}"
            )
        warnings.warn(
            f"interpolant norm bound {norm:.6g} exceeds 1 + C delta; contraction not certified",
            RuntimeWarning,
            stacklevel=2,
        )
    matrix = interpolant / scale
    deviations = np.linalg.norm(matrix @ (basis.q.conj().T @ vectors) - targets, ord=p, axis=0)
    if np.any(deviations >= eps):
        raise PreconditionError(f"deviation {float(deviations.max()):.6g} is not below eps={eps}")
    return LinearWitness(basis, matrix, p, deviations, constant)


def alpha_blocks(witness: LinearWitness, generating: GeneratingTuple, blocks: int) -> np.ndarray:
    """(T x_1, ..., T x_blocks) flattened into one block sequence."""
    used = generating.vectors[:blocks]
    return witness.apply(used.T).T.reshape(-1)


def progression_basis(degree: int, period: int, blocks: int) -> tuple[np.ndarray, int, int]:
    """Normalized indicators of {i, i+m, ..., i+m(k-1)} per chunk, plus the r leftover points."""
    if period < 1 or blocks < 1:
        raise PreconditionError("period and block count must be positive")
    chunk = period * blocks
    if chunk > degree:
        raise PreconditionError(f"m*k = {chunk} exceeds the degree {degree}")
    q, r = divmod(degree, chunk)
    columns = q * period + r
    basis = np.zeros((degree, columns))
    column = 0
    for b in range(q):
        for i in range(period):
            rows = b * chunk + i + period * np.arange(blocks)
            basis[rows, column] = 1.0 / math.sqrt(blocks)
            column += 1
    for offset in range(r):
        basis[q * chunk + offset, column] = 1.0
        column += 1
    return basis, q, r


def progression_approximant(values: np.ndarray, period: int, blocks: int) -> np.ndarray:
    """Copy the first step of each progression along it; leftover points unchanged."""
    out = np.array(values, copy=True)
    chunk = period * blocks
    q = values.shape[0] // chunk
    for b in range(q):
        start = b * chunk
        head = values[start : start + period]
        out[start : start + chunk] = np.tile(head, blocks)
    return out


@dataclass(frozen=True, eq=False)
class ZCompression:
    basis: np.ndarray
    q: int
    r: int
    residual: float
    bound: float
    invariance: tuple[float, ...]
    approximant: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]

    @property
    def bound_ok(self) -> bool:
        return self.residual < self.bound or self.residual == 0.0


def zcase_compress(
    xi: np.ndarray,
    sofic_map: SoficMap,
    period: int,
    blocks: int,
    delta: float,
    p: float = 2.0,
) -> ZCompression:
    xi = np.asarray(xi)
    degree = sofic_map.degree
    if xi.shape != (degree,):
        raise DimensionMismatchError("xi must be a vector of the degree")
    basis, q, r = progression_basis(degree, period, blocks)
    invariance = tuple(
        float(
            np.linalg.norm(_perm_apply(sofic_map, Word.power(0, period * t), xi, True) - xi, ord=p)
        )
        for t in range(1, blocks + 1)
    )
    if any(level >= delta for level in invariance):
        raise PreconditionError(
            f"xi is not {delta}-invariant under shifts by multiples of {period}"
        )
    approximant = progression_approximant(xi, period, blocks)
    residual = float(np.linalg.norm(xi - approximant, ord=p))
    bound = (2 * delta**p * blocks) ** (1.0 / p) if not math.isinf(p) else delta
    return ZCompression(basis, q, r, residual, bound, invariance, approximant)


@dataclass(frozen=True, eq=False)
class ProbeResult:
    cloud: SampleCloud
    projection: np.ndarray
    operator: np.ndarray
    defects: np.ndarray
    degree: int
    p: float


def group_algebra_matrix(
    coefficients: Mapping[Hashable, complex], sofic_map: SoficMap
) -> np.ndarray:
    """sigma(q) = sum_g c_g P_sigma(g) for q given on group elements."""
    group = sofic_map.group
    degree = sofic_map.degree
    total = np.zeros((degree, degree), dtype=complex)
    for element, coefficient in coefficients.items():
        if coefficient == 0:
            continue
        if isinstance(element, Word):
            perm = sofic_map.image(element)
        elif group.is_finite:
            perm = sofic_map.image(group.element_words[element])
        else:
            perm = sofic_map.image(Word.power(0, int(element)))
        total += coefficient * permutation_isometry(perm).toarray()
    return total


def operator_ball_samples(rng: np.random.Generator, degree: int, count: int) -> np.ndarray:
    values = rng.standard_normal((count, degree, degree)) + 1j * rng.standard_normal(
        (count, degree, degree)
    )
    norms = np.linalg.norm(values, ord=2, axis=(1, 2))
    radii = rng.uniform(size=count) ** (1.0 / (2 * degree * degree))
    return values * (radii / norms)[:, None, None]


def multiplication_probe(
    coefficients: Mapping[Hashable, complex],
    sofic_map: SoficMap,
    samples: int | np.ndarray = 32,
    p: float = 2.0,
    words: Sequence[Word] = (),
    rng: np.random.Generator | None = None,
) -> ProbeResult:
    """Cloud {P A} with P the spectral projection of sigma(q) above 1/2."""
    degree = sofic_map.degree
    operator = group_algebra_matrix(coefficients, sofic_map)
    hermitian = (operator + operator.conj().T) / 2
    projection = spectral_truncate(hermitian, Interval(0.5)).matrix
    if isinstance(samples, int):
        rng = rng or np.random.default_rng(0)
        batch = operator_ball_samples(rng, degree, samples)
    else:
        batch = np.asarray(samples, dtype=complex).reshape(-1, degree, degree)
    points = np.einsum("ij,mjk->mik", projection, batch)

    defects = np.zeros(points.shape[0])
    for word in words:
        direct = sofic_map.image(word)
        composed = sofic_map.product(word)
        for index, point in enumerate(points):
            gap = permute(direct, point) - permute(composed, point)
            value = schatten_norm(gap, p)
            defects[index] = max(defects[index], value)

    radius = 1.0 if math.isinf(p) else degree ** (-1.0 / p)
    cloud = SampleCloud(
        points.reshape(points.shape[0], -1),
        SchattenNorm(p, degree),
        core=CoreCertificate(LeftMultiplication(projection), radius),
    )
    return ProbeResult(cloud, projection, operator, defects, degree, p)


def probe_estimate(probe: ProbeResult, eps: float, workers: int | None = None) -> DimEstimate:
    """Bracket for the probe cloud, normalized by d^2."""
    degree = probe.degree
    cover = deps_upper(probe.cloud, eps, workers=workers)
    core = probe.cloud.core
    riesz = deps_lower_riesz(probe.cloud, None, core.projection, eps) if core else None
    rank = int(round(float(np.trace(probe.projection).real)))
    real_dim = 2 * degree * rank
    packing = None
    if 0 < eps < 1 and real_dim > 0 and not math.isinf(probe.p):
        # core ball radius d^(-1/p) against the unit ball
        log_ratio = -(real_dim / probe.p) * math.log(degree)
        packing = deps_lower_packing(log_ratio, eps, real_dim, 0.0)
    return DimEstimate(
        eps=eps,
        upper=cover.dimension,
        upper_strategy=cover.strategy,
        riesz=riesz,
        packing=packing,
        params={"p": probe.p, "rank": rank},
        degree=degree,
        normalization=float(degree * degree),
        subspace=cover,
    )


__all__ = [
    "GeneratingTuple",
    "LinearWitness",
    "ProbeResult",
    "SpanBasis",
    "VectVerdict",
    "ZCompression",
    "alpha_blocks",
    "bounded_words",
    "folner_average",
    "folner_window",
    "generator_words",
    "group_algebra_matrix",
    "hom_defect",
    "multiplication_probe",
    "parse_word_set",
    "probe_estimate",
    "product_tuples",
    "progression_basis",
    "random_contraction",
    "span_basis",
    "tuple_to_map",
    "vect_check",
    "zcase_compress",
]
