from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Any, Iterator
import warnings

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError, PreconditionError
from .parallel import ordered_map

DEGENERATE_BASIS = 1e-10
NET_RADIUS_LIMIT = 0.01
NET_POINT_LIMIT = 2_000_000
NORM_SLACK = 1e-9
RESIDUAL_GTOL = 1e-8
RESIDUAL_MAXITER = 10_000


class Norm:
    euclidean = False

    def norms(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_dimension(self, size: int) -> None:
        return None

    def __call__(self, vector: np.ndarray) -> float:
        return float(self.norms(np.asarray(vector)[None, :])[0])


def _unit_phase(vector: np.ndarray) -> np.ndarray:
    magnitude = np.abs(vector)
    out = np.zeros_like(vector)
    mask = magnitude > 0
    out[mask] = vector[mask] / magnitude[mask]
    return out


def _lp_gradient(vector: np.ndarray, p: float) -> np.ndarray:
    total = float(np.linalg.norm(vector, ord=p))
    if total == 0.0:
        return np.zeros_like(vector)
    if math.isinf(p):
        out = np.zeros_like(vector)
        index = int(np.argmax(np.abs(vector)))
        out[index] = _unit_phase(vector[index : index + 1])[0]
        return out
    if p == 1:
        return _unit_phase(vector)
    return np.abs(vector) ** (p - 2) * vector / total ** (p - 1)


@dataclass(frozen=True)
class LpNorm(Norm):
    p: float = 2.0

    def __post_init__(self) -> None:
        if not 1 <= self.p <= math.inf:
            raise PreconditionError(f"p must lie in [1, inf], got {self.p}")

    @property
    def euclidean(self) -> bool:  # type: ignore[override]
        return self.p == 2

    def norms(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points, ord=self.p, axis=1)

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        return _lp_gradient(vector, self.p)


def default_weights(count: int) -> np.ndarray:
    return 0.5 ** np.arange(1, count + 1, dtype=float)


@dataclass(frozen=True)
class ProductNorm(Norm):
    """rho(f) = sum_j w_j |f(j)| on finitely supported sequences."""

    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.weights is not None:
            if any(w <= 0 for w in self.weights) or not math.isfinite(sum(self.weights)):
                raise PreconditionError("product norm weights must be positive and summable")

    def weight_vector(self, count: int) -> np.ndarray:
        if self.weights is None:
            return default_weights(count)
        if len(self.weights) < count:
            raise DimensionMismatchError(
                f"product norm has {len(self.weights)} weights, sequence has {count} terms"
            )
        return np.asarray(self.weights[:count], dtype=float)

    def check_dimension(self, size: int) -> None:
        self.weight_vector(size)

    def norms(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points) @ self.weight_vector(points.shape[1])

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        return self.weight_vector(vector.shape[0]) * _unit_phase(vector)


@dataclass(frozen=True)
class BlockNorm(Norm):
    """rho_V(f) = rho(j -> ||f_j||_p) for sequences of l^p blocks."""

    product: ProductNorm = field(default_factory=ProductNorm)
    block_size: int = 1
    p: float = 2.0

    def check_dimension(self, size: int) -> None:
        if self.block_size < 1 or size % self.block_size:
            raise DimensionMismatchError(
                f"length {size} is not a multiple of the block size {self.block_size}"
            )
        self.product.check_dimension(size // self.block_size)

    def _blocks(self, points: np.ndarray) -> np.ndarray:
        return points.reshape(points.shape[0], -1, self.block_size)

    def norms(self, points: np.ndarray) -> np.ndarray:
        blocks = np.linalg.norm(self._blocks(points), ord=self.p, axis=2)
        return blocks @ self.product.weight_vector(blocks.shape[1])

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        blocks = vector.reshape(-1, self.block_size)
        weights = self.product.weight_vector(blocks.shape[0])
        return np.concatenate(
            [w * _lp_gradient(block, self.p) for w, block in zip(weights, blocks)]
        )


@dataclass(frozen=True)
class SchattenNorm(Norm):
    """Normalized Schatten p-norm of flattened side x side matrices."""

    p: float = 2.0
    side: int = 1

    @property
    def euclidean(self) -> bool:  # type: ignore[override]
        return self.p == 2

    def check_dimension(self, size: int) -> None:
        if size != self.side * self.side:
            raise DimensionMismatchError(f"expected {self.side}x{self.side} matrices")

    def norms(self, points: np.ndarray) -> np.ndarray:
        singular = np.linalg.svd(
            points.reshape(points.shape[0], self.side, self.side), compute_uv=False
        )
        if math.isinf(self.p):
            return singular.max(axis=1)
        return np.mean(singular**self.p, axis=1) ** (1.0 / self.p)

    def gradient(self, vector: np.ndarray) -> np.ndarray:
        left, singular, right = np.linalg.svd(vector.reshape(self.side, self.side))
        total = self(vector)
        if total == 0.0:
            return np.zeros_like(vector)
        if math.isinf(self.p):
            weights = np.zeros_like(singular)
            weights[0] = 1.0
        else:
            weights = singular ** (self.p - 1) * total ** (1 - self.p) / self.side
        return ((left * weights) @ right).reshape(-1)


def product_norm_eval(rho: ProductNorm, values: np.ndarray, p: float = 2.0) -> float:
    values = np.asarray(values)
    if values.ndim == 1:
        return float(np.abs(values) @ rho.weight_vector(values.shape[0]))
    block_norms = np.linalg.norm(values.reshape(values.shape[0], -1), ord=p, axis=1)
    return float(block_norms @ rho.weight_vector(block_norms.shape[0]))


def _lp_operator_bound(matrix: np.ndarray, p: float) -> float:
    column = float(np.abs(matrix).sum(axis=0).max()) if matrix.size else 0.0
    row = float(np.abs(matrix).sum(axis=1).max()) if matrix.size else 0.0
    if p == 2:
        return float(np.linalg.norm(matrix, 2)) if matrix.size else 0.0
    if p == 1:
        return column
    if math.isinf(p):
        return row
    return column ** (1.0 / p) * row ** (1.0 - 1.0 / p)


class ProjectionMap:
    rank: int
    norm_bound: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fits(self, norm: Norm) -> bool:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int, size: int) -> np.ndarray:
        """Random points of the range, one per row."""
        raw = rng.standard_normal((count, size)) + 1j * rng.standard_normal((count, size))
        return self.apply(raw)


def _matrix_rank(matrix: np.ndarray) -> int:
    return int(round(float(np.trace(matrix).real)))


@dataclass(frozen=True, eq=False)
class MatrixProjection(ProjectionMap):
    matrix: np.ndarray
    p: float = 2.0

    @property
    def rank(self) -> int:  # type: ignore[override]
        return _matrix_rank(self.matrix)

    @property
    def norm_bound(self) -> float:  # type: ignore[override]
        return _lp_operator_bound(self.matrix, self.p)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix.T

    def fits(self, norm: Norm) -> bool:
        return isinstance(norm, LpNorm) and norm.p == self.p


@dataclass(frozen=True, eq=False)
class BlockProjection(ProjectionMap):
    blocks: tuple[np.ndarray, ...]
    p: float = 2.0

    @property
    def block_size(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def rank(self) -> int:  # type: ignore[override]
        return sum(_matrix_rank(block) for block in self.blocks)

    @property
    def norm_bound(self) -> float:  # type: ignore[override]
        return max(_lp_operator_bound(block, self.p) for block in self.blocks)

    def apply(self, points: np.ndarray) -> np.ndarray:
        shaped = points.reshape(points.shape[0], len(self.blocks), self.block_size)
        out = np.stack(
            [shaped[:, j, :] @ block.T for j, block in enumerate(self.blocks)], axis=1
        )
        return out.reshape(points.shape[0], -1)

    def fits(self, norm: Norm) -> bool:
        return (
            isinstance(norm, BlockNorm)
            and norm.block_size == self.block_size
            and norm.p == self.p
        )


@dataclass(frozen=True, eq=False)
class LeftMultiplication(ProjectionMap):
    """X -> P X on flattened square matrices."""

    matrix: np.ndarray

    @property
    def rank(self) -> int:  # type: ignore[override]
        return _matrix_rank(self.matrix) * self.matrix.shape[0]

    @property
    def norm_bound(self) -> float:  # type: ignore[override]
        return float(np.linalg.norm(self.matrix, 2))

    def apply(self, points: np.ndarray) -> np.ndarray:
        side = self.matrix.shape[0]
        shaped = points.reshape(points.shape[0], side, side)
        return np.einsum("ij,mjk->mik", self.matrix, shaped).reshape(points.shape[0], -1)

    def fits(self, norm: Norm) -> bool:
        return isinstance(norm, SchattenNorm) and norm.side == self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class CoreCertificate:
    """The sampled set contains every point of range(projection) with norm at most radius."""

    projection: ProjectionMap
    radius: float


@dataclass(frozen=True, eq=False)
class SampleCloud:
    points: np.ndarray
    norm: Norm
    tags: tuple[str, ...] = ()
    core: CoreCertificate | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points)
        if points.ndim != 2:
            raise DimensionMismatchError("a sample cloud is a 2-d array of row vectors")
        if self.tags and len(self.tags) != points.shape[0]:
            raise DimensionMismatchError("one provenance tag per point")
        self.norm.check_dimension(points.shape[1])
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class CoverSubspace:
    basis: np.ndarray
    core: ProjectionMap | None = None
    strategy: str = ""
    max_residual: float = 0.0

    @property
    def dimension(self) -> int:
        return self.basis.shape[1] + (self.core.rank if self.core is not None else 0)


def as_columns(subspace: np.ndarray, size: int) -> np.ndarray:
    values = np.asarray(subspace)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != size:
        raise DimensionMismatchError(f"subspace basis must have {size} rows")
    return values


def orthonormal_basis(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the given columns; rejects degenerate input."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise DimensionMismatchError("basis must be a 2-d array of columns")
    if vectors.shape[1] == 0:
        return vectors
    singular = np.linalg.svd(vectors, compute_uv=False)
    if singular[0] == 0 or singular[-1] / singular[0] < DEGENERATE_BASIS:
        raise PreconditionError("basis vectors are linearly dependent")
    basis, _ = np.linalg.qr(vectors)
    return basis


def _real_split(values: np.ndarray) -> np.ndarray:
    return np.concatenate([values.real, values.imag])


def _optimized_residual(point: np.ndarray, basis: np.ndarray, norm: Norm) -> float:
    real = np.isrealobj(point) and np.isrealobj(basis)
    k = basis.shape[1]
    start = basis.conj().T @ point

    if real and isinstance(norm, (LpNorm, ProductNorm)):
        linear = _linprog_residual(point, basis, norm)
        if linear is not None:
            return linear

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        coeffs = x if real else x[:k] + 1j * x[k:]
        residual = point - basis @ coeffs
        value = norm(residual)
        direction = -(basis.conj().T @ norm.gradient(residual))
        return value, direction.real if real else _real_split(direction)

    x0 = start.real if real else _real_split(start)
    result = minimize(
        objective,
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": RESIDUAL_GTOL, "maxiter": RESIDUAL_MAXITER},
    )
    return float(result.fun)


def _linprog_residual(point: np.ndarray, basis: np.ndarray, norm: Norm) -> float | None:
    n, k = basis.shape
    if isinstance(norm, LpNorm) and math.isinf(norm.p):
        cost = np.concatenate([np.zeros(k), [1.0]])
        slack = -np.ones((n, 1))
    elif isinstance(norm, LpNorm) and norm.p == 1:
        cost = np.concatenate([np.zeros(k), np.ones(n)])
        slack = -np.eye(n)
    elif isinstance(norm, ProductNorm):
        cost = np.concatenate([np.zeros(k), norm.weight_vector(n)])
        slack = -np.eye(n)
    else:
        return None
    a_ub = np.block([[-basis, slack], [basis, slack]])
    b_ub = np.concatenate([-point, point])
    bounds = [(None, None)] * k + [(0, None)] * slack.shape[1]
    result = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not result.success:
        return None
    return float(norm(point - basis @ result.x[:k]))


def residual(
    point: np.ndarray, basis: np.ndarray, norm: Norm, threshold: float | None = None
) -> float:
    """Distance from a point to span(basis) in the norm; exact for Euclidean norms."""
    projected = point - basis @ (basis.conj().T @ point)
    best = norm(projected)
    if basis.shape[1] == 0 or norm.euclidean:
        return best
    if threshold is not None and best < threshold:
        return best
    return min(best, _optimized_residual(point, basis, norm))


def residuals(
    points: np.ndarray,
    basis: np.ndarray,
    norm: Norm,
    threshold: float | None = None,
    workers: int | None = None,
) -> np.ndarray:
    if points.shape[0] == 0:
        return np.zeros(0)
    if basis.shape[1] == 0 or norm.euclidean:
        projected = points - (points @ basis.conj()) @ basis.T
        return norm.norms(projected)
    values = ordered_map(lambda row: residual(row, basis, norm, threshold), list(points), workers)
    return np.asarray(values, dtype=float)


def _cover_points(cloud: SampleCloud, core: ProjectionMap | None) -> np.ndarray:
    if core is None:
        return cloud.points
    return cloud.points - core.apply(cloud.points)


def eps_contains(
    subspace: np.ndarray | CoverSubspace, cloud: SampleCloud, eps: float
) -> bool:
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if isinstance(subspace, CoverSubspace):
        basis = orthonormal_basis(subspace.basis)
        points = _cover_points(cloud, subspace.core)
    else:
        basis = orthonormal_basis(as_columns(subspace, cloud.dimension))
        points = cloud.points
    return bool(np.all(residuals(points, basis, cloud.norm, threshold=eps) < eps))


def _euclidean_sweep(points: np.ndarray, norm: Norm, eps: float) -> tuple[np.ndarray, float]:
    _, singular, vh = np.linalg.svd(points, full_matrices=False)
    rank = int(np.count_nonzero(singular > singular[0] * 1e-12)) if singular.size else 0

    def worst(k: int) -> float:
        basis = vh[:k].conj().T
        return float(residuals(points, basis, norm).max())

    low, high = 0, rank
    if worst(low) < eps:
        return vh[:0].conj().T, worst(low)
    while high - low > 1:
        middle = (low + high) // 2
        if worst(middle) < eps:
            high = middle
        else:
            low = middle
    return vh[:high].conj().T, worst(high)


def _greedy_peel(
    points: np.ndarray, norm: Norm, eps: float, workers: int | None
) -> tuple[np.ndarray, float]:
    size = points.shape[1]
    dtype = np.result_type(points.dtype, float)
    basis = np.zeros((size, 0), dtype=dtype)
    pending = np.ones(points.shape[0], dtype=bool)
    worst = 0.0
    while pending.any():
        current = residuals(points[pending], basis, norm, workers=workers)
        worst = float(current.max())
        if worst < eps:
            break
        rows = np.flatnonzero(pending)
        chosen = points[rows[int(np.argmax(current))]]
        direction = chosen - basis @ (basis.conj().T @ chosen)
        length = np.linalg.norm(direction)
        if length < 1e-12 or basis.shape[1] >= size:
            break
        basis = np.column_stack([basis, direction / length])
        pending[rows[current < eps]] = False
    return basis, worst


def deps_upper(
    cloud: SampleCloud, eps: float, workers: int | None = None
) -> CoverSubspace:
    """A subspace eps-containing the cloud: core range first, then a sweep of the rest."""
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    core = cloud.core.projection if cloud.core is not None else None
    points = _cover_points(cloud, core)
    empty = np.zeros((cloud.dimension, 0), dtype=np.result_type(points.dtype, float))
    if points.shape[0] == 0:
        return CoverSubspace(empty, core, "empty")
    norms = cloud.norm.norms(points)
    if float(norms.max()) < eps:
        kind = "core" if core is not None else "zero"
        return CoverSubspace(empty, core, kind, float(norms.max()))
    if cloud.norm.euclidean:
        basis, worst = _euclidean_sweep(points, cloud.norm, eps)
        strategy = "principal-sweep"
    else:
        basis, worst = _greedy_peel(points, cloud.norm, eps, workers)
        strategy = "greedy-peel"
    if core is not None:
        strategy = f"core+{strategy}"
    return CoverSubspace(basis, core, strategy, worst)


@dataclass(frozen=True)
class RieszBound:
    k: int | None
    certified: bool
    reason: str
    route: str = ""
    net_radius: float | None = None
    projection_norm: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "certified": self.certified,
            "reason": self.reason,
            "route": self.route,
            "net_radius": self.net_radius,
            "projection_norm": self.projection_norm,
        }


def _no_certificate(reason: str, **extra: Any) -> RieszBound:
    return RieszBound(k=None, certified=False, reason=reason, **extra)


def _net_radius(cloud: SampleCloud, probes: np.ndarray) -> float:
    if isinstance(cloud.norm, LpNorm) and cloud.norm.p == 2:
        tree = cKDTree(np.column_stack([cloud.points.real, cloud.points.imag]))
        distances, _ = tree.query(np.column_stack([probes.real, probes.imag]))
        return float(np.max(distances))
    return float(
        max(np.min(cloud.norm.norms(cloud.points - probe[None, :])) for probe in probes)
    )


def _verified_net_radius(cloud: SampleCloud, basis: np.ndarray) -> float | None:
    """Upper bound on the distance from any unit vector of span(basis) to the cloud.

    Needs a norm that is a multiple of the Euclidean one and an orthonormal basis.
    """
    scale = cloud.norm(basis[:, 0])
    points = cloud.points * scale
    coords = points @ basis.conj()
    rest = np.linalg.norm(points - coords @ basis.T, axis=1)
    if np.iscomplexobj(coords):
        coords = np.column_stack([coords.real, coords.imag])
    dimension = coords.shape[1]
    per_face = max(1, math.ceil(math.sqrt(dimension - 1) / (NET_RADIUS_LIMIT / 2)))
    if sphere_net_size(dimension, per_face) > NET_POINT_LIMIT:
        return None
    tree = cKDTree(np.column_stack([coords, rest]))
    worst = 0.0
    for face in sphere_net(dimension, per_face):
        distances, _ = tree.query(np.column_stack([face, np.zeros(len(face))]))
        worst = max(worst, float(np.max(distances)))
    return worst + sphere_net_radius(dimension, per_face)


def deps_lower_riesz(
    cloud: SampleCloud,
    subspace: np.ndarray | None,
    projection: ProjectionMap,
    eps: float,
    probes: int = 256,
    rng: np.random.Generator | None = None,
) -> RieszBound:
    """Certified d_eps >= dim U via a norm-one projection onto U, or no certificate."""
    if subspace is not None and as_columns(subspace, cloud.dimension).shape[1] == 0:
        return RieszBound(0, True, "trivial subspace", "trivial")
    if not projection.fits(cloud.norm):
        return _no_certificate("projection does not act on the cloud's norm")
    bound = projection.norm_bound
    if bound > 1 + NORM_SLACK:
        return _no_certificate(
            f"projection norm bound {bound:.6g} exceeds 1", projection_norm=bound
        )
    if eps >= 1:
        return _no_certificate("eps >= 1", projection_norm=bound)

    rng = rng or np.random.default_rng(0)
    basis = None
    if subspace is not None:
        basis = orthonormal_basis(as_columns(subspace, cloud.dimension))
        if not np.allclose(projection.apply(basis.T), basis.T, atol=1e-9):
            return _no_certificate("projection is not the identity on U", projection_norm=bound)
        dimension = basis.shape[1]
    else:
        dimension = projection.rank
        if dimension == 0:
            return RieszBound(0, True, "trivial subspace", "trivial", projection_norm=bound)
        samples = projection.sample(rng, probes, cloud.dimension)
        if not np.allclose(projection.apply(samples), samples, atol=1e-9):
            return _no_certificate("projection is not idempotent", projection_norm=bound)
        if np.isrealobj(cloud.points):
            samples = samples.real

    core = cloud.core
    if core is not None and core.projection is projection and subspace is None:
        if eps < core.radius / max(bound, 1.0):
            return RieszBound(
                dimension, True, "core ball of the projection range", "core",
                projection_norm=bound,
            )
        return _no_certificate("eps exceeds the core radius", route="core", projection_norm=bound)

    if basis is None:
        lengths = cloud.norm.norms(samples)
        keep = lengths > 0
        net = _net_radius(cloud, samples[keep] / lengths[keep][:, None])
        return _no_certificate(
            "sphere net of U checked on sampled points only",
            route="net", net_radius=net, projection_norm=bound,
        )
    if not cloud.norm.euclidean:
        return _no_certificate(
            "verified sphere nets need a Euclidean norm", route="net", projection_norm=bound
        )
    net = _verified_net_radius(cloud, basis)
    if net is None:
        return _no_certificate(
            "unit sphere of U is too large for a verified net", route="net", projection_norm=bound
        )
    if net > NET_RADIUS_LIMIT:
        return _no_certificate(
            f"cloud is not a {NET_RADIUS_LIMIT}-net of the unit sphere of U",
            route="net", net_radius=net, projection_norm=bound,
        )
    if eps >= 1 - net:
        return _no_certificate("eps >= 1 - net radius", route="net", net_radius=net,
                               projection_norm=bound)
    return RieszBound(
        dimension, True, "verified sphere net", "net", net_radius=net, projection_norm=bound
    )


def deps_lower_packing(
    log_vol_a: float, eps: float, ambient_real_dim: int, log_vol_ball: float
) -> int:
    """Lower bound from vol(A) <= |S| vol(2 eps ball) with |S| <= ((3+3eps)/eps)^(2k)."""
    if not 0 < eps < 1:
        raise PreconditionError("eps must lie in (0, 1)")
    if log_vol_a == -math.inf:
        return 0
    numerator = log_vol_a - log_vol_ball - ambient_real_dim * math.log(2 * eps)
    value = numerator / (2 * math.log((3 + 3 * eps) / eps))
    return max(0, math.ceil(value - 1e-12))


def real_dimension(size: int, complex_field: bool) -> int:
    return 2 * size if complex_field else size


@dataclass(frozen=True, eq=False)
class DimEstimate:
    eps: float
    upper: int
    upper_strategy: str
    riesz: RieszBound | None = None
    packing: int | None = None
    params: dict[str, Any] = field(default_factory=dict)
    degree: int | None = None
    normalization: float = 1.0
    subspace: CoverSubspace | None = None

    def __post_init__(self) -> None:
        lower = self.lower
        if lower is not None and lower > self.upper:
            warnings.warn(
                f"lower bound {lower} exceeds upper bound {self.upper} at eps={self.eps}",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def lower(self) -> int | None:
        candidates = []
        if self.riesz is not None and self.riesz.certified and self.riesz.k is not None:
            candidates.append(self.riesz.k)
        if self.packing is not None:
            candidates.append(self.packing)
        return max(candidates) if candidates else None

    @property
    def normalized_upper(self) -> float:
        return self.upper / self.normalization

    @property
    def normalized_lower(self) -> float | None:
        lower = self.lower
        return None if lower is None else lower / self.normalization

    def to_dict(self) -> dict[str, Any]:
        return {
            "eps": self.eps,
            "degree": self.degree,
            "upper": self.upper,
            "upper_strategy": self.upper_strategy,
            "lower": self.lower,
            "riesz": self.riesz.to_dict() if self.riesz is not None else None,
            "packing": self.packing,
            "normalization": self.normalization,
            "normalized_upper": self.normalized_upper,
            "normalized_lower": self.normalized_lower,
            "params": dict(self.params),
        }


def estimate(
    cloud: SampleCloud,
    eps: float,
    subspace: np.ndarray | None = None,
    projection: ProjectionMap | None = None,
    packing: int | None = None,
    normalization: float = 1.0,
    degree: int | None = None,
    params: dict[str, Any] | None = None,
    rng: np.random.Generator | None = None,
    workers: int | None = None,
) -> DimEstimate:
    cover = deps_upper(cloud, eps, workers=workers)
    riesz = None
    if projection is not None:
        riesz = deps_lower_riesz(cloud, subspace, projection, eps, rng=rng)
    return DimEstimate(
        eps=eps,
        upper=cover.dimension,
        upper_strategy=cover.strategy,
        riesz=riesz,
        packing=packing,
        params=dict(params or {}),
        degree=degree,
        normalization=normalization,
        subspace=cover,
    )


def unit_ball_samples(
    basis: np.ndarray, count: int, rng: np.random.Generator, complex_field: bool = False
) -> np.ndarray:
    """Uniform samples of the Euclidean unit ball of span(basis), one per row."""
    dimension = basis.shape[1]
    coeffs = rng.standard_normal((count, dimension))
    if complex_field:
        coeffs = coeffs + 1j * rng.standard_normal((count, dimension))
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    real_dim = real_dimension(dimension, complex_field)
    coeffs *= rng.uniform(size=(count, 1)) ** (1.0 / real_dim)
    return coeffs @ basis.T


def sphere_net_size(dimension: int, per_face: int) -> int:
    return 2 * dimension * (per_face + 1) ** (dimension - 1)


def sphere_net_radius(dimension: int, per_face: int) -> float:
    return math.sqrt(dimension - 1) / per_face


def sphere_net(dimension: int, per_face: int) -> Iterator[np.ndarray]:
    """Radially projected grid on each face of the cube [-1, 1]^dimension, one face per batch.

    Every unit vector lies within `sphere_net_radius(dimension, per_face)` of a net point.
    """
    if dimension < 1 or per_face < 1:
        raise PreconditionError("sphere nets need dimension >= 1 and per_face >= 1")
    ticks = np.linspace(-1.0, 1.0, per_face + 1)
    others = dimension - 1
    if others:
        axes = np.meshgrid(*([ticks] * others), indexing="ij")
        grid = np.stack(axes, axis=-1).reshape(-1, others)
    else:
        grid = np.zeros((1, 0))
    for axis in range(dimension):
        for sign in (-1.0, 1.0):
            face = np.insert(grid, axis, sign, axis=1)
            yield face / np.linalg.norm(face, axis=1, keepdims=True)


__all__ = [
    "BlockNorm",
    "BlockProjection",
    "CoreCertificate",
    "CoverSubspace",
    "DimEstimate",
    "LeftMultiplication",
    "LpNorm",
    "MatrixProjection",
    "ProductNorm",
    "RieszBound",
    "SampleCloud",
    "SchattenNorm",
    "deps_lower_packing",
    "deps_lower_riesz",
    "deps_upper",
    "eps_contains",
    "estimate",
    "orthonormal_basis",
    "product_norm_eval",
    "residual",
    "residuals",
    "sphere_net",
    "sphere_net_radius",
    "sphere_net_size",
    "unit_ball_samples",
]
