"""Normalized-trace Schatten norms and Hermitian functional calculus on M_d(C)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatchError, NotHermitianError, PreconditionError

HERMITIAN_TOLERANCE = 1e-8
PROJECTION_TOLERANCE = 1e-10
TRACE_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class LpMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.entries, dtype=complex)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("matrix entries must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "entries", values)

    @classmethod
    def identity(cls, dimension: int) -> LpMatrix:
        return cls(np.eye(dimension))

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries)) / self.dimension

    @cached_property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.entries, compute_uv=False)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigendecomposition of the Hermitian part; rejects non-Hermitian input."""
        return np.linalg.eigh(hermitian_part(self.entries))

    @cached_property
    def modulus(self) -> LpMatrix:
        gram = self.entries.conj().T @ self.entries
        values, vectors = np.linalg.eigh((gram + gram.conj().T) / 2)
        root = np.sqrt(np.clip(values, 0.0, None))
        return LpMatrix((vectors * root) @ vectors.conj().T)

    def apply(self, func: Callable[[np.ndarray], np.ndarray]) -> LpMatrix:
        values, vectors = self.eigh
        return LpMatrix((vectors * func(values)) @ vectors.conj().T)

    def to_json(self) -> list[list[list[float]]]:
        return [[[float(v.real), float(v.imag)] for v in row] for row in self.entries]

    @classmethod
    def from_json(cls, rows: Sequence[Sequence[Sequence[float]]]) -> LpMatrix:
        return cls(np.array([[complex(re, im) for re, im in row] for row in rows]))


def as_matrix(value: LpMatrix | np.ndarray) -> LpMatrix:
    return value if isinstance(value, LpMatrix) else LpMatrix(np.asarray(value))


def hermitian_part(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    skew = (values - values.conj().T) / 2
    if skew.size and np.max(np.abs(skew)) > HERMITIAN_TOLERANCE:
        raise NotHermitianError(
            f"anti-Hermitian part {np.max(np.abs(skew)):.3e} exceeds {HERMITIAN_TOLERANCE}"
        )
    return (values + values.conj().T) / 2


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float = math.inf
    lower_closed: bool = False
    upper_closed: bool = False

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        above = values >= self.lower if self.lower_closed else values > self.lower
        below = values <= self.upper if self.upper_closed else values < self.upper
        return above & below

    def __str__(self) -> str:
        left = "[" if self.lower_closed else "("
        right = "]" if self.upper_closed else ")"
        return f"{left}{self.lower:g},{self.upper:g}{right}"


@dataclass(frozen=True, eq=False)
class SpectralProjection:
    source: LpMatrix
    interval: Interval
    matrix: np.ndarray

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.matrix).real))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real) / self.matrix.shape[0]


def schatten_norm(value: LpMatrix | np.ndarray, p: float) -> float:
    if not 1 <= p <= math.inf:
        raise PreconditionError(f"p must lie in [1, inf], got {p}")
    singular = as_matrix(value).singular_values
    if singular.size == 0:
        return 0.0
    if math.isinf(p):
        return float(singular.max())
    return float(np.mean(singular**p) ** (1.0 / p))


def spectral_truncate(value: LpMatrix | np.ndarray, interval: Interval) -> SpectralProjection:
    matrix = as_matrix(value)
    eigenvalues, vectors = matrix.eigh
    inside = interval.contains(eigenvalues)
    kept = vectors[:, inside]
    return SpectralProjection(matrix, interval, kept @ kept.conj().T)


def is_projection(value: LpMatrix | np.ndarray, tolerance: float = PROJECTION_TOLERANCE) -> bool:
    entries = as_matrix(value).entries
    return bool(
        np.allclose(entries @ entries, entries, atol=tolerance)
        and np.allclose(entries, entries.conj().T, atol=tolerance)
    )


def _power_trace(modulus: LpMatrix, beta: float) -> float:
    eigenvalues = np.clip(np.linalg.eigvalsh(hermitian_part(modulus.entries)), 0.0, None)
    return float(np.mean(eigenvalues**beta))


def trace_monotone_check(
    a: LpMatrix | np.ndarray, b: LpMatrix | np.ndarray, beta: float
) -> bool:
    """Whether tr(|A|^beta) <= tr(|B|^beta), given |A| <= |B| as forms."""
    mod_a = as_matrix(a).modulus
    mod_b = as_matrix(b).modulus
    if mod_a.dimension != mod_b.dimension:
        raise DimensionMismatchError("matrices must share a dimension")
    gap = np.linalg.eigvalsh(hermitian_part(mod_b.entries - mod_a.entries))
    if gap.min() < -TRACE_SLACK:
        raise PreconditionError(
            f"|A| <= |B| fails: smallest eigenvalue of |B|-|A| is {gap.min():.3e}"
        )
    return _power_trace(mod_a, beta) <= _power_trace(mod_b, beta) + TRACE_SLACK


@dataclass(frozen=True)
class TruncationResult:
    projection: SpectralProjection
    residual: float
    residual_ok: bool
    trace: float
    trace_bound: float
    trace_ok: bool


def truncation_bound(
    a: LpMatrix | np.ndarray,
    b: LpMatrix | np.ndarray,
    q: LpMatrix | np.ndarray,
    p: float,
    delta: float,
    eta: float,
) -> TruncationResult:
    """Cut |A-1| at sqrt(delta), closed at 0, and check the residual and trace conclusions."""
    mat_a, mat_b, mat_q = as_matrix(a), as_matrix(b), as_matrix(q)
    if not mat_a.dimension == mat_b.dimension == mat_q.dimension:
        raise DimensionMismatchError("A, B and Q must share a dimension")
    if not (0 < delta < 1 and 0 < eta < 1):
        raise PreconditionError("delta and eta must lie in (0, 1)")
    if not 1 <= p < math.inf:
        raise PreconditionError("p must lie in [1, inf)")
    if not is_projection(mat_q):
        raise PreconditionError("Q is not an orthogonal projection")
    eye = np.eye(mat_a.dimension)
    shifted = mat_a.entries - eye
    if schatten_norm(shifted @ mat_b.entries, p) >= delta:
        raise PreconditionError("||(A-1)B||_p must be below delta")
    if schatten_norm(mat_a.entries - mat_q.entries, p) >= eta:
        raise PreconditionError("||A-Q||_p must be below eta")

    root = math.sqrt(delta)
    window = Interval(0.0, root, lower_closed=True)
    projection = spectral_truncate(LpMatrix(shifted).modulus, window)
    residual = schatten_norm(mat_b.entries - projection.matrix @ mat_b.entries, p)
    trace = projection.trace()
    trace_bound = mat_q.trace().real + (eta / (1 - root)) ** p
    return TruncationResult(
        projection=projection,
        residual=residual,
        residual_ok=residual < root,
        trace=trace,
        trace_bound=trace_bound,
        trace_ok=trace <= trace_bound + 1e-12,
    )


def ball_volume_log(rank: int) -> float:
    """log(pi^k / k!)."""
    if rank < 0:
        raise PreconditionError("rank must be non-negative")
    return rank * math.log(math.pi) - float(gammaln(rank + 1))


@dataclass(frozen=True)
class VolumeRatio:
    degree: int
    rank: int
    log_ratio: float
    ratio: float
    normalization_log: float


def volume_ratio_sequence(rank_fraction: float, degrees: Sequence[int]) -> list[VolumeRatio]:
    if not 0 <= rank_fraction <= 1:
        raise PreconditionError("rank fraction must lie in [0, 1]")
    rows: list[VolumeRatio] = []
    for degree in degrees:
        if degree < 1:
            raise PreconditionError("degrees must be positive")
        rank = int(round(rank_fraction * degree))
        exponent = 2.0 * degree * degree
        log_ratio = (
            ball_volume_log(rank) + ball_volume_log(degree - rank) - ball_volume_log(degree)
        ) / exponent
        rows.append(
            VolumeRatio(
                degree=degree,
                rank=rank,
                log_ratio=log_ratio,
                ratio=math.exp(log_ratio),
                normalization_log=-degree * math.log(degree) / exponent,
            )
        )
    return rows
