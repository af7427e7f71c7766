"""Chain calculus on truncated Cayley balls of free groups.

Edge functions are stored once per canonical edge (x, x a_j) with a_j a positive generator;
reading the reversed pair negates. Vertex functions are plain arrays indexed like
`TreeBall.words`. Exact mode keeps `fractions.Fraction` values in object arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError, DimensionMismatchError, PreconditionError
from .groups import IDENTITY, Letter, Word, default_labels, enumerate_ball

NEUMANN_TOLERANCE = 1e-12
NEUMANN_MAX_STEPS = 100_000
POWER_TOLERANCE = 1e-13
POWER_MAX_STEPS = 20_000
RESIDUAL_LIMIT = 1e-10


def _step(letters: tuple[Letter, ...], letter: Letter) -> tuple[Letter, ...]:
    if letters and letters[-1] == (letter[0], -letter[1]):
        return letters[:-1]
    return letters + (letter,)


@dataclass(frozen=True, eq=False)
class TreeBall:
    rank: int
    radius: int
    words: tuple[Word, ...]
    tails: np.ndarray
    heads: np.ndarray
    generators: np.ndarray
    labels: tuple[str, ...]
    _index: dict[tuple[Letter, ...], int] = field(repr=False)
    _edges: dict[tuple[int, int], int] = field(repr=False)

    @property
    def vertex_count(self) -> int:
        return len(self.words)

    @property
    def edge_count(self) -> int:
        return int(self.tails.shape[0])

    @cached_property
    def depths(self) -> np.ndarray:
        return np.array([len(word) for word in self.words], dtype=np.int64)

    @cached_property
    def interior(self) -> np.ndarray:
        """Vertices with all 2n neighbours inside the ball."""
        return self.depths < self.radius

    @cached_property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @cached_property
    def parent_edges(self) -> np.ndarray:
        """For each non-root vertex, the edge toward the root (-1 at the root)."""
        parents = np.full(self.vertex_count, -1, dtype=np.int64)
        deeper = np.where(
            self.depths[self.heads] > self.depths[self.tails], self.heads, self.tails
        )
        parents[deeper] = np.arange(self.edge_count)
        return parents

    @cached_property
    def incidence(self) -> sparse.csr_matrix:
        """The coboundary matrix D with (D f)(edge) = f(head) - f(tail)."""
        rows = np.repeat(np.arange(self.edge_count), 2)
        cols = np.column_stack([self.heads, self.tails]).ravel()
        data = np.tile([1.0, -1.0], self.edge_count)
        return sparse.csr_matrix(
            (data, (rows, cols)), shape=(self.edge_count, self.vertex_count)
        )

    def index(self, word: Word) -> int:
        try:
            return self._index[word.letters]
        except KeyError:
            raise PreconditionError(
                f"{word.format(self.labels)} lies outside the ball of radius {self.radius}"
            ) from None

    def edge(self, x: Word, y: Word) -> tuple[int, int]:
        """(edge index, sign) so that f(x, y) = sign * values[index]."""
        tail, head = self.index(x), self.index(y)
        if (tail, head) in self._edges:
            return self._edges[(tail, head)], 1
        if (head, tail) in self._edges:
            return self._edges[(head, tail)], -1
        raise PreconditionError(
            f"{x.format(self.labels)} and {y.format(self.labels)} are not adjacent"
        )

    def vertex_function(self, exact: bool = False) -> np.ndarray:
        if exact:
            return np.array([Fraction(0)] * self.vertex_count, dtype=object)
        return np.zeros(self.vertex_count)

    def indicator(self, word: Word, exact: bool = False) -> np.ndarray:
        values = self.vertex_function(exact)
        values[self.index(word)] = Fraction(1) if exact else 1.0
        return values


def tree_ball(rank: int, radius: int, labels: Iterable[str] | None = None) -> TreeBall:
    if rank < 1 or radius < 0:
        raise PreconditionError("rank must be positive and radius non-negative")
    words = tuple(enumerate_ball(rank, radius))
    index = {word.letters: i for i, word in enumerate(words)}
    tails: list[int] = []
    heads: list[int] = []
    gens: list[int] = []
    edges: dict[tuple[int, int], int] = {}
    for i, word in enumerate(words):
        for gen in range(rank):
            j = index.get(_step(word.letters, (gen, 1)))
            if j is None:
                continue
            edges[(i, j)] = len(tails)
            tails.append(i)
            heads.append(j)
            gens.append(gen)
    return TreeBall(
        rank=rank,
        radius=radius,
        words=words,
        tails=np.asarray(tails, dtype=np.int64),
        heads=np.asarray(heads, dtype=np.int64),
        generators=np.asarray(gens, dtype=np.int64),
        labels=tuple(labels) if labels is not None else default_labels(rank),
        _index=index,
        _edges=edges,
    )


@dataclass(frozen=True, eq=False)
class EdgeFunction:
    ball: TreeBall
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.shape != (self.ball.edge_count,):
            raise DimensionMismatchError(
                f"expected {self.ball.edge_count} edge values, got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def exact(self) -> bool:
        return self.values.dtype == object

    def at(self, x: Word, y: Word) -> Any:
        index, sign = self.ball.edge(x, y)
        return sign * self.values[index]

    def norm(self, p: float = 2.0) -> float:
        magnitudes = np.abs(self.values.astype(float))
        if math.isinf(p):
            return float(magnitudes.max()) if magnitudes.size else 0.0
        return float(np.sum(magnitudes**p) ** (1.0 / p))

    def power_sum(self, p: int = 2) -> Any:
        """sum |f|^p, exact for exact functions and integer p."""
        return sum(abs(value) ** p for value in self.values)

    def _check(self, other: EdgeFunction) -> None:
        if other.ball is not self.ball:
            raise DimensionMismatchError("edge functions live on different balls")

    def __add__(self, other: EdgeFunction) -> EdgeFunction:
        self._check(other)
        return EdgeFunction(self.ball, self.values + other.values)

    def __sub__(self, other: EdgeFunction) -> EdgeFunction:
        self._check(other)
        return EdgeFunction(self.ball, self.values - other.values)

    def scaled(self, factor: Any) -> EdgeFunction:
        return EdgeFunction(self.ball, self.values * factor)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values != 0)


def zero_edges(ball: TreeBall, exact: bool = False) -> EdgeFunction:
    if exact:
        return EdgeFunction(ball, np.array([Fraction(0)] * ball.edge_count, dtype=object))
    return EdgeFunction(ball, np.zeros(ball.edge_count))


def basis_edge(ball: TreeBall, x: Word, y: Word, exact: bool = False) -> EdgeFunction:
    """E_(x,y): 1 on (x, y) and -1 on (y, x)."""
    f = zero_edges(ball, exact)
    index, sign = ball.edge(x, y)
    f.values[index] = Fraction(sign) if exact else float(sign)
    return f


def coboundary(values: np.ndarray, ball: TreeBall) -> EdgeFunction:
    """(delta f)(x, s) = f(s) - f(x) on every edge of the ball."""
    values = np.asarray(values)
    if values.shape != (ball.vertex_count,):
        raise DimensionMismatchError("vertex function does not match the ball")
    return EdgeFunction(ball, values[ball.heads] - values[ball.tails])


def boundary(f: EdgeFunction, ball: TreeBall | None = None) -> np.ndarray:
    """The transpose of the coboundary: sum of incoming minus outgoing canonical values.

    Values at vertices outside `ball.interior` see a truncated neighbourhood.
    """
    ball = ball or f.ball
    if f.ball is not ball:
        raise DimensionMismatchError("edge function lives on another ball")
    out = ball.vertex_function(f.exact)
    np.add.at(out, ball.heads, f.values)
    np.subtract.at(out, ball.tails, f.values)
    return out


def edge_pairing(f: EdgeFunction, g: EdgeFunction) -> Any:
    """sum over edges of f * g (each undirected edge counted once)."""
    f._check(g)
    if f.exact or g.exact:
        return sum(a * b for a, b in zip(f.values, g.values))
    return float(np.dot(f.values, g.values))


def coboundary_constant(ball: TreeBall) -> float:
    """Smallest ||delta f||_2 / ||f||_2 over f supported on interior vertices."""
    columns = ball.incidence[:, ball.interior_indices].toarray()
    if columns.size == 0:
        return 0.0
    return float(np.linalg.svd(columns, compute_uv=False).min())


@dataclass(frozen=True, eq=False)
class AveragingOperator:
    ball: TreeBall
    matrix: sparse.csr_matrix
    interior_matrix: sparse.csr_matrix
    p: float
    truncated_norm: float
    iterations: int

    @property
    def norm_estimate(self) -> float:
        if self.p == 2:
            return self.truncated_norm
        return interpolated_constant(self.truncated_norm, self.p)

    @cached_property
    def limit(self) -> float:
        return limit_estimate(self.ball, self.truncated_norm)


def interpolated_constant(c2: float, p: float) -> float:
    """Riesz-Thorin bound C_p = C_2^theta from ||A||_1 <= 1; p > 2 by duality."""
    if p < 1:
        raise PreconditionError("p must be at least 1")
    if math.isinf(p) or p == 1:
        return 1.0
    exponent = p if p <= 2 else p / (p - 1)
    theta = 2 * (1 - 1 / exponent)
    return float(c2**theta)


def _power_norm(matrix: sparse.csr_matrix) -> tuple[float, int]:
    size = matrix.shape[0]
    if size == 0:
        return 0.0, 0
    vector = np.ones(size) / math.sqrt(size)
    estimate = 0.0
    for step in range(1, POWER_MAX_STEPS + 1):
        image = matrix @ vector
        length = float(np.linalg.norm(image))
        if length == 0.0:
            return 0.0, step
        if abs(length - estimate) < POWER_TOLERANCE:
            return length, step
        estimate = length
        vector = image / length
    raise ConvergenceError("power iteration did not settle")


def averaging_operator(ball: TreeBall, p: float = 2.0) -> AveragingOperator:
    """A f(x) = mean of f over the 2n neighbours of x for interior x; zero rows elsewhere."""
    if ball.rank < 2:
        raise PreconditionError("the averaging operator contracts only for rank n >= 2")
    adjacency = sparse.coo_matrix(
        (np.ones(ball.edge_count), (ball.tails, ball.heads)),
        shape=(ball.vertex_count, ball.vertex_count),
    )
    adjacency = (adjacency + adjacency.T).tocsr()
    keep = sparse.diags(ball.interior.astype(float))
    matrix = (keep @ adjacency / (2 * ball.rank)).tocsr()
    inner = ball.interior_indices
    interior_matrix = matrix[inner][:, inner].tocsr()
    norm, steps = _power_norm(interior_matrix)
    return AveragingOperator(ball, matrix, interior_matrix, p, norm, steps)


def _radial_value(theta: float, rank: int, radius: int) -> float:
    """f(R) for the radial eigenfunction with eigenvalue rho cos(theta), f(0) = 1."""
    branching = 2 * rank - 1
    value = math.sqrt(branching) / rank * math.cos(theta)
    previous, current = 1.0, value
    for _ in range(1, radius):
        previous, current = current, (2 * rank * value * current - previous) / branching
    return current if radius > 0 else previous


def limit_estimate(ball: TreeBall, truncated_norm: float) -> float:
    """Divide out the Dirichlet boundary factor cos(theta_R) of the radial spectrum."""
    rank, radius = ball.rank, ball.radius
    if radius < 1 or truncated_norm <= 0:
        return truncated_norm
    grid = np.linspace(1e-9, math.pi - 1e-9, 4096)
    signs = np.sign([_radial_value(theta, rank, radius) for theta in grid])
    changes = np.flatnonzero(signs[:-1] * signs[1:] <= 0)
    if changes.size == 0:
        raise ConvergenceError("no Dirichlet root found for the radial recurrence")
    left = grid[changes[0]]
    right = grid[changes[0] + 1]
    theta = brentq(_radial_value, left, right, args=(rank, radius), xtol=1e-14)
    return truncated_norm / math.cos(theta)


def laplacian_solve(
    h: np.ndarray,
    ball: TreeBall,
    method: str = "direct",
    operator: AveragingOperator | None = None,
) -> np.ndarray:
    """g supported on the interior with (boundary o coboundary) g = h at interior vertices."""
    h = np.asarray(h, dtype=float)
    if h.shape != (ball.vertex_count,):
        raise DimensionMismatchError("vertex function does not match the ball")
    if np.any(h[~ball.interior] != 0):
        raise PreconditionError("h must vanish outside the interior")
    inner = ball.interior_indices
    degree = 2 * ball.rank
    rhs = h[inner]
    g = np.zeros(ball.vertex_count)
    if not np.any(rhs):
        return g
    if method == "neumann":
        operator = operator or averaging_operator(ball)
        if operator.truncated_norm >= 1:
            raise ConvergenceError(
                f"averaging norm estimate {operator.truncated_norm:.6g} is not below 1"
            )
        term = rhs / degree
        total = term.copy()
        for _ in range(NEUMANN_MAX_STEPS):
            term = operator.interior_matrix @ term
            total += term
            if np.linalg.norm(term) < NEUMANN_TOLERANCE:
                break
        else:
            raise ConvergenceError("Neumann series did not converge")
        g[inner] = total
    elif method == "direct":
        laplacian = (ball.incidence.T @ ball.incidence).tocsc()[inner][:, inner]
        g[inner] = spsolve(laplacian.tocsc(), rhs)
    else:
        raise PreconditionError(f"unknown solver {method!r}")
    residual = boundary(coboundary(g, ball))[inner] - rhs
    if np.linalg.norm(residual) >= RESIDUAL_LIMIT * max(1.0, float(np.linalg.norm(rhs))):
        raise ConvergenceError(f"Laplacian residual {np.linalg.norm(residual):.3g} too large")
    return g


@dataclass(frozen=True, eq=False)
class HodgeDecomposition:
    harmonic: EdgeFunction
    exact_part: EdgeFunction
    potential: np.ndarray

    @property
    def interior_residual(self) -> float:
        ball = self.harmonic.ball
        return float(np.linalg.norm(boundary(self.harmonic)[ball.interior].astype(float)))


def hodge_decompose(
    f: EdgeFunction, method: str = "direct", operator: AveragingOperator | None = None
) -> HodgeDecomposition:
    """f = h + delta g with boundary(h) = 0 at interior vertices."""
    ball = f.ball
    if ball.rank < 2:
        raise PreconditionError("Hodge decomposition needs rank n >= 2")
    divergence = boundary(f).astype(float)
    divergence[~ball.interior] = 0.0
    g = laplacian_solve(divergence, ball, method, operator)
    exact_part = coboundary(g, ball)
    return HodgeDecomposition(f - exact_part, exact_part, g)


def tree_flow(ball: TreeBall, exact: bool = False) -> EdgeFunction:
    """Unit flow out of e along positive generators and into e along inverses.

    An edge between depths k and k+1 carries (2n-1)^-k, oriented away from e when the
    deeper word starts with a positive letter and toward e otherwise.
    """
    branching = 2 * ball.rank - 1
    depths = ball.depths
    tail_depth = depths[ball.tails]
    head_depth = depths[ball.heads]
    outward = head_depth > tail_depth
    values = []
    for edge in range(ball.edge_count):
        shallow = int(min(tail_depth[edge], head_depth[edge]))
        deep_vertex = ball.heads[edge] if outward[edge] else ball.tails[edge]
        first = ball.words[deep_vertex].letters[0]
        away = first[1] > 0
        sign = 1 if away == bool(outward[edge]) else -1
        weight = Fraction(1, branching**shallow) if exact else branching ** (-float(shallow))
        values.append(sign * weight)
    return EdgeFunction(ball, np.array(values, dtype=object if exact else float))


def flow_generator(ball: TreeBall, exact: bool = False) -> EdgeFunction:
    """The F_2 flow with weights 1, 1/3, 1/9, ... by depth."""
    if ball.rank != 2:
        raise PreconditionError("the flow generator lives on F_2; use embed_via_phi for F_n")
    return tree_flow(ball, exact)


def flow_power_sum(rank: int, radius: int, p: int = 2) -> Fraction:
    """Closed form 2n * sum_{k<R} (2n-1)^k (2n-1)^(-kp)."""
    branching = 2 * rank - 1
    return 2 * rank * sum(
        Fraction(branching**k, branching ** (k * p)) for k in range(radius)
    )


def embed_via_phi(f: EdgeFunction, shift: int, rank: int) -> EdgeFunction:
    """Push an F_2 edge function along a_i -> a_{i+shift} (indices mod n) into F_n."""
    source = f.ball
    if source.rank != 2:
        raise PreconditionError("embed_via_phi pushes functions on F_2 balls")
    if not 1 <= shift <= rank - 1:
        raise PreconditionError(f"shift must lie in 1..{rank - 1}")
    target = tree_ball(rank, source.radius)
    out = zero_edges(target, f.exact)
    for edge, value in enumerate(f.values):
        tail = source.words[source.tails[edge]]
        head = source.words[source.heads[edge]]
        index, sign = target.edge(_relabel(tail, shift, rank), _relabel(head, shift, rank))
        out.values[index] = sign * value
    return out


def _relabel(word: Word, shift: int, rank: int) -> Word:
    return Word(tuple(((gen + shift) % rank, sign) for gen, sign in word.letters))


@dataclass(frozen=True, eq=False)
class SourcePush:
    result: EdgeFunction
    potential: np.ndarray
    level: int

    def central_values(self) -> list[Any]:
        """Values on the 2n edges at e, oriented along the flow."""
        ball = self.result.ball
        out = []
        for gen in range(ball.rank):
            out.append(self.result.at(IDENTITY, Word.generator(gen)))
            out.append(self.result.at(Word.generator(gen, -1), IDENTITY))
        return out


def source_push(f: EdgeFunction, level: int) -> SourcePush:
    """Move the flow's outer sources inward, one depth at a time from level-1 down to 1.

    Each vertex w at depth l gets c_w delta(chi_w) with c_w the oriented value on its child
    edges, so those edges vanish. The result differs from f by delta(potential).
    """
    ball = f.ball
    if not 1 <= level <= ball.radius - 1:
        raise PreconditionError(f"level must lie in 1..{ball.radius - 1}")
    values = f.values.copy()
    potential = ball.vertex_function(f.exact)
    depths = ball.depths
    children = _child_edges(ball)
    parents = ball.parent_edges
    for depth in range(level - 1, 0, -1):
        for vertex in np.flatnonzero(depths == depth):
            edge = children[vertex][0]
            oriented = values[edge] if ball.tails[edge] == vertex else -values[edge]
            if oriented == 0:
                continue
            potential[vertex] += oriented
            for other in [*children[vertex], parents[vertex]]:
                values[other] += oriented if ball.heads[other] == vertex else -oriented
    return SourcePush(EdgeFunction(ball, values), potential, level)


def _child_edges(ball: TreeBall) -> list[list[int]]:
    children: list[list[int]] = [[] for _ in range(ball.vertex_count)]
    depths = ball.depths
    for edge in range(ball.edge_count):
        tail, head = ball.tails[edge], ball.heads[edge]
        parent = tail if depths[tail] < depths[head] else head
        children[parent].append(edge)
    return children


def source_push_central(level: int, rank: int = 2) -> Fraction:
    """sum_{l<level} (2n-1)^-l, the central edge value after pushing to `level`."""
    branching = 2 * rank - 1
    return sum((Fraction(1, branching**l) for l in range(level)), Fraction(0))


def source_push_limit(rank: int = 2) -> Fraction:
    branching = 2 * rank - 1
    return Fraction(branching, branching - 1)


@dataclass(frozen=True, eq=False)
class CohomologyPush:
    remainder: EdgeFunction
    potential: np.ndarray
    translates: tuple[tuple[int, Word, int], ...]
    level: int

    @property
    def far_edge(self) -> EdgeFunction:
        ball = self.remainder.ball
        last = Word.power(ball.rank - 1, self.level)
        return basis_edge(ball, last, last * Word.generator(ball.rank - 1), exact=True)


def cohomology_push(rank: int, level: int, ball: TreeBall | None = None) -> CohomologyPush:
    """w_k with E_(e, a_n) = E_(a_n^k, a_n^(k+1)) + w_k, built from the one-step identity

    E_(t^l, t^(l+1)) - E_(t^(l+1), t^(l+2)) = delta(chi_(t^(l+1)))
        + sum_(j<n) [E_(t^(l+1), t^(l+1) a_j) - E_(t^(l+1) a_j^-1, t^(l+1))].
    """
    ball = ball or tree_ball(rank, level + 2)
    if ball.rank != rank:
        raise DimensionMismatchError("ball rank differs from n")
    if level < 0 or ball.radius < level + 2:
        raise PreconditionError(f"cohomology_push needs radius >= {level + 2}")
    last = rank - 1
    potential = ball.vertex_function(exact=True)
    translates: list[tuple[int, Word, int]] = []
    for step in range(1, level + 1):
        anchor = Word.power(last, step)
        potential[ball.index(anchor)] += 1
        for gen in range(last):
            translates.append((1, anchor, gen))
            translates.append((-1, anchor * Word.generator(gen, -1), gen))
    values = coboundary(potential, ball).values
    for coefficient, origin, gen in translates:
        index, sign = ball.edge(origin, origin * Word.generator(gen))
        values[index] += coefficient * sign
    remainder = EdgeFunction(ball, values)
    return CohomologyPush(remainder, potential, tuple(translates), level)


def geodesic_primitive(f: EdgeFunction) -> np.ndarray:
    """(Af)(x) = sum of f along the geodesic from e to x."""
    ball = f.ball
    out = ball.vertex_function(f.exact)
    parents = ball.parent_edges
    for vertex in np.argsort(ball.depths, kind="stable"):
        edge = parents[vertex]
        if edge < 0:
            continue
        if ball.heads[edge] == vertex:
            out[vertex] = out[ball.tails[edge]] + f.values[edge]
        else:
            out[vertex] = out[ball.heads[edge]] - f.values[edge]
    return out


def _format_value(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    return value


def edge_frame(f: EdgeFunction) -> pd.DataFrame:
    """One row per canonical edge: tail word, generator label, value."""
    ball = f.ball
    return pd.DataFrame(
        {
            "word": [ball.words[t].format(ball.labels) for t in ball.tails],
            "generator": [ball.labels[g] for g in ball.generators],
            "value": [_format_value(v) for v in f.values],
        }
    )


def write_dot(
    f: EdgeFunction,
    path: Path,
    max_depth: int | None = None,
    header: Mapping[str, str] | None = None,
) -> Path:
    """Graphviz digraph of the labelled ball, edges drawn along their canonical orientation.

    `header` entries become `// key: value` comment lines above the graph.
    """
    ball = f.ball
    depth_limit = ball.radius if max_depth is None else max_depth
    lines = [f"// {key}: {value}" for key, value in (header or {}).items()]
    lines += ["digraph ball {", "  node [shape=circle, fontsize=10];"]
    for i, word in enumerate(ball.words):
        if ball.depths[i] <= depth_limit:
            lines.append(f'  v{i} [label="{word.format(ball.labels)}"];')
    for edge, value in enumerate(f.values):
        tail, head = ball.tails[edge], ball.heads[edge]
        if max(ball.depths[tail], ball.depths[head]) > depth_limit:
            continue
        lines.append(f'  v{tail} -> v{head} [label="{_format_value(value)}"];')
    lines.append("}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
