"""First l^p-Betti number counts for F_n from finite Schreier models."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
import math
from typing import Iterable
import warnings

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import PreconditionError
from .parallel import ordered_map
from .sofic import SoficMap, random_perm_model

EXACT_RANK_LIMIT = 2000
BETTI_COLUMNS = ["seed", "n", "d", "components", "rank", "estimate"]


class UnionFind:
    def __init__(self, size: int) -> None:
        self._parent = list(range(size))
        self._size = [1] * size
        self.count = size

    def find(self, item: int) -> int:
        parent = self._parent
        while parent[item] != item:
            parent[item] = parent[parent[item]]
            item = parent[item]
        return item

    def union(self, left: int, right: int) -> bool:
        a, b = self.find(left), self.find(right)
        if a == b:
            return False
        if self._size[a] < self._size[b]:
            a, b = b, a
        self._parent[b] = a
        self._size[a] += self._size[b]
        self.count -= 1
        return True


@dataclass(frozen=True, eq=False)
class SchreierComplex:
    sofic_map: SoficMap
    matrix: sparse.csr_matrix
    components: int

    @property
    def rank_n(self) -> int:
        return len(self.sofic_map.generators)

    @property
    def degree(self) -> int:
        return self.sofic_map.degree

    def graph_components(self) -> int:
        """Component count from scipy's graph search, for cross-checking union-find."""
        d = self.degree
        rows = np.tile(np.arange(d), self.rank_n)
        cols = np.concatenate(self.sofic_map.generators)
        adjacency = sparse.csr_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(d, d))
        count, _ = connected_components(adjacency, directed=False)
        return int(count)


def build_complex(sofic_map: SoficMap) -> SchreierComplex:
    """Rows j*d + v of (delta f)(v, j) = f(sigma(a_j) v) - f(v); fixed points give zero rows."""
    d = sofic_map.degree
    points = np.arange(d)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    forest = UnionFind(d)
    for j, perm in enumerate(sofic_map.generators):
        moved = perm != points
        index = j * d + points[moved]
        rows.extend([index, index])
        cols.extend([perm[moved], points[moved]])
        data.extend([np.ones(index.shape[0]), -np.ones(index.shape[0])])
        for v, w in zip(points[moved], perm[moved]):
            forest.union(int(v), int(w))
    shape = (len(sofic_map.generators) * d, d)
    if rows:
        matrix = sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
        )
    else:
        matrix = sparse.csr_matrix(shape)
    return SchreierComplex(sofic_map, matrix, forest.count)


def integer_rank(matrix: sparse.spmatrix | np.ndarray) -> int:
    """Exact rank of an integer matrix by fraction-free sparse row elimination."""
    coo = sparse.coo_matrix(matrix)
    if coo.nnz and not np.array_equal(coo.data, np.round(coo.data)):
        raise PreconditionError("integer_rank needs integer entries")
    rows: dict[int, dict[int, int]] = defaultdict(dict)
    for r, c, value in zip(coo.row, coo.col, coo.data):
        entry = rows[int(r)].get(int(c), 0) + int(value)
        rows[int(r)][int(c)] = entry
    for entries in rows.values():
        for c in [c for c, v in entries.items() if v == 0]:
            del entries[c]
    holders: dict[int, set[int]] = defaultdict(set)
    for r, entries in rows.items():
        for c in entries:
            holders[c].add(r)
    rank = 0
    for column in range(coo.shape[1]):
        candidates = holders.pop(column, set())
        if not candidates:
            continue
        pivot_id = min(candidates, key=lambda r: (len(rows[r]), r))
        pivot = rows.pop(pivot_id)
        for c in pivot:
            holders[c].discard(pivot_id)
        rank += 1
        a = pivot[column]
        for r in candidates - {pivot_id}:
            row = rows.pop(r)
            b = row[column]
            for c in row:
                holders[c].discard(r)
            combined = {}
            for c in row.keys() | pivot.keys():
                value = a * row.get(c, 0) - b * pivot.get(c, 0)
                if value:
                    combined[c] = value
            if not combined:
                continue
            divisor = reduce(math.gcd, combined.values())
            rows[r] = {c: v // divisor for c, v in combined.items()}
            for c in rows[r]:
                holders[c].add(r)
    return rank


@dataclass(frozen=True)
class BettiReport:
    seed: int | None
    rank_n: int
    degree: int
    components: int
    rank: int

    @property
    def cochains0(self) -> int:
        return self.degree

    @property
    def cochains1(self) -> int:
        return self.rank_n * self.degree

    @property
    def h0(self) -> int:
        return self.degree - self.rank

    @property
    def h1(self) -> int:
        return self.cochains1 - self.rank

    @property
    def estimate(self) -> Fraction:
        return Fraction(self.h1, self.degree)

    @property
    def euler(self) -> Fraction:
        return Fraction(self.h0 - self.h1, self.degree)

    def to_row(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "n": self.rank_n,
            "d": self.degree,
            "components": self.components,
            "rank": self.rank,
            "estimate": str(self.estimate),
        }


def betti1_estimate(complex_: SchreierComplex) -> BettiReport:
    d = complex_.degree
    if d <= EXACT_RANK_LIMIT:
        rank = integer_rank(complex_.matrix)
    else:
        warnings.warn(
            f"d={d} exceeds {EXACT_RANK_LIMIT}; using rank = d - components",
            RuntimeWarning,
            stacklevel=2,
        )
        rank = d - complex_.components
    return BettiReport(
        seed=complex_.sofic_map.seed,
        rank_n=complex_.rank_n,
        degree=d,
        components=complex_.components,
        rank=rank,
    )


def betti_table(
    rank_n: int,
    degrees: Iterable[int],
    seeds: Iterable[int],
    workers: int | None = None,
) -> pd.DataFrame:
    cells = [(int(d), int(seed)) for d in degrees for seed in seeds]

    def run(cell: tuple[int, int]) -> dict[str, object]:
        degree, seed = cell
        report = betti1_estimate(build_complex(random_perm_model(rank_n, degree, seed)))
        return report.to_row()

    return pd.DataFrame(ordered_map(run, cells, workers), columns=BETTI_COLUMNS)


def exact_sequence_report(report: BettiReport) -> dict[str, object]:
    """Dimensions along 0 -> H^0 -> C^0 -> C^1 -> H^1 -> 0, normalized by d where noted."""
    return {
        "dim_c0": report.cochains0,
        "dim_c1": report.cochains1,
        "rank": report.rank,
        "h0": report.h0,
        "h1": report.h1,
        "normalized_h1": str(report.estimate),
        "normalized_euler": str(report.euler),
        "expected_euler": 1 - report.rank_n,
    }
