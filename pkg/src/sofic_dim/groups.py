from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
import re
from typing import Hashable, Sequence

import numpy as np

from .errors import DimensionMismatchError, PreconditionError, ResourceLimitError

Letter = tuple[int, int]

MAX_BALL_WORDS = 2_000_000
MAX_FINITE_ORDER = 64
REP_TOLERANCE = 1e-8

_SPEC_RE = re.compile(r"^\s*(free|cyclic|finite)\s*:\s*(\S.*?)\s*$", re.IGNORECASE)
_TOKEN_RE = re.compile(r"^(\w+?)(?:\^(-?\d+))?$")


def default_labels(rank: int) -> tuple[str, ...]:
    if rank <= 4:
        return tuple("abcd"[:rank])
    return tuple(f"a{index + 1}" for index in range(rank))


@dataclass(frozen=True)
class Word:
    letters: tuple[Letter, ...] = ()

    def __post_init__(self) -> None:
        for gen, sign in self.letters:
            if gen < 0 or sign not in (1, -1):
                raise PreconditionError(f"invalid letter ({gen}, {sign})")

    @classmethod
    def generator(cls, index: int, sign: int = 1) -> Word:
        return cls(((index, sign),))

    @classmethod
    def power(cls, index: int, exponent: int) -> Word:
        sign = 1 if exponent >= 0 else -1
        return cls(((index, sign),) * abs(exponent))

    @property
    def length(self) -> int:
        return len(self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: Word) -> Word:
        return word_reduce(Word(self.letters + other.letters))

    def concat(self, other: Word) -> Word:
        return Word(self.letters + other.letters)

    def inverse(self) -> Word:
        return Word(tuple((gen, -sign) for gen, sign in reversed(self.letters)))

    def is_reduced(self) -> bool:
        return all(
            self.letters[i] != (self.letters[i + 1][0], -self.letters[i + 1][1])
            for i in range(len(self.letters) - 1)
        )

    def sort_key(self) -> tuple[int, tuple[tuple[int, int], ...]]:
        return len(self.letters), tuple((gen, 0 if sign > 0 else 1) for gen, sign in self.letters)

    def format(self, labels: Sequence[str] | None = None) -> str:
        if not self.letters:
            return "e"
        if labels is None:
            labels = default_labels(max(gen for gen, _ in self.letters) + 1)
        return " ".join(
            labels[gen] if sign > 0 else f"{labels[gen]}^-1" for gen, sign in self.letters
        )

    def __str__(self) -> str:
        return self.format()


IDENTITY = Word()


def word_reduce(word: Word) -> Word:
    stack: list[Letter] = []
    for gen, sign in word.letters:
        if stack and stack[-1] == (gen, -sign):
            stack.pop()
        else:
            stack.append((gen, sign))
    return Word(tuple(stack))


def parse_word(text: str, labels: Sequence[str]) -> Word:
    stripped = text.strip()
    if stripped in ("", "e"):
        return IDENTITY
    index = {label: position for position, label in enumerate(labels)}
    letters: list[Letter] = []
    for token in stripped.split():
        match = _TOKEN_RE.match(token)
        if not match or match.group(1) not in index:
            raise PreconditionError(f"unknown word token {token!r}")
        exponent = int(match.group(2)) if match.group(2) else 1
        letters.extend(Word.power(index[match.group(1)], exponent).letters)
    return Word(tuple(letters))


@dataclass(frozen=True)
class GroupSpec:
    kind: str
    rank: int
    order: int | None = None
    table: tuple[tuple[int, ...], ...] | None = None
    labels: tuple[str, ...] = ()
    identity_index: int = 0
    source: str = ""

    @property
    def is_finite(self) -> bool:
        return self.kind in ("cyclic", "finite")

    @property
    def text(self) -> str:
        if self.kind == "free":
            return f"free:{self.rank}"
        if self.kind == "cyclic":
            return f"cyclic:{self.order}"
        return f"finite:{self.source or 'table'}"

    def elements(self) -> list[int]:
        if not self.is_finite:
            raise PreconditionError(f"{self.text} has no finite element list")
        return list(range(self.order or 0))

    @cached_property
    def generator_elements(self) -> tuple[int, ...]:
        if self.kind == "cyclic":
            return (1 % (self.order or 1),)
        if self.kind == "finite":
            return tuple(x for x in range(self.order or 0) if x != self.identity_index)
        raise PreconditionError("free groups have no element table")

    @property
    def identity_element(self) -> Hashable:
        if self.kind == "free":
            return IDENTITY
        if self.kind == "cyclic":
            return 0
        return self.identity_index

    def multiply(self, left: Hashable, right: Hashable) -> Hashable:
        if self.kind == "free":
            return left * right  # type: ignore[operator]
        if self.kind == "cyclic":
            return (int(left) + int(right)) % int(self.order)  # type: ignore[arg-type]
        return self.table[int(left)][int(right)]  # type: ignore[index,arg-type]

    def inverse_element(self, element: Hashable) -> Hashable:
        if self.kind == "free":
            return element.inverse()  # type: ignore[union-attr]
        if self.kind == "cyclic":
            return (-int(element)) % int(self.order)  # type: ignore[arg-type]
        row = self.table[int(element)]  # type: ignore[index,arg-type]
        return row.index(self.identity_index)

    def evaluate(self, word: Word) -> Hashable:
        if self.kind == "free":
            return word_reduce(word)
        value = self.identity_element
        for gen, sign in word.letters:
            if gen >= self.rank:
                raise PreconditionError(f"generator {gen} out of range for {self.text}")
            letter = self.generator_elements[gen]
            if sign < 0:
                letter = self.inverse_element(letter)
            value = self.multiply(value, letter)
        return value

    @cached_property
    def element_words(self) -> dict[Hashable, Word]:
        """Shortest word per element, first found in canonical letter order."""
        if not self.is_finite:
            raise PreconditionError("element words only exist for finite groups")
        words: dict[Hashable, Word] = {self.identity_element: IDENTITY}
        queue: deque[Word] = deque([IDENTITY])
        letters = _ordered_letters(self.rank)
        while queue:
            word = queue.popleft()
            for letter in letters:
                candidate = Word(word.letters + (letter,))
                element = self.evaluate(candidate)
                if element not in words:
                    words[element] = candidate
                    queue.append(candidate)
        return words


def free_group(rank: int, labels: Sequence[str] | None = None) -> GroupSpec:
    if rank < 1:
        raise PreconditionError("free group rank must be positive")
    return GroupSpec("free", rank, labels=tuple(labels or default_labels(rank)))


def cyclic_group(order: int) -> GroupSpec:
    if order < 1:
        raise PreconditionError("cyclic order must be at least 1")
    return GroupSpec("cyclic", 1, order=order, labels=("a",))


def finite_group(
    table: Sequence[Sequence[int]] | np.ndarray, source: str = ""
) -> GroupSpec:
    array = np.asarray(table, dtype=int)
    identity = _validate_table(array)
    order = array.shape[0]
    generators = [x for x in range(order) if x != identity]
    return GroupSpec(
        "finite",
        len(generators),
        order=order,
        table=tuple(tuple(int(v) for v in row) for row in array),
        labels=tuple(f"g{x}" for x in generators),
        identity_index=identity,
        source=source,
    )


def _validate_table(table: np.ndarray) -> int:
    if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] == 0:
        raise PreconditionError("multiplication table must be a non-empty square array")
    order = table.shape[0]
    if order > MAX_FINITE_ORDER:
        raise ResourceLimitError(f"finite groups are limited to {MAX_FINITE_ORDER} elements")
    if table.min() < 0 or table.max() >= order:
        raise PreconditionError("multiplication table entries out of range")
    span = np.arange(order)
    identities = [
        e
        for e in range(order)
        if np.array_equal(table[e], span) and np.array_equal(table[:, e], span)
    ]
    if not identities:
        raise PreconditionError("multiplication table has no identity")
    for row in table:
        if len(set(row.tolist())) != order:
            raise PreconditionError("multiplication table rows must be permutations")
    for column in table.T:
        if len(set(column.tolist())) != order:
            raise PreconditionError("multiplication table columns must be permutations")
    left = table[table]
    right = table[span[:, None, None], table[None, :, :]]
    if not np.array_equal(left, right):
        raise PreconditionError("multiplication table is not associative")
    return identities[0]


def parse_group_spec(text: str, base_dir: Path | None = None) -> GroupSpec:
    match = _SPEC_RE.match(text or "")
    if not match:
        raise PreconditionError(
            f"invalid group spec {text!r}: expected free:n, cyclic:k or finite:path"
        )
    kind = match.group(1).lower()
    argument = match.group(2)
    if kind == "finite":
        path = Path(argument)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise PreconditionError(f"invalid group spec {text!r}: table file not found")
        return finite_group(np.loadtxt(path, dtype=int, ndmin=2), source=argument)
    try:
        value = int(argument)
    except ValueError as exc:
        raise PreconditionError(f"invalid group spec {text!r}: expected an integer") from exc
    if kind == "free":
        return free_group(value)
    return cyclic_group(value)


def _ordered_letters(rank: int) -> list[Letter]:
    letters: list[Letter] = []
    for gen in range(rank):
        letters.append((gen, 1))
        letters.append((gen, -1))
    return letters


def ball_size(rank: int, radius: int) -> int:
    if radius < 0:
        raise PreconditionError("radius must be non-negative")
    if rank == 1:
        return 2 * radius + 1
    return 1 + 2 * rank * ((2 * rank - 1) ** radius - 1) // (2 * rank - 2)


def enumerate_ball(spec: GroupSpec | int, radius: int, limit: int = MAX_BALL_WORDS) -> list[Word]:
    if isinstance(spec, GroupSpec):
        if spec.kind != "free":
            raise PreconditionError("balls are enumerated in free groups")
        rank = spec.rank
    else:
        rank = int(spec)
    if rank < 1:
        raise PreconditionError("free group rank must be positive")
    expected = ball_size(rank, radius)
    if expected > limit:
        raise ResourceLimitError(
            f"ball of radius {radius} in F_{rank} has {expected} words (limit {limit})"
        )
    letters = _ordered_letters(rank)
    words = [IDENTITY]
    frontier = [IDENTITY]
    for _ in range(radius):
        grown: list[Word] = []
        for word in frontier:
            last = word.letters[-1] if word.letters else None
            for letter in letters:
                if last is not None and letter == (last[0], -last[1]):
                    continue
                grown.append(Word(word.letters + (letter,)))
        words.extend(grown)
        frontier = grown
    return words


@dataclass(frozen=True, eq=False)
class FinRep:
    matrices: tuple[np.ndarray, ...]
    group: GroupSpec | None = None
    inverses: tuple[np.ndarray, ...] = field(init=False, repr=False)
    bound: float = field(init=False)

    def __post_init__(self) -> None:
        matrices = tuple(np.array(m, dtype=complex) for m in self.matrices)
        if not matrices:
            raise PreconditionError("a representation needs at least one generator matrix")
        dim = matrices[0].shape[0]
        for matrix in matrices:
            if matrix.shape != (dim, dim) or dim == 0:
                raise DimensionMismatchError("generator matrices must share a square shape")
            if np.linalg.cond(matrix) > 1e12:
                raise PreconditionError("generator matrix is not invertible")
        if self.group is not None and self.group.rank != len(matrices):
            raise DimensionMismatchError(
                f"{self.group.text} needs {self.group.rank} matrices, got {len(matrices)}"
            )
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "inverses", tuple(np.linalg.inv(m) for m in matrices))
        if self.group is not None and self.group.is_finite:
            self._check_relations()
            norms = [np.linalg.norm(self.element_matrix(x), 2) for x in self.group.elements()]
        else:
            norms = [np.linalg.norm(m, 2) for m in (*matrices, *self.inverses)]
        object.__setattr__(self, "bound", float(max(norms)))

    @property
    def dimension(self) -> int:
        return self.matrices[0].shape[0]

    def _check_relations(self) -> None:
        group = self.group
        assert group is not None
        eye = np.eye(self.dimension)
        if group.kind == "cyclic":
            power = np.linalg.matrix_power(self.matrices[0], int(group.order))
            if not np.allclose(power, eye, atol=REP_TOLERANCE):
                raise PreconditionError(f"generator matrix to the power {group.order} is not I")
            return
        for left in group.generator_elements:
            for right in group.generator_elements:
                product = self.element_matrix(left) @ self.element_matrix(right)
                expected = self.element_matrix(group.multiply(left, right))
                if not np.allclose(product, expected, atol=REP_TOLERANCE):
                    raise PreconditionError(
                        f"matrices do not respect the table at ({left}, {right})"
                    )

    def element_matrix(self, element: Hashable) -> np.ndarray:
        group = self.group
        if group is None or not group.is_finite:
            if isinstance(element, Word):
                return rep_apply(self, element, np.eye(self.dimension, dtype=complex))
            raise PreconditionError("element matrices need a finite group or a word")
        if element == group.identity_element:
            return np.eye(self.dimension, dtype=complex)
        if group.kind == "cyclic":
            return np.linalg.matrix_power(self.matrices[0], int(element))  # type: ignore[arg-type]
        return self.matrices[group.generator_elements.index(int(element))]  # type: ignore[arg-type]


def rep_apply(rep: FinRep, word: Word, vector: np.ndarray) -> np.ndarray:
    values = np.asarray(vector)
    if values.shape[0] != rep.dimension:
        raise DimensionMismatchError(
            f"vector has dimension {values.shape[0]}, representation {rep.dimension}"
        )
    out = values.astype(complex)
    for gen, sign in reversed(word.letters):
        if gen >= len(rep.matrices):
            raise DimensionMismatchError(f"generator {gen} has no matrix")
        out = (rep.matrices[gen] if sign > 0 else rep.inverses[gen]) @ out
    return out


def character_rep(group: GroupSpec, characters: Sequence[int]) -> FinRep:
    """Diagonal representation of a cyclic group by the characters k -> exp(2 pi i c k / n)."""
    if group.kind != "cyclic":
        raise PreconditionError("character representations are defined for cyclic groups")
    order = int(group.order)  # type: ignore[arg-type]
    diagonal = np.exp(2j * np.pi * np.asarray(characters, dtype=float) / order)
    return FinRep((np.diag(diagonal),), group)


def trivial_rep(group: GroupSpec, dimension: int = 1) -> FinRep:
    return FinRep(tuple(np.eye(dimension) for _ in range(group.rank)), group)


def is_diagonal(rep: FinRep) -> bool:
    return all(
        np.allclose(m, np.diag(np.diag(m)), atol=REP_TOLERANCE) for m in rep.matrices
    )
