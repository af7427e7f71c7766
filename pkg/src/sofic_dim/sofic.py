from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import DimensionMismatchError, PreconditionError
from .groups import (
    GroupSpec,
    Word,
    finite_group,
    free_group,
    parse_group_spec,
    parse_word,
)
from .parallel import rng_stream


def identity_perm(degree: int) -> np.ndarray:
    return np.arange(degree, dtype=np.int64)


def compose(sigma: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """sigma after tau: j -> sigma[tau[j]]."""
    if sigma.shape != tau.shape:
        raise DimensionMismatchError(f"degrees differ: {sigma.shape[0]} vs {tau.shape[0]}")
    return sigma[tau]


def inverse(sigma: np.ndarray) -> np.ndarray:
    out = np.empty_like(sigma)
    out[sigma] = np.arange(sigma.shape[0], dtype=sigma.dtype)
    return out


def is_permutation(values: np.ndarray) -> bool:
    return values.ndim == 1 and np.array_equal(np.sort(values), np.arange(values.shape[0]))


def hamming_distance(
    sigma: np.ndarray, tau: np.ndarray, indices: np.ndarray | None = None
) -> float:
    """Fraction of points moved differently; optionally restricted to an index set."""
    sigma = np.asarray(sigma)
    tau = np.asarray(tau)
    if sigma.shape != tau.shape:
        raise DimensionMismatchError(f"degrees differ: {sigma.shape[0]} vs {tau.shape[0]}")
    if indices is not None:
        sigma = sigma[indices]
        tau = tau[indices]
    if sigma.shape[0] == 0:
        return 0.0
    return float(np.count_nonzero(sigma != tau)) / sigma.shape[0]


@dataclass(frozen=True)
class DefectReport:
    defect: float
    freeness: float
    pairs: int
    distinct_pairs: int
    worst_pair: tuple[str, str] | None = None


@dataclass(frozen=True, eq=False)
class SoficMap:
    group: GroupSpec
    degree: int
    generators: tuple[np.ndarray, ...]
    images: dict[Hashable, np.ndarray] = field(default_factory=dict)
    seed: int | None = None
    model: str = ""

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise PreconditionError("degree must be at least 1")
        if len(self.generators) != self.group.rank:
            raise DimensionMismatchError(
                f"{self.group.text} needs {self.group.rank} generator permutations"
            )
        perms = tuple(np.asarray(g, dtype=np.int64) for g in self.generators)
        images = {key: np.asarray(v, dtype=np.int64) for key, v in self.images.items()}
        for perm in (*perms, *images.values()):
            if perm.shape != (self.degree,) or not is_permutation(perm):
                raise PreconditionError("stored images must be permutations of the degree")
        identity = self.group.identity_element
        if identity in images and not np.array_equal(images[identity], identity_perm(self.degree)):
            raise PreconditionError("the identity must map to the identity permutation")
        for perm in (*perms, *images.values()):
            perm.setflags(write=False)
        object.__setattr__(self, "generators", perms)
        object.__setattr__(self, "images", images)
        object.__setattr__(
            self, "_inverse_generators", tuple(inverse(perm) for perm in perms)
        )

    def letter(self, gen: int, sign: int) -> np.ndarray:
        if gen >= len(self.generators):
            raise PreconditionError(f"generator {gen} out of range")
        if sign > 0:
            return self.generators[gen]
        return self._inverse_generators[gen]  # type: ignore[attr-defined]

    def product(self, word: Word) -> np.ndarray:
        """The product path sigma(g1)...sigma(gk) of generator images."""
        result = identity_perm(self.degree)
        for gen, sign in word.letters:
            result = compose(result, self.letter(gen, sign))
        return result

    def image(self, word: Word) -> np.ndarray:
        """The direct image sigma(g1...gk) when stored, else the product path."""
        element = self.group.evaluate(word)
        if element == self.group.identity_element:
            return identity_perm(self.degree)
        stored = self.images.get(element)
        if stored is not None:
            return stored
        return self.product(word)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "group": self.group.text,
            "degree": self.degree,
            "seed": self.seed,
            "model": self.model,
            "generators": [perm.tolist() for perm in self.generators],
            "images": [
                {"element": _element_text(self.group, key), "perm": perm.tolist()}
                for key, perm in self.images.items()
            ],
        }
        if self.group.kind == "finite":
            data["table"] = [list(row) for row in self.group.table or ()]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SoficMap:
        if "table" in data:
            group = finite_group(data["table"], source=str(data["group"]).split(":", 1)[-1])
        else:
            group = parse_group_spec(str(data["group"]))
        images = {
            _element_key(group, item["element"]): np.asarray(item["perm"], dtype=np.int64)
            for item in data.get("images", [])
        }
        return cls(
            group=group,
            degree=int(data["degree"]),
            generators=tuple(np.asarray(g, dtype=np.int64) for g in data["generators"]),
            images=images,
            seed=data.get("seed"),
            model=str(data.get("model", "")),
        )


def _element_text(group: GroupSpec, element: Hashable) -> str:
    if isinstance(element, Word):
        return element.format(group.labels)
    return str(element)


def _element_key(group: GroupSpec, text: str) -> Hashable:
    if group.kind == "free":
        return group.evaluate(parse_word(str(text), group.labels))
    return int(text)


def cyclic_model(elements: Iterable[int], degree: int) -> SoficMap:
    """Quotient map Z -> Z/dZ acting by shifts."""
    if degree < 1:
        raise PreconditionError("degree must be at least 1")
    points = identity_perm(degree)
    images = {Word.power(0, m): (points + m) % degree for m in elements if m != 0}
    return SoficMap(
        group=free_group(1),
        degree=degree,
        generators=((points + 1) % degree,),
        images=images,
        model="cyclic",
    )


def multiplication_table(group: GroupSpec) -> np.ndarray:
    if group.kind == "cyclic":
        span = np.arange(int(group.order))  # type: ignore[arg-type]
        return (span[:, None] + span[None, :]) % int(group.order)  # type: ignore[arg-type]
    if group.kind == "finite":
        return np.asarray(group.table, dtype=np.int64)
    raise PreconditionError("free groups have no multiplication table")


def finite_block_model(group: GroupSpec, degree: int) -> SoficMap:
    """Left multiplication on q regular blocks; the r leftover points stay fixed."""
    if not group.is_finite:
        raise PreconditionError("block models need a finite group")
    if degree < 1:
        raise PreconditionError("degree must be at least 1")
    table = multiplication_table(group)
    order = table.shape[0]
    blocks, _ = divmod(degree, order)
    offsets = np.arange(blocks, dtype=np.int64)[:, None] * order
    images: dict[Hashable, np.ndarray] = {}
    for element in group.elements():
        perm = identity_perm(degree)
        perm[: blocks * order] = (offsets + table[element][None, :]).ravel()
        images[element] = perm
    return SoficMap(
        group=group,
        degree=degree,
        generators=tuple(images[g] for g in group.generator_elements),
        images=images,
        model="block",
    )


def random_perm_model(n_generators: int, degree: int, seed: int | None) -> SoficMap:
    if degree < 2:
        raise PreconditionError("random models need degree at least 2")
    rng = rng_stream(seed, "random_perm")
    return SoficMap(
        group=free_group(n_generators),
        degree=degree,
        generators=tuple(rng.permutation(degree) for _ in range(n_generators)),
        seed=seed,
        model="random",
    )


def build_model(
    group: GroupSpec, degree: int, seed: int | None = None, radius: int = 3
) -> SoficMap:
    if group.is_finite:
        return finite_block_model(group, degree)
    if group.rank == 1:
        return cyclic_model(range(-radius, radius + 1), degree)
    return random_perm_model(group.rank, degree, seed)


def permutation_isometry(sigma: np.ndarray, p: float = 2.0) -> sparse.csr_matrix:
    """Matrix of f -> f o sigma^-1 on l^p(d)."""
    if not 1 <= p <= np.inf:
        raise PreconditionError(f"p must lie in [1, inf], got {p}")
    sigma = np.asarray(sigma, dtype=np.int64)
    degree = sigma.shape[0]
    return sparse.csr_matrix(
        (np.ones(degree), (sigma, np.arange(degree))), shape=(degree, degree)
    )


def permute(sigma: np.ndarray, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[0] != sigma.shape[0]:
        raise DimensionMismatchError("vector length differs from the degree")
    out = np.empty_like(values)
    out[sigma] = values
    return out


def defect_report(sofic_map: SoficMap, words: Sequence[Word]) -> DefectReport:
    group = sofic_map.group
    images = [sofic_map.image(word) for word in words]
    defect = 0.0
    worst: tuple[str, str] | None = None
    for i, g in enumerate(words):
        for j, h in enumerate(words):
            gap = hamming_distance(sofic_map.image(g.concat(h)), compose(images[i], images[j]))
            if gap > defect:
                defect = gap
                worst = (g.format(group.labels), h.format(group.labels))

    elements = [group.evaluate(word) for word in words]
    unique: dict[Hashable, int] = {}
    for index, element in enumerate(elements):
        unique.setdefault(element, index)
    freeness = 1.0
    distinct = 0
    for a, b in combinations(unique.values(), 2):
        distinct += 1
        freeness = min(freeness, hamming_distance(images[a], images[b]))
    return DefectReport(
        defect=defect,
        freeness=freeness,
        pairs=len(words) ** 2,
        distinct_pairs=distinct,
        worst_pair=worst,
    )


def cyclic_character(order: int, index: int) -> Callable[[Hashable], complex]:
    def character(element: Hashable) -> complex:
        return complex(np.exp(2j * np.pi * index * int(element) / order))  # type: ignore[arg-type]

    return character


def isotypic_projection(
    sofic_map: SoficMap, character: Callable[[Hashable], complex]
) -> np.ndarray:
    """(1/|G|) sum_g conj(chi(g)) P_sigma(g) for a one-dimensional character chi."""
    group = sofic_map.group
    if not group.is_finite:
        raise PreconditionError("isotypic projections need a finite group")
    degree = sofic_map.degree
    total = sparse.csr_matrix((degree, degree), dtype=complex)
    for element in group.elements():
        if element == group.identity_element:
            perm = identity_perm(degree)
        else:
            perm = sofic_map.images.get(element)
            if perm is None:
                perm = sofic_map.product(group.element_words[element])
        total = total + np.conj(character(element)) * permutation_isometry(perm)
    return total.toarray() / len(group.elements())


__all__ = [
    "DefectReport",
    "SoficMap",
    "build_model",
    "compose",
    "cyclic_character",
    "cyclic_model",
    "defect_report",
    "finite_block_model",
    "hamming_distance",
    "identity_perm",
    "inverse",
    "isotypic_projection",
    "multiplication_table",
    "permutation_isometry",
    "permute",
    "random_perm_model",
]
