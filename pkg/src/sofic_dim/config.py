from __future__ import annotations

from dataclasses import asdict, dataclass
import hashlib
import json
from pathlib import Path
import re
from typing import Any, Iterable, Mapping
import warnings

import yaml

from .errors import ManifestError, SoficDimError
from .groups import parse_group_spec
from .pipeline import DEFAULT_EPSILONS, DEFAULT_SCHEDULE, MODES, parse_schedule_entry

COMMANDS = ("approx", "epsdim", "tree", "betti", "verify")
TREE_OPS = ("generator", "flow", "embed", "push", "cohomology", "hodge", "spectral")
ARITHMETIC = ("float", "exact")

_RANGE_RE = re.compile(r"^\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*$")


@dataclass(frozen=True)
class Manifest:
    command: str
    group: str = "free:2"
    rep: str = "trivial"
    vectors: str = ""
    degrees: tuple[int, ...] = (100,)
    schedule: tuple[str, ...] = tuple(entry.text for entry in DEFAULT_SCHEDULE)
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    seeds: tuple[int, ...] = (1,)
    p: float = 2.0
    witnesses: int = 16
    compression: tuple[int, ...] = ()
    folner_window: int = 0
    period: int = 1
    modes: tuple[str, ...] = ("hom",)
    coefficients: str = ""
    samples: int = 8
    radius: int = 2
    op: str = "generator"
    rank: int = 2
    level: int = 3
    n: int = 2
    arithmetic: str = "float"
    output_dir: str = "results"
    cache_dir: str = "data/cache"

    @property
    def exact(self) -> bool:
        return self.arithmetic == "exact"


def _as_list(value: object) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [str(item).strip() for item in value if str(item).strip()]
    text = str(value).strip()
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def _unique_preserve(items: Iterable[Any], field_name: str) -> list[Any]:
    seen: set[Any] = set()
    result: list[Any] = []
    dropped: list[str] = []
    for item in items:
        if item in seen:
            dropped.append(str(item))
            continue
        seen.add(item)
        result.append(item)
    if dropped:
        warnings.warn(
            f"{field_name} 含重复项，已忽略：{', '.join(dropped)}",
            RuntimeWarning,
            stacklevel=3,
        )
    return result


def parse_int_list(value: object, field_name: str) -> tuple[int, ...]:
    items: list[int] = []
    for token in _as_list(value):
        try:
            items.append(int(token))
        except ValueError:
            raise ManifestError(field_name, f"不是整数：{token}") from None
    return tuple(_unique_preserve(items, field_name))


def parse_seeds(value: object, field_name: str = "seeds") -> tuple[int, ...]:
    """`1..10` (inclusive), `1,4,9`, or a single integer N meaning 1..N."""
    if isinstance(value, int) and not isinstance(value, bool):
        if value < 1:
            raise ManifestError(field_name, "种子个数必须为正整数")
        return tuple(range(1, value + 1))
    if isinstance(value, (list, tuple)):
        return parse_int_list(value, field_name)
    text = ",".join(_as_list(value))
    match = _RANGE_RE.match(text)
    if match:
        first, last = int(match.group(1)), int(match.group(2))
        if last < first:
            raise ManifestError(field_name, f"区间为空：{text}")
        return tuple(range(first, last + 1))
    if text and "," not in text:
        return parse_seeds(_parse_int(text, field_name), field_name)
    return parse_int_list(text, field_name)


def _parse_int(text: str, field_name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ManifestError(field_name, f"不是整数：{text}") from None


def parse_epsilons(value: object) -> tuple[float, ...]:
    values: list[float] = []
    dropped: list[str] = []
    for token in _as_list(value):
        try:
            eps = float(token)
        except ValueError:
            raise ManifestError("epsilons", f"不是数值：{token}") from None
        if not 0 < eps < 1:
            dropped.append(token)
            continue
        values.append(eps)
    if dropped:
        warnings.warn(
            f"epsilons 仅支持 (0,1) 内的取值，已忽略：{', '.join(dropped)}",
            RuntimeWarning,
            stacklevel=2,
        )
    return tuple(_unique_preserve(values, "epsilons"))


def _schedule_texts(value: object) -> tuple[str, ...]:
    texts = []
    for item in _as_list(value):
        try:
            texts.append(parse_schedule_entry(item).text)
        except SoficDimError as exc:
            raise ManifestError("schedule", str(exc)) from None
    return tuple(_unique_preserve(texts, "schedule"))


def _coefficients_text(value: object) -> str:
    if isinstance(value, Mapping):
        return ",".join(f"{key}:{coefficient}" for key, coefficient in value.items())
    return ",".join(_as_list(value))


def _number(data: Mapping[str, Any], key: str, default: Any, kind: type) -> Any:
    value = data.get(key, default)
    if value is None or (isinstance(value, str) and not value.strip()):
        return default
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ManifestError(key, f"无法解析：{value}") from None


def _choice(data: Mapping[str, Any], key: str, default: str, choices: Iterable[str]) -> str:
    value = str(data.get(key, default) or default).strip().lower()
    options = tuple(choices)
    if value not in options:
        raise ManifestError(key, f"仅支持 {', '.join(options)}，收到 {value}")
    return value


def resolve_section(data: Mapping[str, Any], command: str) -> dict[str, Any]:
    """Top-level keys with the command's own section layered on top."""
    merged = {key: value for key, value in data.items() if key not in COMMANDS}
    section = data.get(command)
    if section is not None:
        if not isinstance(section, Mapping):
            raise ManifestError(command, "命令配置必须是映射")
        merged.update(section)
    return merged


def build_manifest(data: Mapping[str, Any], command: str) -> Manifest:
    if command not in COMMANDS:
        raise ManifestError("command", f"未知命令：{command}")
    merged = resolve_section(data, command)
    defaults = Manifest(command=command)

    group = str(merged.get("group", defaults.group)).strip()
    try:
        parse_group_spec(group)
    except SoficDimError as exc:
        raise ManifestError("group", str(exc)) from None

    degrees = (
        parse_int_list(merged["degrees"], "degrees") if "degrees" in merged else defaults.degrees
    )
    if command in ("approx", "epsdim", "betti") and not degrees:
        raise ManifestError("degrees", "度数列表不能为空")
    if any(d < 1 for d in degrees):
        raise ManifestError("degrees", "度数必须为正整数")

    seeds = parse_seeds(merged["seeds"]) if "seeds" in merged else defaults.seeds
    if not seeds:
        raise ManifestError("seeds", "种子列表不能为空")

    epsilons = parse_epsilons(merged["epsilons"]) if "epsilons" in merged else defaults.epsilons
    if command == "epsdim" and not epsilons:
        raise ManifestError("epsilons", "ε 网格不能为空")

    schedule = _schedule_texts(merged["schedule"]) if "schedule" in merged else defaults.schedule
    if command == "epsdim" and not schedule:
        raise ManifestError("schedule", "(F,m,δ) 列表不能为空")

    requested = [mode.lower() for mode in _as_list(merged.get("modes", "hom"))]
    modes = tuple(_unique_preserve(requested, "modes"))
    unknown = [mode for mode in modes if mode not in MODES]
    if unknown or not modes:
        raise ManifestError("modes", f"仅支持 {', '.join(MODES)}")

    p = _number(merged, "p", defaults.p, float)
    if p < 1:
        raise ManifestError("p", "p 必须不小于 1")

    manifest = Manifest(
        command=command,
        group=group,
        rep=str(merged.get("rep", defaults.rep) or defaults.rep).strip(),
        vectors=",".join(_as_list(merged.get("vectors"))),
        degrees=degrees,
        schedule=schedule,
        epsilons=epsilons,
        seeds=seeds,
        p=p,
        witnesses=_number(merged, "witnesses", defaults.witnesses, int),
        compression=parse_int_list(merged.get("compression"), "compression"),
        folner_window=_number(merged, "folner_window", defaults.folner_window, int),
        period=_number(merged, "period", defaults.period, int),
        modes=modes,
        coefficients=_coefficients_text(merged.get("coefficients")),
        samples=_number(merged, "samples", defaults.samples, int),
        radius=_number(merged, "radius", defaults.radius, int),
        op=_choice(merged, "op", defaults.op, TREE_OPS),
        rank=_number(merged, "rank", defaults.rank, int),
        level=_number(merged, "level", defaults.level, int),
        n=_number(merged, "n", defaults.n, int),
        arithmetic=_choice(merged, "arithmetic", defaults.arithmetic, ARITHMETIC),
        output_dir=str(merged.get("output_dir", defaults.output_dir) or defaults.output_dir),
        cache_dir=str(merged.get("cache_dir", defaults.cache_dir) or ""),
    )
    for key in ("witnesses", "samples", "folner_window"):
        if getattr(manifest, key) < 0:
            raise ManifestError(key, "不能为负数")
    for key in ("rank", "n", "period"):
        if getattr(manifest, key) < 1:
            raise ManifestError(key, "必须为正整数")
    if any(k < 1 for k in manifest.compression):
        raise ManifestError("compression", "分块数必须为正整数")
    return manifest


def load_manifest_data(path: Path) -> dict[str, Any]:
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ManifestError("manifest", f"无法解析 {path.name}：{exc}") from None
    if not isinstance(data, dict):
        raise ManifestError("manifest", "清单顶层必须是映射")
    return data


def load_manifest(
    path: Path | None, command: str, overrides: Mapping[str, Any] | None = None
) -> Manifest:
    data = load_manifest_data(path) if path is not None else {}
    if overrides:
        section = dict(data.get(command) or {})
        section.update({key: value for key, value in overrides.items() if value is not None})
        data = {**data, command: section}
    return build_manifest(data, command)


def manifest_hash(manifest: Manifest) -> str:
    payload = json.dumps(asdict(manifest), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
