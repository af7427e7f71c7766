"""Per-cell parquet checkpoints for long experiment runs."""
from __future__ import annotations

from pathlib import Path
import re

import pandas as pd

_UNSAFE = re.compile(r"[^A-Za-z0-9_.=-]+")


def _safe(part: str) -> str:
    return _UNSAFE.sub("_", part).strip("_") or "_"


class CellCache:
    def __init__(
        self,
        cache_dir: Path | None = None,
        use_cache: bool = True,
        force_refresh: bool = False,
    ) -> None:
        self._cache_dir = cache_dir
        self._use_cache = use_cache
        self._force_refresh = force_refresh

    @property
    def enabled(self) -> bool:
        return self._cache_dir is not None and self._use_cache

    def _cache_path(self, *parts: str) -> Path | None:
        if self._cache_dir is None:
            return None
        safe = [_safe(part) for part in parts]
        safe[-1] = f"{safe[-1]}.parquet"
        return self._cache_dir.joinpath(*safe)

    def _read_cache(self, path: Path | None) -> pd.DataFrame | None:
        if path is None or not self._use_cache or self._force_refresh:
            return None
        if not path.exists():
            return None
        return pd.read_parquet(path)

    def _write_cache(self, path: Path | None, df: pd.DataFrame) -> None:
        if path is None or not self._use_cache or df.empty:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_parquet(path, index=False)

    def load(self, command: str, manifest_hash: str, cell: str) -> pd.DataFrame | None:
        return self._read_cache(self._cache_path(command, manifest_hash, cell))

    def store(self, command: str, manifest_hash: str, cell: str, df: pd.DataFrame) -> None:
        self._write_cache(self._cache_path(command, manifest_hash, cell), df)
