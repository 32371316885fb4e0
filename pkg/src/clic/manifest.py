"""JSON-lines dataset manifests.

One record per line: ``{"path": ..., "score": ..., "id": ...}``; ``score`` and
``id`` are optional. Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    score: float | None = None
    id: str | None = None

    def __post_init__(self):
        if not self.path:
            raise ValueError("manifest path must be nonempty")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1] for {self.path}")

    @property
    def key(self) -> str:
        return self.id if self.id is not None else Path(self.path).stem

    def to_record(self, base: Path | None = None) -> dict:
        path = self.path
        if base is not None:
            try:
                path = os.path.relpath(path, base)
            except ValueError:
                pass
        rec = {"path": Path(path).as_posix()}
        if self.score is not None:
            rec["score"] = self.score
        if self.id is not None:
            rec["id"] = self.id
        return rec


@dataclass
class Manifest:
    """Ordered entries plus a record of entries that were skipped on the way."""

    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @classmethod
    def of(cls, entries: Iterable[ManifestEntry]) -> "Manifest":
        return cls(list(entries))


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    base = path.parent
    entries = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                p = rec["path"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from exc
            if not Path(p).is_absolute():
                p = str(base / p)
            score = rec.get("score")
            entries.append(
                ManifestEntry(p, None if score is None else float(score), rec.get("id"))
            )
    return Manifest(entries)


def dumps_manifest(manifest: Manifest | Iterable[ManifestEntry], base: Path | None = None) -> str:
    lines = [json.dumps(e.to_record(base), sort_keys=True) for e in manifest]
    return "".join(line + "\n" for line in lines)


def write_manifest(manifest: Manifest | Iterable[ManifestEntry], path: str | Path) -> None:
    """Write entries with paths made relative to the manifest's own directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_manifest(manifest, path.parent.resolve()), encoding="utf-8")
