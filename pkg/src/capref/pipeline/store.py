"""Content-addressed artifact store for pipeline stages.

Each cache key owns a directory ``<root>/<key>/`` holding the stage
output (``output.jsonl``) plus ``meta.json`` with the output's digest.
Publication goes through a scratch directory and a single atomic rename,
so concurrent writers of the same key are safe (first one wins; by
determinism they carry identical content) and readers never observe a
half-written entry.  Lookups re-hash the output file and treat any
mismatch as a miss, so tampered or truncated entries are recomputed
instead of trusted.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import uuid
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class StoreEntry:
    key: str
    path: Path
    meta: dict

    @property
    def output_path(self) -> Path:
        return self.path / "output.jsonl"

    def output_text(self) -> str:
        return self.output_path.read_text(encoding="utf-8")


class ArtifactStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _entry_dir(self, key: str) -> Path:
        return self.root / key

    def lookup(self, key: str) -> StoreEntry | None:
        path = self._entry_dir(key)
        meta_path = path / "meta.json"
        output_path = path / "output.jsonl"
        if not meta_path.exists() or not output_path.exists():
            return None
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None
        digest = hashlib.sha256(output_path.read_bytes()).hexdigest()
        if meta.get("output_digest") != digest:
            return None
        return StoreEntry(key=key, path=path, meta=meta)

    def publish(self, key: str, output_text: str, meta: dict, extra_files: dict[str, str] | None = None) -> StoreEntry:
        """Write an entry atomically.  ``extra_files`` maps additional
        file names (e.g. a dataset manifest) to their content."""
        scratch = self.root / f".tmp-{uuid.uuid4().hex}"
        scratch.mkdir(parents=True)
        try:
            (scratch / "output.jsonl").write_text(output_text, encoding="utf-8")
            digest = hashlib.sha256(output_text.encode("utf-8")).hexdigest()
            full_meta = dict(meta)
            full_meta["key"] = key
            full_meta["output_digest"] = digest
            (scratch / "meta.json").write_text(
                json.dumps(full_meta, sort_keys=True, indent=1), encoding="utf-8"
            )
            for name, content in (extra_files or {}).items():
                (scratch / name).write_text(content, encoding="utf-8")
            target = self._entry_dir(key)
            try:
                os.rename(scratch, target)
            except OSError:
                if not target.exists():
                    raise
                if self.lookup(key) is None:
                    # existing entry is corrupt: replace it
                    shutil.rmtree(target, ignore_errors=True)
                    os.rename(scratch, target)
                # otherwise a concurrent writer got there first with a
                # valid (by determinism, identical) entry
        finally:
            shutil.rmtree(scratch, ignore_errors=True)
        entry = self.lookup(key)
        if entry is None:
            raise RuntimeError(f"store entry {key} unreadable after publish")
        return entry
