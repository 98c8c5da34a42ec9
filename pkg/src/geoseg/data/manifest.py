"""
Dataset manifests

A manifest is plain text next to the tile directory::

    # n_classes=3
    <tile_id> <relative path> <split> <site_id>
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Union

from ..errors import DatasetError
from ..models import SPLITS
from .tiles import TILE_SUFFIX, TileRecord, read_tile, write_tile

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
TILE_DIR = "tiles"


@dataclass(frozen=True)
class ManifestEntry:
    tile_id: str
    path: Path
    split: str
    site_id: int


@dataclass(frozen=True)
class Manifest:
    path: Path
    n_classes: int
    entries: List[ManifestEntry]

    def split(self, name: str) -> List[ManifestEntry]:
        if name not in SPLITS:
            raise DatasetError(f"unknown split '{name}'")
        return [e for e in self.entries if e.split == name]

    def load(self, name: str) -> List[TileRecord]:
        """Read every tile of a split; an empty split is an error."""
        entries = self.split(name)
        if not entries:
            raise DatasetError(f"split '{name}' of {self.path} has no tiles")
        records = []
        for entry in entries:
            record = read_tile(entry.path, tile_id=entry.tile_id)
            if record.split != entry.split or record.site_id != entry.site_id:
                raise DatasetError(f"tile {entry.tile_id} disagrees with its manifest line")
            records.append(record)
        return records


def write_dataset(records: Iterable[TileRecord], out_dir: Union[str, Path], n_classes: int) -> Path:
    """Write tiles under ``out_dir/tiles`` and the manifest at ``out_dir/manifest.txt``."""
    out_dir = Path(out_dir)
    tile_dir = out_dir / TILE_DIR
    tile_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"# n_classes={n_classes}"]
    seen = set()
    for record in records:
        if record.tile_id in seen:
            raise DatasetError(f"duplicate tile id '{record.tile_id}'")
        seen.add(record.tile_id)
        rel = Path(TILE_DIR) / f"{record.tile_id}{TILE_SUFFIX}"
        write_tile(record, out_dir / rel)
        lines.append(f"{record.tile_id} {rel.as_posix()} {record.split} {record.site_id}")
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %d tiles and %s", len(seen), manifest)
    return manifest


def read_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetError(f"cannot read manifest {path}: {e}") from e
    n_classes: Optional[int] = None
    entries = []
    ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "n_classes":
                try:
                    n_classes = int(value)
                except ValueError:
                    raise DatasetError(f"{path}:{lineno}: bad n_classes '{value}'") from None
            continue
        parts = line.split()
        if len(parts) != 4 or parts[2] not in SPLITS or not parts[3].isdigit():
            raise DatasetError(f"{path}:{lineno}: expected '<tile_id> <path> <split> <site_id>'")
        tile_id, rel, split, site = parts
        if tile_id in ids:
            raise DatasetError(f"{path}:{lineno}: tile id '{tile_id}' listed twice")
        ids.add(tile_id)
        entries.append(ManifestEntry(tile_id, path.parent / rel, split, int(site)))
    if n_classes is None:
        raise DatasetError(f"{path}: missing '# n_classes=N' header")
    return Manifest(path=path, n_classes=n_classes, entries=entries)
