"""Dataset manifest: one tab-separated record per image.

Columns::

    image_id  image  grids  global  annotation  category  split

``grids`` lists ``layer=path`` pairs separated by ``;``.  ``global`` is a
feature-grid file whose flattened values serve as the image's global
descriptor.  ``annotation`` is a keypoint CSV containing a record for the
image id.  Relative paths resolve against the manifest's directory; empty
fields mean "absent".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

from densecorr._fileutil import atomic_write_text
from densecorr.keypoints import KeypointSet, read_annotations

COLUMNS = ["image_id", "image", "grids", "global", "annotation", "category", "split"]


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    image_id: str
    image: Path | None
    grids: dict = field(default_factory=dict)
    global_desc: Path | None = None
    annotation: Path | None = None
    category: str = ""
    split: str = ""


def _path(base: Path, text: str) -> Path | None:
    if not text:
        return None
    p = Path(text)
    return p if p.is_absolute() else base / p


class Manifest:
    def __init__(self, records, path=None):
        self.path = Path(path) if path else None
        self.records: dict[str, Record] = {}
        for r in records:
            if r.image_id in self.records:
                raise ManifestError(f"duplicate image id {r.image_id!r}")
            self.records[r.image_id] = r
        self._ann_cache: dict[Path, dict[str, KeypointSet]] = {}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records.values())

    def __getitem__(self, image_id) -> Record:
        try:
            return self.records[image_id]
        except KeyError:
            raise KeyError(f"unknown image id {image_id!r}") from None

    def select(self, category=None, split=None) -> list[Record]:
        return [r for r in self
                if (category is None or r.category == category)
                and (split is None or r.split == split)]

    def layers(self) -> set[str]:
        return {layer for r in self for layer in r.grids}

    def keypoints(self, image_id) -> KeypointSet:
        rec = self[image_id]
        if rec.annotation is None:
            raise ManifestError(f"{image_id}: no annotation file")
        if rec.annotation not in self._ann_cache:
            self._ann_cache[rec.annotation] = read_annotations(rec.annotation)
        anns = self._ann_cache[rec.annotation]
        if image_id not in anns:
            raise ManifestError(f"{image_id}: no record in {rec.annotation}")
        return anns[image_id]

    def with_grid(self, image_id, layer, path) -> None:
        rec = self[image_id]
        self.records[image_id] = replace(rec, grids={**rec.grids, layer: Path(path)})

    def with_global(self, image_id, path) -> None:
        self.records[image_id] = replace(self[image_id], global_desc=Path(path))


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != COLUMNS:
            raise ManifestError(f"{path}: header must be {'/'.join(COLUMNS)}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(row):
                continue
            if len(row) != len(COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(COLUMNS)} fields")
            image_id, image, grids, glob, ann, cat, split = row
            grid_map = {}
            for item in filter(None, grids.split(";")):
                layer, sep, p = item.partition("=")
                if not sep or not layer:
                    raise ManifestError(f"{path}:{lineno}: bad grid entry {item!r}")
                grid_map[layer] = _path(base, p)
            records.append(Record(image_id, _path(base, image), grid_map,
                                  _path(base, glob), _path(base, ann), cat, split))
    m = Manifest(records, path)
    if check_files:
        for r in m:
            refs = [r.image, r.global_desc, r.annotation, *r.grids.values()]
            for p in refs:
                if p is not None and not p.exists():
                    raise ManifestError(f"{r.image_id}: missing file {p}")
    return m


def format_manifest(manifest: Manifest) -> str:
    lines = ["\t".join(COLUMNS)]
    for r in manifest:
        grids = ";".join(f"{k}={v}" for k, v in sorted(r.grids.items()))
        fields = [r.image_id, r.image or "", grids, r.global_desc or "", r.annotation or "",
                  r.category, r.split]
        lines.append("\t".join(str(f) for f in fields))
    return "\n".join(lines) + "\n"


def write_manifest(path, manifest: Manifest) -> None:
    atomic_write_text(path, format_manifest(manifest))
