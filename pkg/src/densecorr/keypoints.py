"""Keypoint annotations: the :class:`KeypointSet` record and its CSV file format.

One record per line::

    image_id,bbox_x,bbox_y,bbox_w,bbox_h,keypoints
    img001,10,20,200,150,nose,55.0,80.5,1,left_eye,nan,nan,0

The header line is mandatory; keypoint tuples follow the bbox as repeated
``name,x,y,visible`` groups.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from densecorr._fileutil import atomic_write_text

HEADER = ["image_id", "bbox_x", "bbox_y", "bbox_w", "bbox_h", "keypoints"]


class AnnotationFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    visible: bool = True

    def __post_init__(self):
        if self.visible and not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("visible keypoints need finite coordinates")


@dataclass(frozen=True)
class KeypointSet:
    image_id: str
    bbox: tuple[float, float, float, float]
    points: MappingProxyType = field(default_factory=dict)

    def __post_init__(self):
        bbox = tuple(float(v) for v in self.bbox)
        if len(bbox) != 4 or bbox[2] <= 0 or bbox[3] <= 0:
            raise ValueError(f"bbox must be (x, y, w, h) with w, h > 0, got {self.bbox}")
        object.__setattr__(self, "bbox", bbox)
        pts = {}
        for name, kp in dict(self.points).items():
            if not isinstance(kp, Keypoint):
                kp = Keypoint(*kp)
            pts[name] = kp
        object.__setattr__(self, "points", MappingProxyType(pts))

    def __eq__(self, other):
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return (self.image_id, self.bbox, dict(self.points)) == (
            other.image_id, other.bbox, dict(other.points))

    def __hash__(self):
        return hash((self.image_id, self.bbox, tuple(self.points.items())))

    @property
    def names(self):
        return list(self.points)

    def visible(self):
        return {n: kp for n, kp in self.points.items() if kp.visible}

    def replace(self, image_id=None, bbox=None, points=None) -> "KeypointSet":
        return KeypointSet(
            self.image_id if image_id is None else image_id,
            self.bbox if bbox is None else bbox,
            self.points if points is None else points,
        )

    def to_box_frame(self, side: float) -> "KeypointSet":
        """Coordinates inside the bbox rescaled to a ``side x side`` square."""
        bx, by, bw, bh = self.bbox
        sx, sy = side / bw, side / bh
        pts = {n: Keypoint((kp.x - bx) * sx, (kp.y - by) * sy, kp.visible)
               for n, kp in self.points.items()}
        return KeypointSet(self.image_id, (0.0, 0.0, float(side), float(side)), pts)

    def from_box_frame(self, bbox, side: float, image_id=None) -> "KeypointSet":
        """Inverse of :meth:`to_box_frame` for a square of ``side`` pixels."""
        bx, by, bw, bh = (float(v) for v in bbox)
        sx, sy = bw / side, bh / side
        pts = {n: Keypoint(kp.x * sx + bx, kp.y * sy + by, kp.visible)
               for n, kp in self.points.items()}
        return KeypointSet(image_id or self.image_id, (bx, by, bw, bh), pts)


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else repr(float(v))


def format_annotations(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for ks in records:
        row = [ks.image_id] + [_fmt(v) for v in ks.bbox]
        for name, kp in ks.points.items():
            row += [name, _fmt(kp.x), _fmt(kp.y), "1" if kp.visible else "0"]
        writer.writerow(row)
    return buf.getvalue()


def write_annotations(path, records) -> None:
    atomic_write_text(path, format_annotations(records))


def parse_annotations(text: str, origin: str = "<string>") -> dict[str, KeypointSet]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise AnnotationFormatError(f"{origin}: empty annotation file") from None
    if [h.strip() for h in header[:5]] != HEADER[:5]:
        raise AnnotationFormatError(f"{origin}: missing header line")
    out = {}
    for lineno, row in enumerate(reader, 2):
        if not row or not "".join(row).strip():
            continue
        if len(row) < 5 or (len(row) - 5) % 4:
            raise AnnotationFormatError(f"{origin}:{lineno}: malformed record")
        image_id = row[0]
        if image_id in out:
            raise AnnotationFormatError(f"{origin}:{lineno}: duplicate image_id {image_id!r}")
        try:
            bbox = tuple(float(v) for v in row[1:5])
            pts = {}
            for k in range(5, len(row), 4):
                name, x, y, vis = row[k:k + 4]
                pts[name] = Keypoint(float(x), float(y), vis.strip() not in ("0", "", "false"))
            out[image_id] = KeypointSet(image_id, bbox, pts)
        except ValueError as exc:
            raise AnnotationFormatError(f"{origin}:{lineno}: {exc}") from exc
    return out


def read_annotations(path) -> dict[str, KeypointSet]:
    return parse_annotations(Path(path).read_text(), str(path))
