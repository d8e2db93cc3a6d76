"""Feature visualizations: nearest-neighbor patch reconstruction, the uniform
neighborhood baseline, and receptive-field averaging."""

from __future__ import annotations

import csv
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from densecorr._fileutil import atomic_write_text
from densecorr.descriptors import NNIndex
from densecorr.gridgeom import FeatureGrid, GridGeometry, center_patch_rect, read_grid, rf_center, write_grid
from densecorr.imaging import read_image, write_png


def covered_cells(geometry: GridGeometry, image_shape, grid_shape=None) -> list[tuple[int, int]]:
    """Cells whose stride-sized center patch lies fully inside the image, row-major."""
    h_img, w_img = image_shape[:2]
    if grid_shape is None:
        off = float(geometry.center_offset)
        grid_shape = (max(0, math.ceil((h_img - off) / geometry.stride) + 1),
                      max(0, math.ceil((w_img - off) / geometry.stride) + 1))
    cells = []
    for i in range(grid_shape[0]):
        for j in range(grid_shape[1]):
            x0, y0, x1, y1 = center_patch_rect(geometry, (i, j))
            if x0 >= 0 and y0 >= 0 and x1 <= w_img and y1 <= h_img:
                cells.append((i, j))
    return cells


def _window(image, x0, y0, size):
    """``size x size`` block at ``(x0, y0)`` with edge replication outside the image."""
    h, w = image.shape[:2]
    ys = np.clip(np.arange(y0, y0 + size), 0, h - 1)
    xs = np.clip(np.arange(x0, x0 + size), 0, w - 1)
    return image[np.ix_(ys, xs)]


class PatchDatabase:
    """Images with their feature grids; every covered cell is one entry.

    Entry ``k`` has feature ``features[k]`` and comes from
    ``provenance[k] = (image_id, (i, j))``.
    """

    def __init__(self, items):
        self.images: dict[str, np.ndarray] = {}
        self.grids: dict[str, FeatureGrid] = {}
        feats, prov = [], []
        self.geometry = None
        for image_id, image, grid in items:
            if image_id in self.images:
                raise ValueError(f"duplicate image id {image_id!r}")
            image = np.asarray(image)
            if self.geometry is None:
                self.geometry, self.dim, self.ndim = grid.geometry, grid.dim, image.ndim
            elif (grid.geometry != self.geometry or grid.dim != self.dim
                  or image.ndim != self.ndim):
                raise ValueError(f"{image_id!r}: geometry, feature dim or channels differ")
            self.images[image_id] = image
            self.grids[image_id] = grid
            for cell in covered_cells(grid.geometry, image.shape, grid.shape):
                feats.append(grid.data[cell])
                prov.append((image_id, cell))
        self.ids = list(self.images)
        self.provenance = prov
        dim = getattr(self, "dim", 0)
        self.features = np.array(feats, dtype=np.float64).reshape(len(prov), dim)
        self.index = NNIndex(range(len(prov)), self.features)

    def __len__(self):
        return len(self.provenance)

    def patch(self, k: int) -> np.ndarray:
        image_id, cell = self.provenance[k]
        x0, y0, x1, y1 = center_patch_rect(self.geometry, cell)
        return self.images[image_id][y0:y1, x0:x1]

    def rf_crop(self, k: int) -> np.ndarray:
        """The full ``rf_size`` square around entry ``k``'s rf center (edge-replicated)."""
        image_id, cell = self.provenance[k]
        rf = self.geometry.rf_size
        cx, cy = rf_center(self.geometry, cell)
        lead = Fraction(rf - 1, 2) - Fraction(1, 2)
        return _window(self.images[image_id], math.floor(cx - lead), math.floor(cy - lead), rf)

    def nearest(self, queries, k: int) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("patch database is empty")
        return self.index.search(queries, k)[0]

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        lines = ["image_id\timage\tgrid"]
        for n, image_id in enumerate(self.ids):
            img_name, grid_name = f"{n:06d}.png", f"{n:06d}.dcfg"
            write_png(d / img_name, self.images[image_id])
            write_grid(self.grids[image_id], d / grid_name)
            lines.append(f"{image_id}\t{img_name}\t{grid_name}")
        atomic_write_text(d / "db.tsv", "\n".join(lines) + "\n")

    @classmethod
    def load(cls, directory) -> "PatchDatabase":
        d = Path(directory)
        index = d / "db.tsv"
        if not index.exists():
            raise FileNotFoundError(f"no patch database at {d}")
        with open(index, newline="") as fh:
            rows = list(csv.DictReader(fh, delimiter="\t"))
        return cls((r["image_id"], read_image(d / r["image"]),
                    read_grid(d / r["grid"], r["image_id"])) for r in rows)


def _cast_like(out: np.ndarray, like: np.ndarray) -> np.ndarray:
    if np.issubdtype(like.dtype, np.integer):
        info = np.iinfo(like.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(like.dtype)


def patch_reconstruction(image, grid: FeatureGrid, db: PatchDatabase, k: int = 1) -> np.ndarray:
    """Replace each covered center patch by the mean of its ``k`` nearest db patches.

    Neighbors are ranked by cosine similarity of features; pixels outside any
    covered patch keep their original values.
    """
    image = np.asarray(image)
    if len(db) == 0:
        raise ValueError("patch database is empty")
    if not 1 <= k <= len(db):
        raise ValueError(f"k={k} outside [1, {len(db)}]")
    if grid.geometry.stride != db.geometry.stride or grid.dim != db.dim:
        raise ValueError("grid and database disagree on stride or feature dim")
    out = image.astype(np.float64)
    cells = covered_cells(grid.geometry, image.shape, grid.shape)
    if not cells:
        return image.copy()
    nn = db.nearest(np.array([grid.data[c] for c in cells], dtype=np.float64), k)
    for cell, idx in zip(cells, nn):
        x0, y0, x1, y1 = center_patch_rect(grid.geometry, cell)
        out[y0:y1, x0:x1] = np.mean([db.patch(m) for m in idx], axis=0)
    return _cast_like(out, image)


def uniform_offsets(rng, neighborhood: int, size):
    """Integer offsets uniform on ``[-(n-1)//2, (n-1)//2]``."""
    half = (neighborhood - 1) // 2
    return rng.integers(-half, half + 1, size=size)


def uniform_rf_baseline(image, db: PatchDatabase, neighborhood, seed: int = 0) -> np.ndarray:
    """Control reconstruction that ignores features entirely.

    Each covered center patch is copied from a uniformly chosen db image, at
    the same location shifted by a uniform offset within a window of
    ``neighborhood`` pixels (an int, or a geometry whose rf size is used).
    """
    image = np.asarray(image)
    if not db.ids:
        raise ValueError("patch database is empty")
    n = neighborhood.rf_size if isinstance(neighborhood, GridGeometry) else int(neighborhood)
    if n < 1:
        raise ValueError("neighborhood must be at least 1 pixel")
    if image.ndim != db.ndim:
        raise ValueError("image and database differ in channel layout")
    rng = np.random.default_rng(seed)
    out = image.astype(np.float64)
    s = db.geometry.stride
    for cell in covered_cells(db.geometry, image.shape):
        x0, y0, x1, y1 = center_patch_rect(db.geometry, cell)
        src = db.images[db.ids[int(rng.integers(len(db.ids)))]]
        dx, dy = uniform_offsets(rng, n, 2)
        out[y0:y1, x0:x1] = _window(src, x0 + int(dx), y0 + int(dy), s)
    return _cast_like(out, image)


def contrast_stretch(image) -> np.ndarray:
    """Affine map of the value range onto 0..255; a constant image becomes 128."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.full(img.shape, 128, dtype=np.uint8)
    return np.rint((img - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def rf_average(seed_feature, db: PatchDatabase, k: int) -> np.ndarray:
    """Contrast-stretched mean of the rf crops of the ``k`` nearest db entries."""
    if k > len(db):
        raise ValueError(f"k={k} exceeds database size {len(db)}")
    if k < 1:
        raise ValueError("k must be positive")
    idx = db.nearest(np.asarray(seed_feature, dtype=np.float64).ravel(), k)[0]
    return contrast_stretch(np.mean([db.rf_crop(m).astype(np.float64) for m in idx], axis=0))
