"""Dense gradient-orientation descriptors and cosine nearest-neighbor search."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from densecorr.gridgeom import FeatureGrid, GridGeometry


class ZeroVectorWarning(RuntimeWarning):
    pass


class ImageTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class DenseDescriptorConfig:
    """Sampling and binning for :func:`dense_descriptors`.

    ``radius`` is the half-width of the square support, so every descriptor
    sees ``2 * radius + 1`` pixels per side.
    """

    grid_stride: int = 8
    radius: int = 20
    spatial_bins: int = 4
    orientation_bins: int = 8

    def __post_init__(self):
        if self.grid_stride < 1 or self.spatial_bins < 1 or self.orientation_bins < 1:
            raise ValueError(f"invalid descriptor config {self!r}")
        if self.radius < self.spatial_bins:
            raise ValueError("radius must be at least spatial_bins")

    @property
    def dim(self) -> int:
        return self.spatial_bins**2 * self.orientation_bins

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.grid_stride, 2 * self.radius + 1, Fraction(self.radius))


def _spatial_weights(radius: int, bins: int) -> np.ndarray:
    """``(bins, 2r+1)`` bilinear weights of window offsets onto spatial bins."""
    side = 2 * radius + 1
    width = side / bins
    u = (np.arange(side) + 0.5) / width - 0.5
    lo = np.floor(u).astype(int)
    frac = u - lo
    wts = np.zeros((bins, side))
    cols = np.arange(side)
    ok = (lo >= 0) & (lo < bins)
    wts[lo[ok], cols[ok]] += 1.0 - frac[ok]
    hi = lo + 1
    ok = (hi >= 0) & (hi < bins)
    wts[hi[ok], cols[ok]] += frac[ok]
    return wts


def dense_descriptors(image, config: DenseDescriptorConfig = DenseDescriptorConfig(),
                      source_id: str = "") -> FeatureGrid:
    """Upright dense gradient histograms on a regular grid.

    Each descriptor concatenates ``spatial_bins**2`` orientation histograms of
    gradient magnitude (bilinear in space and orientation), then is
    L2-normalized.  Cell ``(0, 0)`` is centered at pixel ``(radius, radius)``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("dense_descriptors expects a 2-D grayscale image")
    r = config.radius
    side = 2 * r + 1
    h, w = img.shape
    if h < side or w < side:
        raise ImageTooSmallError(f"image {w}x{h} smaller than support {side}x{side}")

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    nb = config.orientation_bins
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    o = theta * (nb / (2 * np.pi))
    lo = np.floor(o).astype(int)
    frac = o - lo
    lo %= nb
    hi = (lo + 1) % nb

    stride = config.grid_stride
    rows = (h - side) // stride + 1
    cols = (w - side) // stride + 1
    wsp = _spatial_weights(r, config.spatial_bins)

    out = np.zeros((rows, cols, config.spatial_bins, config.spatial_bins, nb))
    for b in range(nb):
        mb = mag * ((lo == b) * (1.0 - frac) + (hi == b) * frac)
        win = sliding_window_view(mb, (side, side))[::stride, ::stride][:rows, :cols]
        out[..., b] = np.einsum("ijyx,ay,cx->ijac", win, wsp, wsp, optimize=True)

    desc = out.reshape(rows, cols, config.dim)
    norms = np.linalg.norm(desc, axis=2, keepdims=True)
    desc = np.divide(desc, norms, out=np.zeros_like(desc), where=norms > 0)
    return FeatureGrid(desc, config.geometry, source_id)


def cosine(a, b) -> float:
    """Cosine similarity; a zero vector scores 0 and raises a warning."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        warnings.warn("cosine of a zero vector is defined as 0", ZeroVectorWarning, stacklevel=2)
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


@dataclass(frozen=True)
class GlobalDescriptor:
    id: str
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).ravel()
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError(f"global descriptor {self.id!r} is all zeros")
        object.__setattr__(self, "vector", v / n)


class NNIndex:
    """Exhaustive cosine index.

    Vectors are unit-normalized on insertion.  All-zero vectors are kept as
    zero and score 0 against every query.
    """

    def __init__(self, ids, vectors):
        self.ids = list(ids)
        vecs = np.asarray(vectors, dtype=np.float64)
        if vecs.ndim == 1:
            vecs = vecs[None, :]
        if len(self.ids) != len(vecs):
            raise ValueError("ids and vectors differ in length")
        self.vectors = _unit_rows(vecs.reshape(len(self.ids), -1)) if self.ids else vecs
        self.vectors.setflags(write=False)

    @classmethod
    def from_descriptors(cls, descriptors):
        descriptors = list(descriptors)
        return cls([d.id for d in descriptors], [d.vector for d in descriptors])

    def __len__(self):
        return len(self.ids)

    def scores(self, queries) -> np.ndarray:
        q = _unit_rows(np.atleast_2d(np.asarray(queries, dtype=np.float64)))
        return q @ self.vectors.T

    def search(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched top-k: ``(indices, scores)`` each of shape ``(n_queries, k)``."""
        if not self.ids:
            raise ValueError("index is empty")
        if not 1 <= k <= len(self.ids):
            raise ValueError(f"k={k} outside [1, {len(self.ids)}]")
        s = self.scores(queries)
        order = np.argsort(-s, axis=1, kind="stable")[:, :k]
        return order, np.take_along_axis(s, order, axis=1)


def knn(index: NNIndex, query, k: int) -> list[tuple[str, float]]:
    """Top-``k`` ids by descending cosine, ties in insertion order."""
    order, scores = index.search(np.asarray(query, dtype=np.float64).ravel(), k)
    return [(index.ids[i], float(s)) for i, s in zip(order[0], scores[0])]
