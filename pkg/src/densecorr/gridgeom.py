"""Receptive-field geometry and the dense feature-grid container.

Axis convention used throughout the package: a cell index ``(i, j)`` is
``(row, col)`` and corresponds to pixel coordinates ``(y, x)``.  Points in
pixel space are always written ``(x, y)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from densecorr._fileutil import atomic_write_bytes

GRID_MAGIC = b"DCFG"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIId")
MAX_ELEMENTS = 2**31 - 1


class GridFormatError(ValueError):
    """Base class for malformed feature-grid files."""


class BadMagicError(GridFormatError):
    pass


class DimensionOverflowError(GridFormatError):
    pass


class TruncatedPayloadError(GridFormatError):
    pass


class NonFiniteValueError(GridFormatError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kernel: int
    stride: int
    pad: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ValueError(f"invalid layer {self!r}")


@dataclass(frozen=True)
class GridGeometry:
    """Maps grid cells to input pixels.

    ``center_offset`` is the pixel coordinate of the rf center of cell
    (0, 0); it is kept as a :class:`~fractions.Fraction` so deep stacks with
    even kernels stay exact.
    """

    stride: int
    rf_size: int
    center_offset: Fraction = Fraction(0)

    def __post_init__(self):
        if self.stride < 1 or self.rf_size < 1:
            raise ValueError(f"invalid geometry {self!r}")
        object.__setattr__(self, "center_offset", Fraction(self.center_offset))


# Reference stack for the Krizhevsky-style net.  Normalization layers are
# geometry-neutral and therefore omitted.
REFERENCE_STACK = (
    LayerSpec(11, 4, 0, "conv1"),
    LayerSpec(3, 2, 0, "pool1"),
    LayerSpec(5, 1, 2, "conv2"),
    LayerSpec(3, 2, 0, "pool2"),
    LayerSpec(3, 1, 1, "conv3"),
    LayerSpec(3, 1, 1, "conv4"),
    LayerSpec(3, 1, 1, "conv5"),
    LayerSpec(3, 2, 0, "pool5"),
)


def compose_geometry(layers, start: GridGeometry | None = None) -> GridGeometry:
    """Cumulative geometry of a layer stack, optionally continuing ``start``."""
    layers = list(layers)
    if not layers and start is None:
        raise ValueError("layer list must be non-empty")
    g = start or GridGeometry(1, 1, Fraction(0))
    stride, rf, offset = g.stride, g.rf_size, g.center_offset
    for layer in layers:
        rf += (layer.kernel - 1) * stride
        offset += (Fraction(layer.kernel - 1, 2) - layer.pad) * stride
        stride *= layer.stride
    return GridGeometry(stride, rf, offset)


def layer_geometries(layers) -> dict[str, GridGeometry]:
    """Geometry after every named layer of a stack, in stack order."""
    out = {}
    g = None
    for idx, layer in enumerate(layers):
        g = compose_geometry([layer], g)
        out[layer.name or f"layer{idx + 1}"] = g
    return out


def output_size(layers, input_size: int) -> int:
    """Spatial size of the final layer's output for a square input."""
    n = input_size
    for layer in layers:
        n = (n + 2 * layer.pad - layer.kernel) // layer.stride + 1
        if n < 1:
            return 0
    return n


def read_architecture(path) -> list[LayerSpec]:
    """Parse ``name kernel stride pad`` lines; ``#`` starts a comment."""
    layers = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'name kernel stride pad'")
        name, k, s, p = parts
        layers.append(LayerSpec(int(k), int(s), int(p), name))
    return layers


def rf_center(geometry: GridGeometry, cell) -> tuple[Fraction, Fraction]:
    """Pixel ``(x, y)`` of the rf center of ``cell = (i, j)``."""
    i, j = cell
    off, s = geometry.center_offset, geometry.stride
    return off + j * s, off + i * s


def _nearest_index(t: float, n: int) -> int:
    # ceil(t - 0.5) resolves exact half-way ties toward the smaller index
    return min(max(math.ceil(t - 0.5), 0), n - 1)


def nearest_cell(geometry: GridGeometry, pixel, shape) -> tuple[int, int]:
    """In-bounds cell whose rf center is closest to ``pixel = (x, y)``.

    The lattice is separable, so the Euclidean minimizer is found per axis.
    Pixels outside the grid's support clamp to the border cells.
    """
    x, y = pixel
    off = float(geometry.center_offset)
    h, w = shape[:2]
    i = _nearest_index((y - off) / geometry.stride, h)
    j = _nearest_index((x - off) / geometry.stride, w)
    return i, j


def cell_centers(geometry: GridGeometry, shape) -> tuple[np.ndarray, np.ndarray]:
    """Float arrays ``(xs, ys)`` of rf centers, each of shape ``(h, w)``."""
    h, w = shape[:2]
    off = float(geometry.center_offset)
    ys = off + geometry.stride * np.arange(h, dtype=float)
    xs = off + geometry.stride * np.arange(w, dtype=float)
    return np.meshgrid(xs, ys)


def center_patch_rect(geometry: GridGeometry, cell) -> tuple[int, int, int, int]:
    """Stride-sized square around the cell's rf center as ``(x0, y0, x1, y1)``.

    Half-open on the far side; fractional corners round toward the origin.
    """
    cx, cy = rf_center(geometry, cell)
    half = Fraction(geometry.stride, 2)
    x0 = math.floor(cx - half)
    y0 = math.floor(cy - half)
    return x0, y0, x0 + geometry.stride, y0 + geometry.stride


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    """``height x width`` lattice of ``dim``-dimensional descriptors."""

    data: np.ndarray
    geometry: GridGeometry
    source_id: str = ""
    height: int = field(init=False)
    width: int = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"grid data must be 3-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValueError("feature grid contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        h, w, d = data.shape
        object.__setattr__(self, "height", h)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "dim", d)

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, FeatureGrid):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.source_id == other.source_id
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None

    def center(self, cell):
        return rf_center(self.geometry, cell)

    def nearest_cell(self, pixel):
        return nearest_cell(self.geometry, pixel, self.data.shape)


def write_grid(grid: FeatureGrid, path) -> None:
    g = grid.geometry
    header = _HEADER.pack(
        GRID_MAGIC, GRID_VERSION, grid.height, grid.width, grid.dim,
        g.stride, g.rf_size, float(g.center_offset),
    )
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_grid(path, source_id: str | None = None) -> FeatureGrid:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != GRID_MAGIC:
        raise BadMagicError(f"{path}: not a feature-grid file")
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, h, w, d, stride, rf, offset = _HEADER.unpack_from(raw)
    if version != GRID_VERSION:
        raise GridFormatError(f"{path}: unsupported version {version}")
    n = h * w * d
    if n > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{path}: {h}x{w}x{d} exceeds element limit")
    body = raw[_HEADER.size:]
    if len(body) < 4 * n:
        raise TruncatedPayloadError(f"{path}: expected {4 * n} payload bytes, got {len(body)}")
    data = np.frombuffer(body, dtype="<f4", count=n).reshape(h, w, d)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValueError(f"{path}: non-finite descriptor values")
    # the f64 offset is exact for layer-derived (half-integer) offsets; other
    # small-denominator rationals are recovered here
    geometry = GridGeometry(stride, rf, Fraction(offset).limit_denominator(1 << 20))
    if source_id is None:
        source_id = Path(path).stem
    return FeatureGrid(data.astype(np.float32), geometry, source_id)
