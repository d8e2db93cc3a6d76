"""MRF flow energy and min-sum belief propagation over displacement labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from densecorr.flow.dt import dt2d_batch
from densecorr.gridgeom import FeatureGrid


@dataclass(frozen=True)
class FlowConfig:
    beta: float = 3e-3
    label_radius: int = 8
    bp_iterations: int = 50
    damping: float = 0.5

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.label_radius < 0:
            raise ValueError("label_radius must be non-negative")
        if self.bp_iterations < 1:
            raise ValueError("bp_iterations must be at least 1")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class FlowField:
    """Integer per-cell displacement ``w[i, j] = (dy, dx)`` in grid cells."""

    w: np.ndarray
    label_radius: int

    def __post_init__(self):
        w = np.array(self.w, dtype=np.int64)
        if w.ndim != 3 or w.shape[2] != 2:
            raise ValueError(f"flow must have shape (h, w, 2), got {w.shape}")
        if w.size and np.abs(w).max() > self.label_radius:
            raise ValueError("displacement exceeds label_radius")
        h, wd = w.shape[:2]
        ii, jj = np.mgrid[0:h, 0:wd]
        ti, tj = ii + w[..., 0], jj + w[..., 1]
        if np.any((ti < 0) | (ti >= h) | (tj < 0) | (tj >= wd)):
            raise ValueError("flow points outside the grid")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def height(self):
        return self.w.shape[0]

    @property
    def width(self):
        return self.w.shape[1]

    @classmethod
    def zeros(cls, height, width, label_radius=0):
        return cls(np.zeros((height, width, 2), dtype=np.int64), label_radius)

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return self.label_radius == other.label_radius and np.array_equal(self.w, other.w)

    __hash__ = None


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy split; ``smoothness_term`` excludes ``beta``."""

    data_term: float
    smoothness_term: float
    total: float

    @classmethod
    def from_terms(cls, data_term: float, smoothness_term: float, beta: float):
        return cls(data_term, smoothness_term, data_term + beta * smoothness_term)


def _check_pair(src: FeatureGrid, tgt: FeatureGrid):
    if src.shape != tgt.shape:
        raise ValueError(f"grid shapes differ: {src.shape} vs {tgt.shape}")


def smoothness(w: np.ndarray) -> float:
    """Sum of squared displacement differences over 4-neighborhood edges, each once."""
    w = np.asarray(w, dtype=np.float64)
    dv = np.diff(w, axis=0)
    dh = np.diff(w, axis=1)
    return float((dv**2).sum() + (dh**2).sum())


def flow_energy(src: FeatureGrid, tgt: FeatureGrid, flow: FlowField, beta: float) -> EnergyBreakdown:
    _check_pair(src, tgt)
    if flow.w.shape[:2] != src.shape[:2]:
        raise ValueError("flow and grids differ in size")
    h, w = src.shape[:2]
    ii, jj = np.mgrid[0:h, 0:w]
    fs = src.data.astype(np.float64)
    ft = tgt.data.astype(np.float64)[ii + flow.w[..., 0], jj + flow.w[..., 1]]
    data = float(np.linalg.norm(fs - ft, axis=2).sum())
    return EnergyBreakdown.from_terms(data, smoothness(flow.w), float(beta))


def label_offsets(radius: int) -> np.ndarray:
    """``(L, L, 2)`` lattice of ``(dy, dx)`` displacements, ``L = 2 * radius + 1``."""
    r = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    return np.stack([dy, dx], axis=-1)


def unary_costs(src: FeatureGrid, tgt: FeatureGrid, radius: int) -> np.ndarray:
    """``(h, w, L, L)`` data costs; labels leaving the grid cost ``inf``."""
    _check_pair(src, tgt)
    h, w = src.shape[:2]
    size = 2 * radius + 1
    fs = src.data.astype(np.float64)
    ft = tgt.data.astype(np.float64)
    out = np.full((h, w, size, size), np.inf)
    for a in range(size):
        dy = a - radius
        i0, i1 = max(0, -dy), min(h, h - dy)
        if i0 >= i1:
            continue
        for b in range(size):
            dx = b - radius
            j0, j1 = max(0, -dx), min(w, w - dx)
            if j0 >= j1:
                continue
            diff = fs[i0:i1, j0:j1] - ft[i0 + dy:i1 + dy, j0 + dx:j1 + dx]
            out[i0:i1, j0:j1, a, b] = np.linalg.norm(diff, axis=2)
    return out


def _decode_order(radius: int) -> np.ndarray:
    offs = label_offsets(radius).reshape(-1, 2)
    key = [(int(dy * dy + dx * dx), int(dy), int(dx)) for dy, dx in offs]
    return np.array(sorted(range(len(key)), key=key.__getitem__))


def _run_bp(unary: np.ndarray, beta: float, iterations: int, damping: float) -> np.ndarray:
    """Synchronous damped min-sum BP; returns beliefs of shape ``(h, w, L, L)``."""
    # incoming[k] holds messages into each cell from its up/down/left/right neighbor
    incoming = np.zeros((4,) + unary.shape)
    up, down, left, right = range(4)
    for _ in range(iterations):
        total = unary + incoming.sum(axis=0)
        # outgoing toward direction k excludes what that neighbor sent
        msgs = dt2d_batch(total[None] - incoming, beta)
        msgs -= msgs.min(axis=(-2, -1), keepdims=True)

        new = np.zeros_like(incoming)
        new[up, 1:] = msgs[down, :-1]       # sent downward, arrives from above
        new[down, :-1] = msgs[up, 1:]
        new[left, :, 1:] = msgs[right, :, :-1]
        new[right, :, :-1] = msgs[left, :, 1:]
        incoming = (1.0 - damping) * new + damping * incoming
    return unary + incoming.sum(axis=0)


def bp_align(src: FeatureGrid, tgt: FeatureGrid, config: FlowConfig = FlowConfig()):
    """Align ``src`` onto ``tgt``; returns ``(FlowField, EnergyBreakdown)``.

    ``w(p)`` points from source cell ``p`` to target cell ``p + w(p)``.  The
    labeling decoded from the beliefs is kept only if its energy does not
    exceed that of the zero flow.
    """
    _check_pair(src, tgt)
    h, w = src.shape[:2]
    r = config.label_radius
    unary = unary_costs(src, tgt, r)
    beliefs = _run_bp(unary, config.beta, config.bp_iterations, config.damping)

    order = _decode_order(r)
    flat = beliefs.reshape(h, w, -1)[..., order]
    best = order[np.argmin(flat, axis=2)]
    offs = label_offsets(r).reshape(-1, 2)
    flow = FlowField(offs[best], r)
    energy = flow_energy(src, tgt, flow, config.beta)

    zero = FlowField.zeros(h, w, r)
    zero_energy = flow_energy(src, tgt, zero, config.beta)
    if energy.total > zero_energy.total:
        return zero, zero_energy
    return flow, energy
