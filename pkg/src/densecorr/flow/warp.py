"""Pixel-space use of a cell flow: upsampling, image warping, keypoint transfer."""

from __future__ import annotations

import numpy as np

from densecorr.flow.bp import FlowField
from densecorr.gridgeom import GridGeometry
from densecorr.keypoints import Keypoint, KeypointSet


def _grid_coords(geometry: GridGeometry, x, y, shape):
    off = float(geometry.center_offset)
    h, w = shape
    gy = np.clip((np.asarray(y, dtype=float) - off) / geometry.stride, 0, h - 1)
    gx = np.clip((np.asarray(x, dtype=float) - off) / geometry.stride, 0, w - 1)
    return gy, gx


def _bilinear(field: np.ndarray, gy, gx) -> np.ndarray:
    h, w = field.shape[:2]
    y0 = np.minimum(np.floor(gy).astype(int), h - 1)
    x0 = np.minimum(np.floor(gx).astype(int), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (gy - y0)[..., None]
    fx = (gx - x0)[..., None]
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def flow_at(flow: FlowField, geometry: GridGeometry, x, y) -> np.ndarray:
    """Pixel displacement ``(..., 2)`` as ``(dy, dx)`` at pixel positions ``(x, y)``.

    The cell flow, scaled by the stride, is interpolated bilinearly between rf
    centers and held constant beyond the outermost centers.
    """
    gy, gx = _grid_coords(geometry, x, y, flow.w.shape[:2])
    return _bilinear(flow.w.astype(np.float64) * geometry.stride, gy, gx)


def pixel_flow(flow: FlowField, geometry: GridGeometry, shape) -> np.ndarray:
    """Dense ``(H, W, 2)`` pixel displacement field."""
    hh, ww = shape[:2]
    ys, xs = np.mgrid[0:hh, 0:ww]
    return flow_at(flow, geometry, xs, ys)


def _catmull_rom(t: np.ndarray):
    i = np.floor(t).astype(int)
    f = t - i
    f2, f3 = f * f, f * f * f
    wts = (
        0.5 * (-f3 + 2 * f2 - f),
        0.5 * (3 * f3 - 5 * f2 + 2),
        0.5 * (-3 * f3 + 4 * f2 + f),
        0.5 * (f3 - f2),
    )
    return i, wts


def sample_bicubic(image: np.ndarray, ys, xs) -> np.ndarray:
    """Catmull-Rom interpolation at real coordinates; edges are clamped.

    Integer coordinates reproduce the samples exactly.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    iy, wy = _catmull_rom(np.asarray(ys, dtype=np.float64))
    ix, wx = _catmull_rom(np.asarray(xs, dtype=np.float64))
    out = 0.0
    for a in range(4):
        ry = np.clip(iy + a - 1, 0, h - 1)
        row = 0.0
        for b in range(4):
            rx = np.clip(ix + b - 1, 0, w - 1)
            wb = wx[b] if img.ndim == 2 else wx[b][..., None]
            row = row + wb * img[ry, rx]
        wa = wy[a] if img.ndim == 2 else wy[a][..., None]
        out = out + wa * row
    return out


def warp_image(target_image, flow: FlowField, geometry: GridGeometry) -> np.ndarray:
    """Resample ``target_image`` into the source frame: ``out(x) = target(x + w(x))``."""
    img = np.asarray(target_image)
    disp = pixel_flow(flow, geometry, img.shape)
    ys, xs = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    out = sample_bicubic(img, ys + disp[..., 0], xs + disp[..., 1])
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(img.dtype)


def transfer_keypoints(keypoints: KeypointSet, flow: FlowField, geometry: GridGeometry,
                       image_id: str | None = None, bbox=None) -> KeypointSet:
    """Move source-frame keypoints along the flow into the target frame."""
    pts = {}
    for name, kp in keypoints.points.items():
        if not kp.visible:
            pts[name] = kp
            continue
        dy, dx = flow_at(flow, geometry, kp.x, kp.y)
        pts[name] = Keypoint(kp.x + float(dx), kp.y + float(dy), True)
    return KeypointSet(image_id or keypoints.image_id, bbox or keypoints.bbox, pts)


def rank_by_deformation(results) -> list[int]:
    """Indices of ``(flow, energy)`` results by ascending smoothness term (stable)."""
    results = list(results)
    if not results:
        raise ValueError("no alignment results to rank")
    return sorted(range(len(results)), key=lambda k: results[k][1].smoothness_term)


def aggregate_median(predictions, top_n: int = 5) -> KeypointSet:
    """Coordinate-wise median per keypoint over the first ``top_n`` predictions.

    Only predictions where the keypoint is visible contribute; a keypoint
    visible in none of them is returned as not visible.
    """
    predictions = list(predictions)
    if not predictions:
        raise ValueError("no predictions to aggregate")
    used = predictions[:top_n]
    names = []
    for ks in used:
        names += [n for n in ks.points if n not in names]
    pts = {}
    for name in names:
        xy = [(ks.points[name].x, ks.points[name].y) for ks in used
              if name in ks.points and ks.points[name].visible]
        if xy:
            mx, my = np.median(np.array(xy), axis=0)
            pts[name] = Keypoint(float(mx), float(my), True)
        else:
            pts[name] = Keypoint(float("nan"), float("nan"), False)
    return KeypointSet(used[0].image_id, used[0].bbox, pts)
