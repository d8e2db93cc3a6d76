"""Shared generators and brute-force oracles for the test suite."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
from scipy import ndimage

from densecorr.flow import sample_bicubic
from densecorr.gridgeom import FeatureGrid, GridGeometry, write_grid
from densecorr.imaging import write_png
from densecorr.keypoints import Keypoint, KeypointSet, write_annotations
from densecorr.manifest import COLUMNS

UNIT = GridGeometry(1, 1, 0)


# ------------------------------------------------------------ oracles

def brute_dt1d(costs, weight):
    f = np.asarray(costs, dtype=np.float64)
    q = np.arange(f.size)
    return np.min(f[None, :] + weight * (q[:, None] - q[None, :]) ** 2, axis=1)


def brute_dt2d(costs, weight):
    f = np.asarray(costs, dtype=np.float64)
    h, w = f.shape
    ii, jj = np.mgrid[0:h, 0:w]
    d2 = (ii.ravel()[:, None] - ii.ravel()[None, :]) ** 2 + (jj.ravel()[:, None] - jj.ravel()[None, :]) ** 2
    return np.min(f.ravel()[None, :] + weight * d2, axis=1).reshape(h, w)


def rf_by_enumeration(layers, cell=0, size=None):
    """Input pixel span reachable from output ``cell`` by walking kernel taps backwards.

    Returns ``(first, last)`` pixel indices on one axis, padding positions
    included (they are part of the rf in input coordinates).
    """
    lo = hi = cell
    for layer in reversed(list(layers)):
        lo = lo * layer.stride - layer.pad
        hi = hi * layer.stride - layer.pad + layer.kernel - 1
    return lo, hi


def grid_energy(fs, ft, w, beta):
    h, wd = fs.shape[:2]
    e = 0.0
    for i in range(h):
        for j in range(wd):
            dy, dx = w[i][j]
            e += np.linalg.norm(fs[i, j] - ft[i + dy, j + dx])
    s = 0.0
    for i in range(h):
        for j in range(wd):
            if i + 1 < h:
                s += sum((a - b) ** 2 for a, b in zip(w[i][j], w[i + 1][j]))
            if j + 1 < wd:
                s += sum((a - b) ** 2 for a, b in zip(w[i][j], w[i][j + 1]))
    return e + beta * s


def in_bounds_labels(h, wd, i, j, r):
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if 0 <= i + dy < h and 0 <= j + dx < wd]


def chain_optimum(fs, ft, beta, r):
    """Viterbi over a 1 x n chain."""
    n = fs.shape[1]
    labels = [in_bounds_labels(1, n, 0, j, r) for j in range(n)]
    cost = {l: np.linalg.norm(fs[0, 0] - ft[0, l[1]]) for l in labels[0]}
    for j in range(1, n):
        new = {}
        for l in labels[j]:
            u = np.linalg.norm(fs[0, j] - ft[0, j + l[1]])
            new[l] = u + min(c + beta * ((l[0] - m[0]) ** 2 + (l[1] - m[1]) ** 2)
                             for m, c in cost.items())
        cost = new
    return min(cost.values())


def exhaustive_optimum(fs, ft, beta, r):
    h, wd = fs.shape[:2]
    labels = [in_bounds_labels(h, wd, i, j, r) for i in range(h) for j in range(wd)]
    best = np.inf
    for combo in itertools.product(*labels):
        w = [[combo[i * wd + j] for j in range(wd)] for i in range(h)]
        best = min(best, grid_energy(fs, ft, w, beta))
    return best


def stored(x):
    """Values as a FeatureGrid stores them (float32), back in float64."""
    return FeatureGrid(x, UNIT).data.astype(np.float64)


# ------------------------------------------------------------ images

def texture(rng, n=128):
    img = ndimage.gaussian_filter(rng.normal(size=(n, n)), 2.5)
    img += 0.5 * ndimage.gaussian_filter(rng.normal(size=(n, n)), 6)
    return (img - img.min()) / (img.max() - img.min()) * 255


def smooth_deformation(rng, n, amp=5.0, shift=(15.0, 18.0)):
    """Translation of random direction plus a sinusoidal wobble, as ``(uy, ux)`` maps."""
    ys, xs = np.mgrid[0:n, 0:n].astype(float)
    k = rng.uniform(0.5, 1.5, size=4) * 2 * np.pi / n
    ph = rng.uniform(0, 2 * np.pi, 4)
    a = rng.uniform(-1, 1, size=2) * amp
    t = rng.uniform(0, 2 * np.pi)
    sh = rng.uniform(*shift) * np.array([np.cos(t), np.sin(t)])
    uy = a[0] * np.sin(k[0] * xs + ph[0]) * np.cos(k[1] * ys + ph[1]) + sh[0]
    ux = a[1] * np.sin(k[2] * ys + ph[2]) * np.cos(k[3] * xs + ph[3]) + sh[1]
    return uy, ux


def warped_pair(rng, n=128, amp=5.0, n_keypoints=10, margin=(24, 104)):
    """Source image, target image and keypoints with known correspondence.

    The target samples the source at ``y - u(y)``, so a source point ``x``
    lands at the fixed point ``y = x + u(y)``.  Only keypoints whose target
    position falls inside ``margin`` are kept.
    """
    src = texture(rng, n)
    uy, ux = smooth_deformation(rng, n, amp)
    ys, xs = np.mgrid[0:n, 0:n].astype(float)
    tgt = sample_bicubic(src, ys - uy, xs - ux)
    kps, truth = {}, {}
    for q in range(n_keypoints):
        x, y = rng.uniform(20, n - 20, 2)
        ty, tx = y, x
        for _ in range(50):
            dy = ndimage.map_coordinates(uy, [[ty], [tx]], order=1)[0]
            dx = ndimage.map_coordinates(ux, [[ty], [tx]], order=1)[0]
            ty, tx = y + dy, x + dx
        if margin[0] <= tx <= margin[1] and margin[0] <= ty <= margin[1]:
            kps[f"k{q}"] = Keypoint(x, y, True)
            truth[f"k{q}"] = Keypoint(tx, ty, True)
    box = (0, 0, n, n)
    return src, tgt, KeypointSet("src", box, kps), KeypointSet("tgt", box, truth)


# ------------------------------------------------------------ detectors

def planted_grid(rng, shape=(9, 11), dim=6, cell=None, signature=None, noise=0.1,
                 geometry=GridGeometry(16, 40, 8)):
    """Noise grid with ``signature`` planted at ``cell``."""
    h, w = shape
    data = rng.normal(scale=noise, size=(h, w, dim))
    if cell is None:
        cell = (int(rng.integers(h)), int(rng.integers(w)))
    if signature is None:
        signature = np.ones(dim)
    data[cell] = signature
    return FeatureGrid(data, geometry), cell


# ------------------------------------------------------------ datasets on disk

def write_manifest_rows(path, rows):
    lines = ["\t".join(COLUMNS)] + ["\t".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def planted_dataset(root, rng, n_train=6, n_val=4, shape=(9, 11), dim=8,
                    names=("beak", "tail"), geometry=GridGeometry(16, 40, 8)):
    """Feature grids where each keypoint type sits on a cell carrying its own signature.

    Returns the manifest path.  Images are flat gray placeholders of the
    grid's pixel extent; the bbox is the whole image.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    h, w = shape
    side_y = int(geometry.center_offset) * 2 + geometry.stride * (h - 1)
    side_x = int(geometry.center_offset) * 2 + geometry.stride * (w - 1)
    sigs = {n: np.eye(dim)[k] * 3.0 for k, n in enumerate(names)}
    records, rows = [], []
    for k in range(n_train + n_val):
        iid = f"im{k:02d}"
        data = rng.normal(scale=0.05, size=(h, w, dim))
        pts = {}
        cells = rng.choice(h * w, size=len(names), replace=False)
        for name, c in zip(names, cells):
            i, j = divmod(int(c), w)
            data[i, j] += sigs[name]
            pts[name] = Keypoint(float(geometry.center_offset + j * geometry.stride),
                                 float(geometry.center_offset + i * geometry.stride), True)
        write_grid(FeatureGrid(data, geometry, iid), root / f"{iid}.conv5.dcfg")
        write_grid(FeatureGrid(rng.normal(size=(1, 1, 16)), UNIT, iid), root / f"{iid}.global.dcfg")
        write_png(root / f"{iid}.png", np.full((side_y, side_x), 128, dtype=np.uint8))
        records.append(KeypointSet(iid, (0, 0, side_x, side_y), pts))
        split = "train" if k < n_train else "val"
        rows.append([iid, f"{iid}.png", f"conv5={iid}.conv5.dcfg", f"{iid}.global.dcfg",
                     "ann.csv", "bird", split])
    write_annotations(root / "ann.csv", records)
    write_manifest_rows(root / "manifest.tsv", rows)
    return root / "manifest.tsv"


def warped_dataset(root, rng, n_pairs=3, n=128):
    """Source/target image pairs; sources are train, targets val."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records, rows, truths = [], [], {}
    for p in range(n_pairs):
        src, tgt, ks, kt = warped_pair(rng, n)
        sid, tid = f"s{p}", f"t{p}"
        # global descriptors pair each target with its own source
        for iid in (sid, tid):
            vec = np.full((1, 1, n_pairs), 0.1)
            vec[0, 0, p] = 1.0
            write_grid(FeatureGrid(vec, UNIT, iid), root / f"{iid}.global.dcfg")
        write_png(root / f"{sid}.png", src)
        write_png(root / f"{tid}.png", tgt)
        records += [ks.replace(image_id=sid), kt.replace(image_id=tid)]
        truths[tid] = kt.replace(image_id=tid)
        rows += [[sid, f"{sid}.png", "", f"{sid}.global.dcfg", "ann.csv", "tex", "train"],
                 [tid, f"{tid}.png", "", f"{tid}.global.dcfg", "ann.csv", "tex", "val"]]
    write_annotations(root / "ann.csv", records)
    write_manifest_rows(root / "manifest.tsv", rows)
    return root / "manifest.tsv", truths
