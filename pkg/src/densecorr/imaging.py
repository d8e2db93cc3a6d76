"""PNG I/O and the few image manipulations the pipelines need."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from densecorr._fileutil import atomic_write_bytes


def read_image(path) -> np.ndarray:
    """uint8 array, ``(H, W)`` for grayscale files and ``(H, W, 3)`` otherwise."""
    with Image.open(path) as im:
        if im.mode in ("L", "I", "I;16", "F", "1"):
            return np.asarray(im.convert("L"))
        return np.asarray(im.convert("RGB"))


def write_png(path, image) -> None:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def to_gray(image) -> np.ndarray:
    """Float luma in the image's own value range."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., :3] @ np.array([0.299, 0.587, 0.114])


def crop_to_box(image, bbox, side: int) -> np.ndarray:
    """Crop ``bbox = (x, y, w, h)`` and resize it to ``side x side`` (bilinear).

    Box pixels outside the image are filled by edge replication.
    """
    arr = np.asarray(image)
    x, y, w, h = (float(v) for v in bbox)
    h_img, w_img = arr.shape[:2]
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = int(np.ceil(x + w)), int(np.ceil(y + h))
    pad = [(max(0, -y0), max(0, y1 - h_img)), (max(0, -x0), max(0, x1 - w_img))]
    pad += [(0, 0)] * (arr.ndim - 2)
    padded = np.pad(arr, pad, mode="edge")
    oy, ox = pad[0][0], pad[1][0]
    crop = padded[y0 + oy:y1 + oy, x0 + ox:x1 + ox]
    im = Image.fromarray(crop if crop.dtype == np.uint8 else crop.astype(np.float32))
    # the box may start at a fractional pixel inside the integer crop
    fx, fy = x - x0, y - y0
    out = im.resize((side, side), Image.Resampling.BILINEAR, box=(fx, fy, fx + w, fy + h))
    return np.asarray(out)
