"""Percentage of correct keypoints and classifier response histograms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PckReport:
    alpha: float
    per_type: dict
    mean: float
    # name -> (correct, visible)
    counts: dict = field(default_factory=dict, compare=False)


def pck(predictions, truths, alpha: float) -> PckReport:
    """Keypoint accuracy pooled over all visible instances of each type.

    A visible truth is correct when a visible prediction lies strictly closer
    than ``alpha * max(w, h)`` of the truth's bbox.  Invisible truths are
    skipped; missing predictions count as wrong.  Types with no visible truth
    do not enter the mean.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    preds = {p.image_id: p for p in predictions}
    truths = list(truths)
    truth_ids = {t.image_id for t in truths}
    missing = sorted(truth_ids - preds.keys())
    extra = sorted(preds.keys() - truth_ids)
    if missing or extra:
        raise ValueError(f"unmatched image ids: missing={missing} extra={extra}")

    counts: dict[str, list[int]] = {}
    for t in truths:
        p = preds[t.image_id]
        thr = alpha * max(t.bbox[2], t.bbox[3])
        for name, kp in t.points.items():
            if not kp.visible:
                continue
            c = counts.setdefault(name, [0, 0])
            c[1] += 1
            q = p.points.get(name)
            if q is not None and q.visible and np.hypot(q.x - kp.x, q.y - kp.y) < thr:
                c[0] += 1
    per_type = {n: c / v for n, (c, v) in sorted(counts.items())}
    mean = float(np.mean(list(per_type.values()))) if per_type else float("nan")
    return PckReport(alpha, per_type, mean, {n: tuple(c) for n, c in sorted(counts.items())})


def format_pck_table(rows, categories=None) -> str:
    """CSV with one row per method and one column per category plus the mean.

    ``rows`` is a sequence of ``(method, {category: PckReport})``; cells hold
    the category's mean PCK in percent.
    """
    rows = list(rows)
    if categories is None:
        categories = sorted({c for _, reps in rows for c in reps})
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["method", *categories, "mean"])
    for method, reps in rows:
        vals = [100.0 * reps[c].mean if c in reps else float("nan") for c in categories]
        finite = [v for v in vals if np.isfinite(v)]
        mean = float(np.mean(finite)) if finite else float("nan")
        out.writerow([method, *(f"{v:.1f}" for v in vals), f"{mean:.1f}"])
    return buf.getvalue()


HIST_HALF = 10


@dataclass
class ResponseHistogram:
    """Argmax offsets from the truth on a 21 x 21 lattice; ``counts[dy + 10, dx + 10]``."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((2 * HIST_HALF + 1,) * 2, dtype=np.int64))
    excluded_boundary: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.excluded_boundary

    def add(self, scores) -> tuple[int, int] | None:
        """Record one instance's 21 x 21 score map; returns the ``(dx, dy)`` kept, if any."""
        scores = np.asarray(scores, dtype=np.float64)
        side = 2 * HIST_HALF + 1
        if scores.shape != (side, side):
            raise ValueError(f"score map must be {side}x{side}")
        r, c = np.unravel_index(int(np.argmax(scores)), scores.shape)
        if r in (0, side - 1) or c in (0, side - 1):
            self.excluded_boundary += 1
            return None
        self.counts[r, c] += 1
        return int(c) - HIST_HALF, int(r) - HIST_HALF

    def count(self, dx: int, dy: int) -> int:
        return int(self.counts[dy + HIST_HALF, dx + HIST_HALF])


def offset_lattice(truth):
    """Pixel positions ``(xs, ys)`` of the 21 x 21 lattice centered on ``truth``."""
    off = np.arange(-HIST_HALF, HIST_HALF + 1, dtype=np.float64)
    dy, dx = np.meshgrid(off, off, indexing="ij")
    return truth[0] + dx, truth[1] + dy


def response_histogram(instances) -> ResponseHistogram:
    """Histogram over ``(score_fn, truth)`` pairs.

    ``score_fn(xs, ys)`` scores pixel positions given as arrays; it is
    evaluated on the single-pixel lattice around ``truth = (x, y)``.
    """
    hist = ResponseHistogram()
    for score_fn, truth in instances:
        xs, ys = offset_lattice(truth)
        hist.add(score_fn(xs, ys))
    return hist
