"""Keypoint classifiers and sliding-window keypoint detectors on feature grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from densecorr.gridgeom import FeatureGrid, cell_centers
from densecorr.parts.svm import LinearModel, mine_hard_negatives, train_svm


@dataclass(frozen=True)
class DetectorConfig:
    c: float = 1e-6
    eta: float = 0.1
    sigma: float = 22.0
    neighborhood: int = 3
    positives_per_keypoint: int = 10
    canonical_box: int = 500
    hnm_rounds: int = 10
    hnm_batch: int = 1000
    # Hand-crafted comparator: distance thresholds in multiples of this bin size
    # replace the nearest-k / rf-containment rules when set.
    bin_size: float | None = None

    def __post_init__(self):
        if self.c <= 0 or self.sigma <= 0:
            raise ValueError("c and sigma must be positive")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if self.neighborhood < 1 or self.neighborhood % 2 == 0:
            raise ValueError("neighborhood must be a positive odd integer")
        if self.positives_per_keypoint < 1 or self.canonical_box < 1:
            raise ValueError("positives_per_keypoint and canonical_box must be positive")
        if self.hnm_rounds < 0 or self.hnm_batch < 1:
            raise ValueError("invalid hard-negative-mining settings")


def stack_neighborhood(grid: FeatureGrid, cell, n: int = 3) -> np.ndarray:
    """Row-major concatenation of the ``n x n`` block around ``cell``; off-grid blocks are zero."""
    return stack_all(grid, n)[cell[0], cell[1]]


def stack_all(grid: FeatureGrid, n: int = 3) -> np.ndarray:
    """:func:`stack_neighborhood` for every cell at once, shape ``(h, w, n*n*dim)``."""
    if n < 1 or n % 2 == 0:
        raise ValueError("n must be a positive odd integer")
    h, w, d = grid.shape
    r = n // 2
    padded = np.zeros((h + 2 * r, w + 2 * r, d), dtype=np.float64)
    padded[r:r + h, r:r + w] = grid.data
    blocks = [padded[a:a + h, b:b + w] for a in range(n) for b in range(n)]
    return np.concatenate(blocks, axis=2)


@dataclass
class TrainingSet:
    positives: np.ndarray
    negatives: np.ndarray
    keypoint: str
    positive_provenance: list = field(default_factory=list)
    negative_provenance: list = field(default_factory=list)


def effective_rf(grid: FeatureGrid, n: int) -> int:
    g = grid.geometry
    return g.rf_size + (n - 1) * g.stride


def select_cells(grid: FeatureGrid, point, config: DetectorConfig):
    """``(positive_cells, negative_mask)`` for a keypoint at pixel ``point``.

    Positives are the ``positives_per_keypoint`` cells with the closest rf
    centers (ties to smaller ``(i, j)``); negatives are cells whose stacked rf
    does not contain the point.  With ``bin_size`` set, positives lie within
    two bin sizes and negatives at least four bin sizes away instead.
    """
    xs, ys = cell_centers(grid.geometry, grid.shape)
    px, py = point
    d2 = (xs - px) ** 2 + (ys - py) ** 2
    h, w = d2.shape
    ii, jj = np.mgrid[0:h, 0:w]
    if config.bin_size is not None:
        pos_mask = d2 <= (2 * config.bin_size) ** 2
        order = np.lexsort((jj.ravel(), ii.ravel(), d2.ravel()))
        pos = [divmod(int(k), w) for k in order if pos_mask.ravel()[k]]
        neg_mask = d2 >= (4 * config.bin_size) ** 2
    else:
        order = np.lexsort((jj.ravel(), ii.ravel(), d2.ravel()))
        pos = [divmod(int(k), w) for k in order[:config.positives_per_keypoint]]
        half = effective_rf(grid, config.neighborhood) / 2.0
        inside = (np.abs(xs - px) <= half) & (np.abs(ys - py) <= half)
        neg_mask = ~inside
    for i, j in pos:
        neg_mask[i, j] = False
    return pos, neg_mask


def build_training_set(dataset, keypoint: str, config: DetectorConfig = DetectorConfig()) -> TrainingSet:
    """Collect positives and negative candidates for one keypoint type.

    ``dataset`` yields ``(FeatureGrid, KeypointSet)`` pairs whose keypoints are
    already in the grid's pixel frame.
    """
    pos, neg, pos_prov, neg_prov = [], [], [], []
    for grid, kps in dataset:
        kp = kps.points.get(keypoint)
        if kp is None or not kp.visible:
            continue
        stacked = stack_all(grid, config.neighborhood)
        cells, neg_mask = select_cells(grid, (kp.x, kp.y), config)
        for cell in cells:
            pos.append(stacked[cell])
            pos_prov.append((kps.image_id, cell))
        for i, j in zip(*np.nonzero(neg_mask)):
            neg.append(stacked[i, j])
            neg_prov.append((kps.image_id, (int(i), int(j))))
    if not pos:
        raise ValueError(f"keypoint {keypoint!r} is not visible in any image")
    dim = len(pos[0])
    return TrainingSet(
        np.array(pos), np.array(neg).reshape(-1, dim), keypoint, pos_prov, neg_prov)


def train_detector(ts: TrainingSet, config: DetectorConfig = DetectorConfig(), seed: int = 0):
    """Initial SVM on a random negative batch, then hard negative mining over the rest."""
    if len(ts.negatives) == 0:
        raise ValueError(f"no negatives for keypoint {ts.keypoint!r}")
    rng = np.random.default_rng(seed)
    k = min(config.hnm_batch, len(ts.negatives))
    active = sorted(rng.choice(len(ts.negatives), size=k, replace=False).tolist())
    model = train_svm(ts.positives, ts.negatives[active], config.c, class_label=ts.keypoint)
    return mine_hard_negatives(model, ts.positives, ts.negatives, config.c,
                               rounds=config.hnm_rounds, batch=config.hnm_batch, active=active)


def train_one_vs_all(features, labels, c: float = 1e-6) -> dict[str, LinearModel]:
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValueError("one-vs-all needs at least two classes")
    return {cls: train_svm(X[labels == cls], X[labels != cls], c, class_label=cls)
            for cls in classes}


def classify_keypoint(models, feature) -> tuple[str, dict[str, float]]:
    """Label with the largest margin; ties go to the lexicographically smallest label."""
    if isinstance(models, dict):
        models = list(models.values())
    if not models:
        raise ValueError("no models")
    x = np.asarray(feature, dtype=np.float64).ravel()
    scores = {m.class_label: float(m.decision(x)) for m in models}
    best = None
    for label in sorted(scores):
        if best is None or scores[label] > scores[best]:
            best = label
    return best, scores


def cross_validate(features, labels, cs, folds: int = 5, seed: int = 0) -> list[tuple[float, float]]:
    """Mean held-out one-vs-all accuracy for each C in ``cs``."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    fold_of = np.random.default_rng(seed).permutation(len(y)) % folds
    out = []
    for c in cs:
        accs = []
        for f in range(folds):
            train, test = fold_of != f, fold_of == f
            if not test.any() or len(set(y[train].tolist())) < 2:
                continue
            models = train_one_vs_all(X[train], y[train], c)
            pred = [classify_keypoint(models, x)[0] for x in X[test]]
            accs.append(float(np.mean(np.array(pred) == y[test])))
        out.append((float(c), float(np.mean(accs)) if accs else float("nan")))
    return out


def squash(margin):
    """Logistic map of detector margins into (0, 1)."""
    return 1.0 / (1.0 + np.exp(-np.asarray(margin, dtype=np.float64)))


def log_squash(margin):
    return -np.logaddexp(0.0, -np.asarray(margin, dtype=np.float64))


def prior_score(candidate, mu, sigma: float):
    """Unnormalized spherical Gaussian, 1 at the mean."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(candidate, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    return np.exp(-np.sum(d * d, axis=-1) / (2.0 * sigma**2))


def fuse_scores(s, p, eta: float):
    """Geometric interpolation ``s**(1 - eta) * p**eta``."""
    s = np.asarray(s, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(s <= 0) or np.any(p <= 0):
        raise ValueError("scores must be positive")
    out = s ** (1.0 - eta) * p**eta
    return float(out) if out.ndim == 0 else out


@dataclass
class Detection:
    x: float
    y: float
    cell: tuple[int, int]
    log_scores: np.ndarray

    @property
    def scores(self) -> np.ndarray:
        return np.exp(self.log_scores)


def fused_log_scores(log_s, log_p, eta):
    return (1.0 - eta) * log_s + eta * log_p


def predict_keypoint(grid: FeatureGrid, model: LinearModel, prior_mu=None,
                     config: DetectorConfig = DetectorConfig()) -> Detection:
    """Highest fused score over all cells; ties go to the smaller ``(i, j)``.

    Scores are kept in the log domain so a sharply peaked prior cannot
    underflow.  ``prior_mu=None`` means a flat prior.
    """
    stacked = stack_all(grid, config.neighborhood)
    log_s = log_squash(model.decision(stacked))
    xs, ys = cell_centers(grid.geometry, grid.shape)
    if prior_mu is None:
        log_p = np.zeros_like(log_s)
    else:
        mx, my = prior_mu
        log_p = -((xs - mx) ** 2 + (ys - my) ** 2) / (2.0 * config.sigma**2)
    log_f = fused_log_scores(log_s, log_p, config.eta)
    i, j = np.unravel_index(int(np.argmax(log_f)), log_f.shape)
    return Detection(float(xs[i, j]), float(ys[i, j]), (int(i), int(j)), log_f)
