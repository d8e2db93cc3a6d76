"""Linear hinge-loss SVM with an unregularized bias, trained in the dual.

The solver is SMO on

    min_a  1/2 a'Qa - sum(a)   s.t.  0 <= a_i <= C,  y'a = 0,

with second-order working-set selection.  For a linear kernel the gradient
is maintained through the primal weights ``w = sum(a_i y_i x_i)``.
Convergence is declared on the relative duality gap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from densecorr._fileutil import atomic_write_bytes

_TAU = 1e-12


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    class_label: str = ""
    objective: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.size

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ValueError(f"feature dim {X.shape[-1]} != model dim {self.dim}")
        return X @ self.weights + self.bias

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return (self.class_label == other.class_label and self.bias == other.bias
                and np.array_equal(self.weights, other.weights))

    __hash__ = None


def primal_objective(w, b, X, y, c) -> float:
    margins = y * (X @ w + b)
    return 0.5 * float(w @ w) + c * float(np.maximum(0.0, 1.0 - margins).sum())


def _best_bias(scores: np.ndarray, y: np.ndarray) -> float:
    """Minimizer over b of ``sum(max(0, 1 - y (s + b)))``.

    The loss is convex piecewise linear with kinks at ``y_i - s_i``.  When the
    minimum is attained on a flat interval, its midpoint is returned.
    """
    kinks = y - scores
    neg = np.sort(kinks[y < 0])
    pos = np.sort(kinks[y > 0])
    u = np.unique(kinks)
    slope_right = (np.searchsorted(neg, u, side="right")
                   - (pos.size - np.searchsorted(pos, u, side="right")))
    idx = int(np.argmax(slope_right >= 0))
    if slope_right[idx] == 0 and idx + 1 < u.size:
        return float(0.5 * (u[idx] + u[idx + 1]))
    return float(u[idx])


def _random_feasible(rng, y, c):
    a = rng.uniform(0, c, size=y.size)
    pos, neg = y > 0, y < 0
    sp, sn = a[pos].sum(), a[neg].sum()
    if sp > sn:
        a[pos] *= sn / sp
    elif sn > 0:
        a[neg] *= sp / sn
    return a


def train_svm(positives, negatives, c: float = 1e-6, *, tol: float = 1e-6,
              seed: int | None = None, max_iter: int | None = None,
              class_label: str = "") -> LinearModel:
    """Minimize ``1/2 |w|^2 + c * sum(hinge(y (w.x + b)))``.

    ``seed=None`` starts from ``a = 0`` in the given sample order; an integer
    seed shuffles the samples and starts from a random feasible point.  Both
    reach the same optimum up to ``tol`` (relative duality gap).
    """
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if P.size == 0 or N.size == 0:
        raise ValueError("need at least one positive and one negative sample")
    if P.shape[1] != N.shape[1]:
        raise ValueError("positive and negative feature dims differ")
    if c <= 0:
        raise ValueError("c must be positive")
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    n = len(y)

    a = np.zeros(n)
    if seed is not None:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        X, y = X[perm], y[perm]
        a = _random_feasible(rng, y, c)

    sq = np.einsum("ij,ij->i", X, X)
    w = X.T @ (a * y)
    grad = y * (X @ w) - 1.0
    max_iter = max_iter or 200 * n + 20000
    eps = 1e-3

    it = 0
    while True:
        while it < max_iter:
            it += 1
            yg = -y * grad
            up = ((y > 0) & (a < c)) | ((y < 0) & (a > 0))
            low = ((y < 0) & (a < c)) | ((y > 0) & (a > 0))
            if not up.any() or not low.any():
                break
            i = int(np.argmax(np.where(up, yg, -np.inf)))
            m_val = yg[i]
            big_m = np.min(np.where(low, yg, np.inf))
            if m_val - big_m < eps:
                break
            kit = X @ X[i]
            bgap = m_val - yg
            quad = sq[i] + sq - 2.0 * kit
            quad = np.where(quad > 0, quad, _TAU)
            cand = low & (bgap > 0)
            j = int(np.argmin(np.where(cand, -(bgap**2) / quad, np.inf)))

            # two-variable subproblem (LIBSVM update rules)
            qij = y[i] * y[j] * kit[j]
            ai_old, aj_old = a[i], a[j]
            if y[i] != y[j]:
                q = max(sq[i] + sq[j] + 2.0 * qij, _TAU)
                delta = (-grad[i] - grad[j]) / q
                diff = a[i] - a[j]
                a[i] += delta
                a[j] += delta
                if diff > 0 and a[j] < 0:
                    a[j], a[i] = 0.0, diff
                elif diff <= 0 and a[i] < 0:
                    a[i], a[j] = 0.0, -diff
                if diff > 0 and a[i] > c:
                    a[i], a[j] = c, c - diff
                elif diff <= 0 and a[j] > c:
                    a[j], a[i] = c, c + diff
            else:
                q = max(sq[i] + sq[j] - 2.0 * qij, _TAU)
                delta = (grad[i] - grad[j]) / q
                total = a[i] + a[j]
                a[i] -= delta
                a[j] += delta
                if total > c and a[i] > c:
                    a[i], a[j] = c, total - c
                elif total <= c and a[j] < 0:
                    a[j], a[i] = 0.0, total
                if total > c and a[j] > c:
                    a[j], a[i] = c, total - c
                elif total <= c and a[i] < 0:
                    a[i], a[j] = 0.0, total
            dw = (a[i] - ai_old) * y[i] * X[i] + (a[j] - aj_old) * y[j] * X[j]
            w += dw
            grad += y * (X @ dw)

        # dual and primal from scratch to avoid drift
        w = X.T @ (a * y)
        grad = y * (X @ w) - 1.0
        b = _best_bias(X @ w, y)
        primal = primal_objective(w, b, X, y, c)
        dual = float(a.sum()) - 0.5 * float(w @ w)
        gap = (primal - dual) / max(abs(primal), 1e-300)
        if gap <= tol or it >= max_iter or eps < 1e-14:
            if gap > tol:
                warnings.warn(f"SVM stopped with relative gap {gap:.2e}", ConvergenceWarning,
                              stacklevel=2)
            return LinearModel(w, b, class_label, primal)
        eps *= 0.1


def svm_objective(model: LinearModel, positives, negatives, c: float) -> float:
    P = np.atleast_2d(np.asarray(positives, dtype=np.float64))
    N = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    return primal_objective(model.weights, model.bias, X, y, c)


@dataclass
class MiningResult:
    model: LinearModel
    active: list[int]
    objectives: list[float]
    rounds: int


def mine_hard_negatives(model: LinearModel, positives, negative_pool, c: float,
                        rounds: int = 10, batch: int = 1000,
                        active=(), seed: int | None = None) -> MiningResult:
    """Grow the active negative set with pool violators and retrain.

    Each round scores the whole pool, adds up to ``batch`` not-yet-active
    negatives with margin above -1 (highest first), and retrains on
    positives plus the active set.  ``model`` must have been trained on the
    positives plus the initial ``active`` indices.
    """
    pool = np.atleast_2d(np.asarray(negative_pool, dtype=np.float64))
    active = list(active)
    in_active = np.zeros(len(pool), dtype=bool)
    in_active[active] = True
    objectives = []
    done = 0
    for done in range(1, rounds + 1):
        scores = model.decision(pool)
        cand = np.flatnonzero((scores > -1.0) & ~in_active)
        if cand.size == 0:
            break
        cand = cand[np.argsort(-scores[cand], kind="stable")][:batch]
        active.extend(int(k) for k in cand)
        in_active[cand] = True
        model = train_svm(positives, pool[active], c, seed=seed, class_label=model.class_label)
        objectives.append(model.objective)
    return MiningResult(model, active, objectives, done if rounds else 0)


_MODEL_MAGIC = "DCSVM"


def write_model(path, model: LinearModel) -> None:
    if "\t" in model.class_label or "\n" in model.class_label:
        raise ValueError("class label may not contain tabs or newlines")
    header = f"{_MODEL_MAGIC}\t{model.class_label}\t{model.dim}\t{model.bias!r}\n".encode()
    atomic_write_bytes(path, header + np.asarray(model.weights, dtype="<f8").tobytes())


def read_model(path) -> LinearModel:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing model header")
    parts = raw[:nl].decode().split("\t")
    if len(parts) != 4 or parts[0] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file")
    _, label, dim, bias = parts
    dim = int(dim)
    body = raw[nl + 1:]
    if len(body) != 8 * dim:
        raise ValueError(f"{path}: expected {8 * dim} weight bytes, got {len(body)}")
    return LinearModel(np.frombuffer(body, dtype="<f8"), float(bias), label)

