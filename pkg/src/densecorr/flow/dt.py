"""Generalized squared-Euclidean distance transforms (lower envelope of parabolas).

``dt1d_quadratic`` computes ``min_p costs[p] + weight * (q - p)**2`` for every
``q`` in O(n) by sweeping the lower envelope of the parabolas rooted at each
``p``.  Infinite costs are allowed and simply never enter the envelope.
"""

from __future__ import annotations

import numpy as np


def dt1d_quadratic(costs, weight: float) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(costs, dtype=np.float64).ravel()
    n = f.size
    if n == 0:
        raise ValueError("costs must be non-empty")
    if weight <= 0:
        raise ValueError("weight must be positive")
    values = np.full(n, np.inf)
    argmin = np.zeros(n, dtype=np.intp)

    v = np.empty(n, dtype=np.intp)    # parabola roots in the envelope
    z = np.empty(n + 1)                # boundaries between envelope segments
    k = -1
    for q in range(n):
        if not np.isfinite(f[q]):
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        fq = f[q] + weight * q * q
        while True:
            p = v[k]
            s = (fq - (f[p] + weight * p * p)) / (2.0 * weight * (q - p))
            if s > z[k]:
                break
            k -= 1
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf

    if k < 0:
        return values, argmin
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        values[q] = f[p] + weight * (q - p) ** 2
        argmin[q] = p
    return values, argmin


def dt2d_quadratic(costs, weight: float) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Separable 2-D transform: rows first, then columns.

    Returns ``values`` and ``(arg_rows, arg_cols)`` such that
    ``values[q] == costs[arg_rows[q], arg_cols[q]] + weight * |q - arg|**2``.
    A zero weight gives the global minimum everywhere.
    """
    f = np.asarray(costs, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("costs must be 2-D")
    r, c = f.shape
    if weight == 0:
        flat = int(np.argmin(f))
        ar, ac = divmod(flat, c)
        return (np.full(f.shape, f[ar, ac]),
                (np.full(f.shape, ar, dtype=np.intp), np.full(f.shape, ac, dtype=np.intp)))
    if weight < 0:
        raise ValueError("weight must be non-negative")
    v1 = np.empty_like(f)
    a1 = np.empty(f.shape, dtype=np.intp)
    for i in range(r):
        v1[i], a1[i] = dt1d_quadratic(f[i], weight)
    values = np.empty_like(f)
    arg_rows = np.empty(f.shape, dtype=np.intp)
    for j in range(c):
        values[:, j], arg_rows[:, j] = dt1d_quadratic(v1[:, j], weight)
    arg_cols = a1[arg_rows, np.arange(c)[None, :]]
    return values, (arg_rows, arg_cols)


def dt1d_batch(costs: np.ndarray, weight: float) -> np.ndarray:
    """Values of :func:`dt1d_quadratic` along the last axis, vectorized over the rest.

    Same lower-envelope sweep, carried out simultaneously for every line.
    Infinite entries are excluded from the envelope; an all-infinite line
    stays infinite.
    """
    f = np.asarray(costs, dtype=np.float64)
    shape = f.shape
    n = shape[-1]
    f = f.reshape(-1, n)
    m = f.shape[0]
    if weight <= 0:
        raise ValueError("weight must be positive")
    rows = np.arange(m)
    finite = np.isfinite(f)
    g = np.where(finite, f + weight * np.arange(n) ** 2, np.inf)

    v = np.zeros((m, n), dtype=np.intp)
    z = np.full((m, n + 1), np.inf)
    k = np.full(m, -1, dtype=np.intp)
    for q in range(n):
        act = finite[:, q]
        # lines whose envelope is empty take q directly
        first = act & (k < 0)
        k[first] = 0
        v[first, 0] = q
        z[first, 0] = -np.inf
        z[first, 1] = np.inf
        pend = act & ~first
        while True:
            idx = rows[pend]
            if idx.size == 0:
                break
            kk = k[idx]
            p = v[idx, kk]
            s = (g[idx, q] - g[idx, p]) / (2.0 * weight * (q - p))
            pop = s <= z[idx, kk]
            k[idx[pop]] -= 1
            push = ~pop
            p_idx = idx[push]
            kp = k[p_idx] + 1
            k[p_idx] = kp
            v[p_idx, kp] = q
            z[p_idx, kp] = s[push]
            z[p_idx, kp + 1] = np.inf
            pend = np.zeros(m, dtype=bool)
            pend[idx[pop]] = True

    out = np.full((m, n), np.inf)
    live = k >= 0
    kk = np.zeros(m, dtype=np.intp)
    for q in range(n):
        while True:
            adv = live & (z[rows, kk + 1] < q)
            if not adv.any():
                break
            kk[adv] += 1
        p = v[rows, kk]
        out[live, q] = f[rows[live], p[live]] + weight * (q - p[live]) ** 2
    return out.reshape(shape)


def dt2d_batch(costs: np.ndarray, weight: float) -> np.ndarray:
    """2-D transform over the last two axes, vectorized over leading axes."""
    f = np.asarray(costs, dtype=np.float64)
    if weight == 0:
        mn = f.min(axis=(-2, -1), keepdims=True)
        return np.broadcast_to(mn, f.shape).copy()
    rowwise = dt1d_batch(f, weight)
    colwise = dt1d_batch(np.swapaxes(rowwise, -1, -2), weight)
    return np.swapaxes(colwise, -1, -2)
