"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Set ABE_NUMBA=0 to force the numpy path (the numpy path is also used
automatically when numba is not importable). Both paths implement the same
contracts and are benchmarked against each other in benchmarks/bench_kernels.py.

Kernels:
  batch_moments(z)      aggregated activation moments of one (N, D) batch
  suffix_pearson(y, x)  Pearson correlation of y vs x over every suffix window

All accumulation is float64. A window counts as zero-variance (undefined
correlation) only when a series is exactly constant over the window; the
min == max test keeps that decision independent of summation round-off.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_AVAILABLE",
    "USING_NUMBA",
    "batch_moments",
    "suffix_pearson",
    "batch_moments_numpy",
    "suffix_pearson_numpy",
    "batch_moments_loops",
    "suffix_pearson_loops",
]


def batch_moments_loops(z):
    """Aggregated moments (m1, m2, m3, m4) of an (N, D) float64 batch.

    m1 = sum_i mean_i, m2 = sum_i mean_i^2, m3 = trace of the raw second
    moment matrix, m4 = its off-diagonal total, computed from per-row sums
    so the D x D matrix is never formed.
    """
    n, d = z.shape
    col_sum = np.zeros(d)
    m3_acc = 0.0
    sq_row_acc = 0.0
    for i in range(n):
        row_acc = 0.0
        for j in range(d):
            v = z[i, j]
            col_sum[j] += v
            m3_acc += v * v
            row_acc += v
        sq_row_acc += row_acc * row_acc
    m1 = 0.0
    m2 = 0.0
    for j in range(d):
        mu = col_sum[j] / n
        m1 += mu
        m2 += mu * mu
    m3 = m3_acc / n
    m4 = sq_row_acc / n - m3
    return np.array([m1, m2, m3, m4])


def suffix_pearson_loops(y, x):
    """rho[s] = Pearson(y[s+1:], x[s+1:]) for s = 0 .. len-3; NaN if undefined.

    Two-point windows are resolved by increment signs, so a window over two
    distinct points is exactly +/-1 regardless of floating-point scale; a
    window where either series is exactly constant is undefined.
    """
    w = y.shape[0]
    m = w - 2
    out = np.empty(max(m, 0))
    for s in range(m):
        lo = s + 1
        n = w - lo
        if n == 2:
            dy = y[lo + 1] - y[lo]
            dx = x[lo + 1] - x[lo]
            if dy == 0.0 or dx == 0.0:
                out[s] = np.nan
            else:
                out[s] = 1.0 if (dy > 0.0) == (dx > 0.0) else -1.0
            continue
        ymin = y[lo]
        ymax = y[lo]
        xmin = x[lo]
        xmax = x[lo]
        my = 0.0
        mx = 0.0
        for k in range(lo, w):
            yv = y[k]
            xv = x[k]
            my += yv
            mx += xv
            if yv < ymin:
                ymin = yv
            elif yv > ymax:
                ymax = yv
            if xv < xmin:
                xmin = xv
            elif xv > xmax:
                xmax = xv
        if ymin == ymax or xmin == xmax:
            out[s] = np.nan
            continue
        my /= n
        mx /= n
        num = 0.0
        vy = 0.0
        vx = 0.0
        for k in range(lo, w):
            dy = y[k] - my
            dx = x[k] - mx
            num += dy * dx
            vy += dy * dy
            vx += dx * dx
        if vy <= 0.0 or vx <= 0.0:
            out[s] = np.nan
            continue
        r = num / np.sqrt(vy * vx)
        if r > 1.0:
            r = 1.0
        elif r < -1.0:
            r = -1.0
        out[s] = r
    return out


def batch_moments_numpy(z):
    n = z.shape[0]
    col_mean = z.sum(axis=0) / n
    m1 = float(col_mean.sum())
    m2 = float((col_mean * col_mean).sum())
    m3 = float((z * z).sum() / n)
    row_sum = z.sum(axis=1)
    m4 = float((row_sum * row_sum).sum() / n) - m3
    return np.array([m1, m2, m3, m4])


def suffix_pearson_numpy(y, x):
    w = y.shape[0]
    m = w - 2
    if m <= 0:
        return np.empty(0)
    out = np.full(m, np.nan)
    for s in range(m):
        yw = y[s + 1 :]
        xw = x[s + 1 :]
        if yw.shape[0] == 2:
            dy = yw[1] - yw[0]
            dx = xw[1] - xw[0]
            if dy != 0.0 and dx != 0.0:
                out[s] = 1.0 if (dy > 0.0) == (dx > 0.0) else -1.0
            continue
        if yw.min() == yw.max() or xw.min() == xw.max():
            continue
        dy = yw - yw.mean()
        dx = xw - xw.mean()
        vy = float(dy @ dy)
        vx = float(dx @ dx)
        if vy <= 0.0 or vx <= 0.0:
            continue
        out[s] = min(1.0, max(-1.0, float(dy @ dx) / np.sqrt(vy * vx)))
    return out


def _numba_enabled():
    flag = os.environ.get("ABE_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = None
    NUMBA_AVAILABLE = False

if NUMBA_AVAILABLE:
    batch_moments_numba = njit(cache=True)(batch_moments_loops)
    suffix_pearson_numba = njit(cache=True)(suffix_pearson_loops)
else:  # pragma: no cover
    batch_moments_numba = None
    suffix_pearson_numba = None

USING_NUMBA = NUMBA_AVAILABLE and _numba_enabled()

if USING_NUMBA:
    batch_moments = batch_moments_numba
    suffix_pearson = suffix_pearson_numba
else:
    batch_moments = batch_moments_numpy
    suffix_pearson = suffix_pearson_numpy
