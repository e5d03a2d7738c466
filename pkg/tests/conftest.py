import math

import numpy as np
import pytest

from abe import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Trigger JIT compilation once so timed tests measure compute only."""
    z = np.ones((2, 3))
    _kernels.batch_moments(z)
    _kernels.suffix_pearson(np.arange(5.0), np.arange(5.0) * 2.0)


def oracle_moments(values):
    """Brute-force aggregated moments via the full D x D second-moment matrix."""
    z = np.asarray(values, dtype=np.float64)
    n = z.shape[0]
    mu = z.mean(axis=0)
    second = z.T @ z / n
    m3 = float(np.trace(second))
    return (
        float(mu.sum()),
        float((mu * mu).sum()),
        m3,
        float(second.sum()) - m3,
    )


def oracle_pearson(a, b):
    """Plain-Python two-pass Pearson correlation; None when undefined."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) == 2:
        da = a[1] - a[0]
        db = b[1] - b[0]
        if da == 0.0 or db == 0.0:
            return None
        return 1.0 if (da > 0.0) == (db > 0.0) else -1.0
    if min(a) == max(a) or min(b) == max(b):
        return None
    ma = math.fsum(a) / len(a)
    mb = math.fsum(b) / len(b)
    num = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = math.fsum((x - ma) ** 2 for x in a)
    vb = math.fsum((y - mb) ** 2 for y in b)
    if va <= 0.0 or vb <= 0.0:
        return None
    return max(-1.0, min(1.0, num / math.sqrt(va * vb)))


def oracle_stopping(target_values, source_values, checkpoints, t_valid_star,
                    interval_unit="rank"):
    """Exhaustive (layer, moment, start) search, kept deliberately naive.

    Returns (layer, moment, t_hat, diverged, best_score) with the same
    tie-break order the engine promises: lower layer, lower moment,
    earlier start; no-divergence falls back to t_valid_star.
    """
    checkpoints = list(int(c) for c in checkpoints)
    last = checkpoints.index(t_valid_star)
    n_layers = target_values.shape[1]
    best = None  # (score, layer, moment, start_rank)
    for layer in range(n_layers):
        for moment in range(1, 5):
            for start in range(0, last - 1):
                y = target_values[start + 1 : last + 1, layer, moment - 1]
                x = source_values[start + 1 : last + 1, layer, moment - 1]
                rho = oracle_pearson(y, x)
                if interval_unit == "rank":
                    span = last - start
                else:
                    span = checkpoints[last] - checkpoints[start]
                score = 0.0 if rho is None else -rho * span
                if best is None or score > best[0]:
                    best = (score, layer, moment, start)
    if best is None:
        return 0, 1, t_valid_star, False, 0.0
    score, layer, moment, start = best
    diverged = score > 0.0
    t_hat = checkpoints[start] if diverged else t_valid_star
    return layer, moment, t_hat, diverged, score
