"""Aggregated activation moments of one layer batch.

A batch of N activation vectors in R^D is summarized by four scalars:

  m1_hat  sum over features of the empirical mean
  m2_hat  sum over features of the squared empirical mean
  m3_hat  sum of the diagonal of the raw second-moment matrix E[z z^T]
  m4_hat  sum of its off-diagonal entries

m4_hat uses the O(N*D) identity  mean_n (sum_i z_ni)^2 - m3_hat, so the
D x D matrix is never materialized. Inputs may be float32; accumulation is
always float64.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NonFiniteValueError

MOMENT_NAMES = ("m1", "m2", "m3", "m4")


@dataclass(frozen=True)
class AggregatedMoments:
    m1_hat: float
    m2_hat: float
    m3_hat: float
    m4_hat: float

    def __post_init__(self):
        vals = (self.m1_hat, self.m2_hat, self.m3_hat, self.m4_hat)
        if not all(np.isfinite(v) for v in vals):
            raise NonFiniteValueError(f"non-finite aggregated moments: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.m1_hat, self.m2_hat, self.m3_hat, self.m4_hat])

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.m1_hat, self.m2_hat, self.m3_hat, self.m4_hat)


def moments_of_array(values: np.ndarray) -> AggregatedMoments:
    """Aggregated moments of a raw (N, D) array."""
    z = np.ascontiguousarray(values, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
        raise ValueError(f"expected a non-empty (N, D) batch, got shape {values.shape}")
    m = _kernels.batch_moments(z)
    return AggregatedMoments(float(m[0]), float(m[1]), float(m[2]), float(m[3]))


def compute_moments(batch) -> AggregatedMoments:
    """Aggregated moments of a LayerActivations batch."""
    return moments_of_array(batch.values)


def derived_metrics(m: AggregatedMoments) -> dict[str, float]:
    """Population-level representation metrics expressible in the four moments.

    The pairwise quantities assume independently drawn example pairs; for a
    finite batch of N examples the empirical mean over ordered pairs differs
    from these identities by an O(1/N) term.
    """
    return {
        "expected_sq_l2_norm": m.m3_hat,
        "expected_pairwise_inner_product": m.m2_hat,
        "expected_sq_l2_dispersion": 2.0 * (m.m3_hat - m.m2_hat),
        "total_feature_variance": m.m3_hat - m.m2_hat,
    }
