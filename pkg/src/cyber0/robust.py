"""Scalar trimmed mean and the per-direction / per-coordinate aggregators.

The trimmed mean sorts ascending, drops floor(beta * m) values from each
end, and averages the survivors in ascending order. The fixed summation
order makes every aggregate bit-reproducible regardless of client
scheduling; ties are resolved by value only, so permuting clients can
never change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .zo import ClientReport


class AggregationError(ValueError):
    pass


def trim_count(beta: float, m: int) -> int:
    if not 0.0 <= beta < 0.5:
        raise AggregationError(f"trim fraction must satisfy 0 <= beta < 1/2, got {beta}")
    return int(math.floor(beta * m))


def _columnwise_trimmed_mean(matrix: np.ndarray, beta: float) -> np.ndarray:
    """Trimmed mean down each column of an (m, n) matrix.

    Columns are sorted and the survivor sums accumulate left to right
    (cumsum), matching the scalar routine bit for bit.
    """
    m = matrix.shape[0]
    g = trim_count(beta, m)
    survivors = m - 2 * g
    if survivors < 1:
        raise AggregationError(f"trimming {g} from each end of {m} values leaves nothing")
    s = np.sort(matrix, axis=0)
    kept = s[g : m - g]
    out = np.cumsum(kept, axis=0)[-1] / survivors
    # a constant survivor set means the exact answer is that constant; the
    # sum/divide route can be one ulp off (n * c / n need not round to c)
    const = kept[0] == kept[-1]
    out[const] = kept[0][const]
    return out


def trimmed_mean(values, beta: float) -> float:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise AggregationError("trimmed_mean needs a nonempty 1-D multiset")
    return float(_columnwise_trimmed_mean(x[:, None], beta)[0])


@dataclass
class AggregationInput:
    """One round's reports plus the trim fraction."""

    reports: list[ClientReport]
    beta: float

    def __post_init__(self) -> None:
        if not self.reports:
            raise AggregationError("at least one client report required")
        counts = {len(r.coefficients) for r in self.reports}
        if len(counts) != 1:
            raise AggregationError(f"reports carry differing coefficient counts: {sorted(counts)}")
        m = len(self.reports)
        if m - 2 * trim_count(self.beta, m) < 1:
            raise AggregationError("no survivors after trimming")

    def matrix(self) -> np.ndarray:
        """(m, k) matrix in ascending client-id order."""
        ordered = sorted(self.reports, key=lambda r: r.client_id)
        return np.stack([r.coefficients for r in ordered])


def robust_direction_aggregate(agg_input: AggregationInput) -> np.ndarray:
    """Per-direction trimmed mean over the m clients' coefficients."""
    return _columnwise_trimmed_mean(agg_input.matrix(), agg_input.beta)


def coordwise_trimmed_mean(grads: np.ndarray, beta: float) -> np.ndarray:
    """Trimmed mean applied independently per coordinate of m full gradients."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2:
        raise AggregationError("expected an (m, d) gradient matrix")
    return _columnwise_trimmed_mean(grads, beta)


def mean_aggregate(grads: np.ndarray) -> np.ndarray:
    """Coordinate-wise mean; by construction the beta = 0 trimmed mean."""
    return coordwise_trimmed_mean(grads, 0.0)
