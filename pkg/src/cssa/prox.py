"""Proximal operators and projections for the coefficient update.

Every operator treats the LAST axis of its input as the group: a plain
1-D vector is a single group, while an array of shape ``(..., N)`` is
processed as a stack of independent length-N groups. This is what lets
the solver apply one vectorized call to all (filter, pixel) rows at
once.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProxWeights:
    """Weights of the combined elementwise + group penalty.

    tau weighs the elementwise (l1) term, kappa the group (l2) term.
    """

    tau: float
    kappa: float

    def __post_init__(self):
        if self.tau < 0 or self.kappa < 0:
            raise ValueError(f"weights must be nonnegative, got {self}")


def shrink(a, tau):
    """Elementwise soft-thresholding ``sign(a) * max(0, |a| - tau)``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def prox_l2(a, tau):
    """Proximal operator of ``tau * ||.||_2`` on each last-axis group.

    Shrinks the group radially: ``(1 - tau / max(||a||_2, tau)) * a``,
    which zeroes the whole group when its norm is at most tau.
    """
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    a = np.asarray(a, dtype=np.float64)
    if tau == 0.0:
        return a.copy()
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    factor = 1.0 - tau / np.maximum(norms, tau)
    return factor * a


def project_l1_ball(a, radius):
    """Euclidean projection of each last-axis group onto the l1 ball.

    Uses the sort-and-threshold simplex algorithm on the magnitudes:
    after sorting each group in decreasing magnitude order, the
    threshold is the largest partial average exceeded by its own
    summand. Groups already inside the ball are returned unchanged.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    a = np.asarray(a, dtype=np.float64)
    mags = np.abs(a)
    inside = mags.sum(axis=-1, keepdims=True) <= radius

    n = a.shape[-1]
    s = np.sort(mags, axis=-1)[..., ::-1]
    excess = np.cumsum(s, axis=-1) - radius
    counts = np.arange(1, n + 1, dtype=np.float64)
    # Active set size: number of sorted entries above their partial average.
    rho = np.count_nonzero(s * counts > excess, axis=-1, keepdims=True)
    theta = np.take_along_axis(excess, rho - 1, axis=-1) / rho
    projected = np.sign(a) * np.maximum(mags - theta, 0.0)
    return np.where(inside, a, projected)


def prox_linf(a, tau):
    """Proximal operator of ``tau * ||.||_inf`` via Moreau decomposition.

    ``prox(a) = a - tau * project_l1_ball(a / tau, 1)``.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a = np.asarray(a, dtype=np.float64)
    return a - tau * project_l1_ball(a / tau, 1.0)


def prox_l1_l2(a, w: ProxWeights):
    """Proximal operator of ``tau*||.||_1 + kappa*||.||_2`` per group.

    Composition of the elementwise shrinkage with the group l2 prox.
    """
    return prox_l2(shrink(a, w.tau), w.kappa)
