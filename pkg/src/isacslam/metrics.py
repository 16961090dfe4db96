"""Localization and mapping error metrics: MAE, OSPA, MOSPA."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    cutoff: float = 5.0
    order: float = 1.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("OSPA cutoff must be positive")
        if not self.order >= 1:
            raise ValueError("OSPA order must be >= 1")


def mae(estimates, truths):
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tru = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(est) != len(tru):
        raise ValueError(f"length mismatch: {len(est)} estimates vs {len(tru)} truths")
    if len(est) == 0:
        raise ValueError("mae needs at least one point")
    return float(np.mean(np.linalg.norm(est - tru, axis=1)))


def ospa(X, Y, params=OspaParams()):
    """OSPA distance between two finite 2D point sets (exact assignment)."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    c, p = params.cutoff, params.order
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m > n:
        X, Y, m, n = Y, X, n, m
    if m == 0:
        return float(c)
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    cost = np.minimum(d, c) ** p
    rows, cols = linear_sum_assignment(cost)
    # sorted sum: the result does not depend on which set came first
    total = np.sort(cost[rows, cols]).sum() + c ** p * (n - m)
    return float((total / n) ** (1.0 / p))


def mospa(runs):
    """Element-wise mean of equal-length per-epoch OSPA series."""
    if len(runs) == 0:
        raise ValueError("mospa needs at least one run")
    arr = np.asarray(runs, dtype=float)
    if arr.ndim != 2:
        raise ValueError("all series must have the same length")
    return arr.mean(axis=0)
