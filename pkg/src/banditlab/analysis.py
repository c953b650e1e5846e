"""Scaling-law fits and the small numeric facts the lower-bound arguments use.

Total variation here follows the un-halved convention ``int |p - q|``,
which is what Pinsker's inequality ``int |p - q| <= sqrt(2 KL)`` bounds.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .adversary import _construction_key


@dataclass
class ScalingFit:
    alpha: float  # exponent of d
    beta: float  # exponent of T
    logC: float
    r2: float
    cells: int

    def to_json(self) -> dict:
        return asdict(self)


def fit_scaling(rows: Iterable) -> ScalingFit:
    """Least squares fit of ``log mean = log C + alpha log d + beta log T``.

    ``rows`` holds ``(d, T, mean)`` triples, one per grid cell.
    """
    arr = np.asarray([tuple(r) for r in rows], dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != 3:
        raise ValueError("rows must be (d, T, mean) triples")
    d, T, m = arr.T
    if len(np.unique(d)) < 3 or len(np.unique(T)) < 3:
        raise ValueError("need at least 3 distinct d and 3 distinct T values")
    if np.any(m <= 0):
        raise ValueError("all means must be positive to fit in log space")
    A = np.column_stack([np.ones_like(d), np.log(d), np.log(T)])
    y = np.log(m)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(
        alpha=float(coef[1]),
        beta=float(coef[2]),
        logC=float(coef[0]),
        r2=min(1.0, max(0.0, r2)),
        cells=int(arr.shape[0]),
    )


def kl_gaussian(m1: float, v1: float, m2: float, v2: float) -> float:
    """KL(N(m1, v1) || N(m2, v2)) for variances v1, v2."""
    if v1 <= 0 or v2 <= 0:
        raise ValueError("variances must be positive")
    return 0.5 * (v1 / v2 + (m2 - m1) ** 2 / v2 - 1.0 + math.log(v2 / v1))


def pinsker_tv_bound(kl: float) -> float:
    """Upper bound ``sqrt(2 kl)`` on ``int |p - q|``."""
    if kl < 0:
        raise ValueError("KL divergence is nonnegative")
    return math.sqrt(2.0 * kl)


def lemma_dw_check(w: float, d: int) -> bool:
    """Whether ``1 / (w^2 + 1/d) <= d (1 - |w|) + 1`` holds at (w, d)."""
    if not -1.0 <= w <= 1.0 or d < 1 or int(d) != d:
        raise ValueError("need |w| <= 1 and integer d >= 1")
    return 1.0 / (w * w + 1.0 / d) <= d * (1.0 - abs(w)) + 1.0 + 1e-12


def lemma_dw_sweep(max_d: int = 64, step: float = 1e-3) -> int:
    """Number of grid points where the inequality fails (vectorized)."""
    n = int(round(2.0 / step))
    w = np.linspace(-1.0, 1.0, n + 1)
    fails = 0
    for d in range(1, max_d + 1):
        lhs = 1.0 / (w * w + 1.0 / d)
        rhs = d * (1.0 - np.abs(w)) + 1.0
        fails += int(np.sum(lhs > rhs + 1e-12))
    return fails


#: kinds whose lower bound concerns the error of one returned point
ERROR_BOUNDS = {"shifted_ball", "simplex"}


def lower_bound_reference(kind: str, D: int, T: int, as_regret: bool = False) -> float:
    """The explicit lower bound proved for each construction.

    Shifted ball and simplex bounds are on the error; pass ``as_regret`` to
    get the matching regret bound ``T * error``.  Cylinder and hypercube
    bounds are already on the regret.  The shifted-ball constant 0.005 is
    the one derived in that construction's proof; the theorem leaves it
    unnamed.
    """
    key = _construction_key(kind)
    if D < 2 or T < 1:
        raise ValueError("need D >= 2 and T >= 1")
    d = D - 1
    if key == "shifted_ball":
        value = 0.005 * min(1.0, d / math.sqrt(T))
    elif key == "simplex":
        value = min(1.0, math.sqrt(D / T)) / 16.0
    elif key == "cylinder":
        if T < d**4 / 16:
            raise ValueError(f"cylinder bound needs T >= (D-1)^4/16 = {d**4 / 16}")
        return d * math.sqrt(T) / 128.0
    else:
        if T < d**4 / 4:
            raise ValueError(f"hypercube bound needs T >= (D-1)^4/4 = {d**4 / 4}")
        return d * math.sqrt(T) / 16.0
    return value * T if as_regret else value
