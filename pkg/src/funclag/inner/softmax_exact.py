"""Exact final-layer solve for softmax objectives with linear multipliers.

Maximizes softmax_m(x) + lin . x over a box by enumerating, for every
coordinate, whether it sits at its lower bound, its upper bound, or in
the interior.  For each of the 3^n assignments the interior coordinates
must form a stationary point of the restricted function, and those
stationary points have closed forms with at most two solutions: one
family when the target coordinate m is free (the quadratic in its own
softmax share) and one when m is fixed (all shares proportional to the
linear coefficients).  The global maximum is the best candidate; every
box corner is itself a candidate, so the result can never fall below a
corner evaluation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..bounds import Interval
from ..model import softmax
from ..multipliers import Multiplier, linear_coeffs
from .result import EXACT, InnerResult

_LOWER, _UPPER, _INTERIOR = 0, 1, 2
_SUM_ONE_TOL = 1e-9
_BOX_TOL = 1e-9


class DimensionError(Exception):
    """The 3^n enumeration was refused because n exceeds the cap."""


def box_softmax_max(m: int, box: Interval) -> float:
    """Box maximum of softmax_m: own logit high, every other logit low."""
    x = box.lo.copy()
    x[m] = box.hi[m]
    return float(softmax(x)[m])


def box_softmax_min(m: int, box: Interval) -> float:
    """Box minimum of softmax_m: own logit low, every other logit high."""
    x = box.hi.copy()
    x[m] = box.lo[m]
    return float(softmax(x)[m])


def stationary_points_case_a(lam: np.ndarray, i: int, c: float) -> list[np.ndarray]:
    """Stationary points of exp(x_i) / (sum_j exp(x_j) + C) + lam . x.

    Returns full candidate vectors over the free coordinates.  The list
    is empty unless lam_i lies in [-1/4, 0] and lam_j >= 0 elsewhere;
    branches whose shares are non-positive, whose denominator vanishes,
    or whose shares cannot satisfy the C = 0 normalization are dropped.
    """
    lam = np.asarray(lam, dtype=float)
    if not (-0.25 <= lam[i] <= 0.0):
        return []
    others = np.delete(lam, i)
    if np.any(others < 0.0):
        return []
    sq = math.sqrt(max(1.0 + 4.0 * lam[i], 0.0))
    points: list[np.ndarray] = []
    for denom in {1.0 + sq, 1.0 - sq}:
        if denom == 0.0:
            continue
        shares = 2.0 * lam / denom
        shares[i] = denom / 2.0
        if np.any(shares <= 0.0):
            continue
        total = float(shares.sum())
        if c > 0.0:
            if total >= 1.0:
                continue
            x = np.log(shares) + math.log(c / (1.0 - total))
        else:
            if abs(total - 1.0) > _SUM_ONE_TOL:
                continue
            x = np.log(shares)
        points.append(x)
    return points


def stationary_points_case_b(lam: np.ndarray, c: float, d: float) -> list[np.ndarray]:
    """Stationary points of D / (sum_j exp(x_j) + C) + lam . x.

    Empty unless every lam_j is positive and sum(lam) <= D / (4C);
    otherwise both roots of the denominator quadratic are returned.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0.0):
        return []
    total = float(lam.sum())
    if total > d / (4.0 * c):
        return []
    disc = math.sqrt(max(1.0 - 4.0 * c * total / d, 0.0))
    points = []
    for t in {d * (1.0 + disc) / (2.0 * total), d * (1.0 - disc) / (2.0 * total)}:
        if t <= 0.0:
            continue
        points.append(np.log(lam / d) + 2.0 * math.log(t))
    return points


def final_softmax_exact(
    m: int,
    lam_k: Multiplier,
    box: Interval,
    cap: int = 12,
) -> InnerResult:
    """Exact max of softmax_m(x) - lam_k(x) over the box (3^n enumeration).

    Ties between equally-good candidates keep the first one in the fixed
    enumeration order (all-lower first), so the witness is reproducible.
    """
    n = box.lo.shape[0]
    if n > cap:
        raise DimensionError(f"dimension {n} exceeds the 3^n enumeration cap {cap}")
    lin = -linear_coeffs(lam_k, n)

    def objective(x: np.ndarray) -> float:
        return float(softmax(x)[m] + lin @ x)

    lo, hi = box.lo, box.hi
    best_x = lo.copy()
    best_f = objective(best_x)

    for assignment in itertools.product((_LOWER, _UPPER, _INTERIOR), repeat=n):
        free = [j for j in range(n) if assignment[j] == _INTERIOR]
        x = np.where(np.asarray(assignment) == _UPPER, hi, lo).astype(float)
        if not free:
            value = objective(x)
            if value > best_f:
                best_f, best_x = value, x.copy()
            continue
        fixed = [j for j in range(n) if assignment[j] != _INTERIOR]
        c = float(np.exp(x[fixed]).sum()) if fixed else 0.0
        if m in free:
            candidates = stationary_points_case_a(lin[free], free.index(m), c)
        else:
            candidates = stationary_points_case_b(lin[free], c, float(np.exp(x[m])))
        for xs in candidates:
            if np.any(xs < lo[free] - _BOX_TOL) or np.any(xs > hi[free] + _BOX_TOL):
                continue
            trial = x.copy()
            trial[free] = np.clip(xs, lo[free], hi[free])
            value = objective(trial)
            if value > best_f:
                best_f, best_x = value, trial
    return InnerResult(value=best_f, mode=EXACT, witness=best_x)
