"""Projected gradient ascent for train-time inner maximizations.

Never used for certificates: the returned value is a feasible lower
estimate of the maximum whose witness drives outer gradients.
"""

from __future__ import annotations

import numpy as np

from ..bounds import Interval
from .result import HEURISTIC_LOWER, InnerResult


def heuristic_inner_max(
    f,
    box: Interval,
    seed: int,
    grad=None,
    steps: int = 500,
    step_size: float = 0.01,
    restarts: int = 5,
    extra_inits=None,
) -> InnerResult:
    """Multi-start projected gradient ascent over a box.

    ``f`` maps a point to a scalar; ``grad`` is its gradient or None for
    central finite differences.  Starts at the box center, any supplied
    warm-start points, and uniform random restarts; the best feasible
    iterate ever evaluated is returned.
    """
    lo, hi = box.lo, box.hi
    rng = np.random.default_rng(seed)

    if grad is None:
        h = 1e-6

        def grad(x, _f=f):
            g = np.empty_like(x)
            for i in range(x.shape[0]):
                e = np.zeros_like(x)
                e[i] = h
                g[i] = (_f(x + e) - _f(x - e)) / (2.0 * h)
            return g

    starts = [0.5 * (lo + hi)]
    for init in extra_inits or ():
        starts.append(np.clip(np.asarray(init, dtype=float), lo, hi))
    while len(starts) < restarts:
        starts.append(lo + rng.random(lo.shape) * (hi - lo))

    best_x = starts[0]
    best_f = f(best_x)
    for x0 in starts:
        x = x0.copy()
        fx = f(x)
        if fx > best_f:
            best_f, best_x = fx, x.copy()
        for _ in range(steps):
            x = np.clip(x + step_size * grad(x), lo, hi)
            fx = f(x)
            if fx > best_f:
                best_f, best_x = fx, x.copy()
    return InnerResult(value=best_f, mode=HEURISTIC_LOWER, witness=best_x)
