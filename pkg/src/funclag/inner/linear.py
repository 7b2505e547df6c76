"""Closed-form inner maximizations for linear multipliers.

With linear multipliers only first weight moments enter, so the layer
problem decomposes into independent scalar problems

    max_{z in [l, u]}  a * s(z) - b * z

whose maximum sits at an interval end point or, for relu, at the kink.
These solves are exact for deterministic and stochastic layers alike.
"""

from __future__ import annotations

import numpy as np

from ..bounds import Interval
from ..model import CanonicalLayer, weight_mean
from ..multipliers import Multiplier, linear_coeffs
from .result import EXACT, InnerResult


def scalar_activation_linear_max(
    a: float, b: float, lo: float, hi: float, activation: str
) -> tuple[float, float]:
    """Exact max of a * s(z) - b * z over [lo, hi].

    Candidates are the end points plus, for relu, the kink at zero when
    it lies inside the interval.  Ties resolve to the smallest z.
    """
    if activation == "relu":
        candidates = [lo]
        if lo < 0.0 < hi:
            candidates.append(0.0)
        candidates.append(hi)

        def value(z: float) -> float:
            return a * max(z, 0.0) - b * z

    elif activation == "identity":
        candidates = [lo, hi]

        def value(z: float) -> float:
            return a * z - b * z

    else:
        raise ValueError(f"unknown activation {activation!r}")

    best_z = candidates[0]
    best_v = value(best_z)
    for z in candidates[1:]:
        v = value(z)
        if v > best_v:
            best_v, best_z = v, z
    return best_v, best_z


def inner_linear(
    layer: CanonicalLayer,
    lam_k: Multiplier,
    lam_next: Multiplier,
    box: Interval,
) -> InnerResult:
    """Exact solve of max_x E[lam_next(W s(x) + b)] - lam_k(x) over the box."""
    theta_k = linear_coeffs(lam_k, layer.in_dim)
    theta_next = linear_coeffs(lam_next, layer.out_dim)
    w_mean = weight_mean(layer.weights)
    b_mean = weight_mean(layer.bias)
    a = w_mean.T @ theta_next
    total = float(theta_next @ b_mean)
    witness = np.empty(layer.in_dim)
    for i in range(layer.in_dim):
        v, z = scalar_activation_linear_max(
            float(a[i]), float(theta_k[i]), float(box.lo[i]), float(box.hi[i]), layer.activation
        )
        total += v
        witness[i] = z
    return InnerResult(value=total, mode=EXACT, witness=witness)


def final_linear(c, lam_k: Multiplier, box: Interval) -> InnerResult:
    """Exact box maximum of (c - theta_K) . x for a linear objective."""
    c = np.asarray(c, dtype=float)
    d = c - linear_coeffs(lam_k, c.shape[0])
    at_lo = d * box.lo
    at_hi = d * box.hi
    witness = np.where(at_hi > at_lo, box.hi, box.lo)
    value = float(np.maximum(at_lo, at_hi).sum())
    return InnerResult(value=value, mode=EXACT, witness=witness)
