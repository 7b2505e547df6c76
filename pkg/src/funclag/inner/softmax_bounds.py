"""Sound upper bounds for final-layer softmax objectives.

Both bounds partition the reachable objective range [t_1, t_N] into grid
cells and bound each cell after dualizing the softmax level constraint
with a single scalar.  Any non-negative (respectively real) value of
that scalar gives a valid cell bound, so the scalar searches below can
stop anywhere without endangering soundness; only the inner per-cell
maximizations must over-estimate, and they do so via exact closed forms
for concave coordinates plus certified one-dimensional global searches.
"""

from __future__ import annotations

import math

import numpy as np

from ..bounds import Interval
from ..multipliers import DiagQuadratic, Multiplier, linear_coeffs
from .result import UPPER_BOUND, InnerResult
from .scalaropt import concave_max_upper, expanding_bracket_min, golden_section_min, lipschitz_box_max
from .softmax_exact import box_softmax_max, box_softmax_min


def _exp(z: float) -> float:
    return math.exp(min(z, 700.0))


# --- affine multiplier, one-hot objective --------------------------------


def affine_cell_bound(
    m: int,
    lin: np.ndarray,
    box: Interval,
    t_level: float,
    nu: float,
    search_tol: float = 1e-9,
    search_evals: int = 400,
) -> float:
    """Bound max lin . x subject to t_level * sum_j exp(x_j - x_m) <= 1.

    The constraint is dualized with nu >= 0; for fixed x_m every other
    coordinate maximizes a concave scalar with a clamped log closed form,
    and the remaining one-dimensional problem in x_m is globally bounded
    by a Lipschitz branch-and-bound.  Valid for every nu >= 0.
    """
    nu = max(float(nu), 0.0)
    lo, hi = box.lo, box.hi
    n = lo.shape[0]
    others = [j for j in range(n) if j != m]
    c = nu * t_level

    def h(x_m: float) -> float:
        total = lin[m] * x_m + nu * (1.0 - t_level)
        for j in others:
            if c == 0.0:
                total += max(lin[j] * lo[j], lin[j] * hi[j])
                continue
            if lin[j] > 0.0:
                x_j = min(max(x_m + math.log(lin[j] / c), lo[j]), hi[j])
            else:
                x_j = lo[j]
            total += lin[j] * x_j - c * _exp(x_j - x_m)
        return total

    def cell_lipschitz(a: float, b: float) -> float:
        bound = abs(lin[m])
        if c > 0.0:
            bound += c * sum(_exp(hi[j] - a) for j in others)
        return bound

    upper, _ = lipschitz_box_max(
        h, float(lo[m]), float(hi[m]), cell_lipschitz, tol=search_tol, max_evals=search_evals
    )
    return upper


def final_softmax_affine_bound(
    m: int,
    lam_k: Multiplier,
    box: Interval,
    n_grid: int = 20,
    nu_tol: float = 1e-6,
) -> InnerResult:
    """Sound bound on max softmax_m(x) - lam_k(x) via level-set partition.

    The grid spans the exact box range of softmax_m; each cell's bound is
    minimized over its dual scalar nu by golden section (nu = 0 always
    included), and the certificate keeps the winning nus for re-checks.
    """
    n = box.lo.shape[0]
    lin = -linear_coeffs(lam_k, n)
    t_min = box_softmax_min(m, box)
    t_max = box_softmax_max(m, box)
    grid = np.linspace(t_min, t_max, max(int(n_grid), 2))

    nus = np.zeros(len(grid) - 1)
    best_total = -math.inf
    for i in range(len(grid) - 1):
        t_level = float(grid[i])

        def value(nu: float) -> float:
            return affine_cell_bound(m, lin, box, t_level, nu)

        v0 = value(0.0)
        lo_b, hi_b = expanding_bracket_min(value, x0=1.0, step=1.0)
        nu_star, v_star = golden_section_min(value, max(lo_b, 0.0), max(hi_b, 0.0), tol=nu_tol)
        if v0 <= v_star:
            nu_star, v_star = 0.0, v0
        nus[i] = nu_star
        best_total = max(best_total, v_star + float(grid[i + 1]))
    return InnerResult(
        value=best_total,
        mode=UPPER_BOUND,
        internal_duals={"nu": nus, "t_grid": grid},
    )


# --- diagonal quadratic multiplier, general class weights ----------------


def scalar_exp_quad_max(c: float, a: float, b: float, lo: float, hi: float) -> float:
    """Certified max of c * exp(z) - a * z - b * z^2 over [lo, hi].

    The curvature c * exp(z) - 2b changes sign at most once, so the
    interval splits into a convex part (endpoint maximum, exact) and a
    concave part (tangent-certified bisection bound).
    """
    if hi <= lo:
        return c * _exp(lo) - a * lo - b * lo * lo

    def r(z: float) -> float:
        return c * _exp(z) - a * z - b * z * z

    def dr(z: float) -> float:
        return c * _exp(z) - a - 2.0 * b * z

    def endpoints(zl: float, zh: float) -> float:
        return max(r(zl), r(zh))

    if c == 0.0:
        if b > 0.0:
            vertex = min(max(-a / (2.0 * b), lo), hi)
            return max(r(vertex), endpoints(lo, hi))
        return endpoints(lo, hi)

    ratio = 2.0 * b / c
    if ratio > 0.0:
        z_split = math.log(ratio)
        if c > 0.0:
            concave_seg = (lo, min(z_split, hi))
            convex_seg = (max(z_split, lo), hi)
        else:
            convex_seg = (lo, min(z_split, hi))
            concave_seg = (max(z_split, lo), hi)
        best = -math.inf
        if convex_seg[0] <= convex_seg[1]:
            best = max(best, endpoints(*convex_seg))
        if concave_seg[0] <= concave_seg[1]:
            upper, _ = concave_max_upper(r, dr, *concave_seg)
            best = max(best, upper)
        return best
    if c > 0.0:
        return endpoints(lo, hi)
    upper, _ = concave_max_upper(r, dr, lo, hi)
    return upper


def quadratic_cell_bound(
    mu: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    box: Interval,
    t_pair: tuple[float, float],
    theta: float,
) -> float:
    """Cell bound at a given dual scalar theta (valid for every real theta)."""
    best = -math.inf
    for t in t_pair:
        total = t
        for i in range(len(mu)):
            total += scalar_exp_quad_max(
                (mu[i] - t) * theta,
                float(alpha[i]),
                float(beta[i]),
                float(box.lo[i]),
                float(box.hi[i]),
            )
        best = max(best, total)
    return best


def final_softmax_quadratic_bound(
    mu,
    lam_k: DiagQuadratic,
    box: Interval,
    n_grid: int = 20,
    theta_tol: float = 1e-6,
) -> InnerResult:
    """Sound bound on max mu . softmax(x) - lam_k(x) for diagonal quadratics.

    Partitions [min mu, max mu] and dualizes the level constraint of each
    cell with a scalar theta minimized by golden section (theta = 0
    always included); the per-coordinate scalar problems split at the
    curvature sign change and are bounded exactly or by tangent caps.
    """
    mu = np.asarray(mu, dtype=float)
    alpha, beta = lam_k.alpha, lam_k.beta
    t_min, t_max = float(mu.min()), float(mu.max())
    grid = np.linspace(t_min, t_max, max(int(n_grid), 2))

    thetas = np.zeros(len(grid) - 1)
    best_total = -math.inf
    for j in range(len(grid) - 1):
        t_pair = (float(grid[j]), float(grid[j + 1]))

        def value(theta: float) -> float:
            return quadratic_cell_bound(mu, alpha, beta, box, t_pair, theta)

        v0 = value(0.0)
        lo_b, hi_b = expanding_bracket_min(value, x0=0.0, step=1.0)
        theta_star, v_star = golden_section_min(value, lo_b, hi_b, tol=theta_tol)
        if v0 <= v_star:
            theta_star, v_star = 0.0, v0
        thetas[j] = theta_star
        best_total = max(best_total, v_star)
    return InnerResult(
        value=best_total,
        mode=UPPER_BOUND,
        internal_duals={"theta": thetas, "t_grid": grid},
    )
