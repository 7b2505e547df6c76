"""Sound bounds on quadratic-multiplier layer problems.

The layer problem with quadratic multipliers is an indefinite quadratic
in (x, y) where y stands for relu(x).  The relu graph is encoded by
y >= 0, y >= x, y * y = y * x; dualizing those constraints with
penalties (zeta free for the equality, zeta_plus/zeta_minus >= 0) leaves
a box-constrained indefinite quadratic.  After rescaling the box to
[-1, 1]^d, its maximum is bounded by the diagonal-shift value

    f(0) + 0.5 * sum max(kappa + max(lambda_max(M - diag(kappa)), 0), 0)

which is dual-feasible for every shift vector kappa, so subgradient
steps on kappa can only tighten, never invalidate, the bound.  The
lambda_max used in emitted values is a certified upper bound: a power
iteration estimate escalated until a Cholesky factorization proves it,
with the Gershgorin row bound as the always-valid fallback.
"""

from __future__ import annotations

import math

import numpy as np

from ..bounds import Interval
from ..model import CanonicalLayer
from ..multipliers import Multiplier, as_quadratic, expected_quadratic_coeffs
from .linear import inner_linear
from .result import UPPER_BOUND, InnerResult


class NumericalError(Exception):
    """A certified eigenvalue bound could not be produced."""


def gershgorin_upper(a: np.ndarray) -> float:
    """Row-disc upper bound on the largest eigenvalue of a symmetric matrix."""
    diag = np.diag(a)
    off = np.sum(np.abs(a), axis=1) - np.abs(diag)
    return float(np.max(diag + off))


def gershgorin_lower(a: np.ndarray) -> float:
    diag = np.diag(a)
    off = np.sum(np.abs(a), axis=1) - np.abs(diag)
    return float(np.min(diag - off))


def power_iteration(
    a: np.ndarray, iters: int = 60, tol: float = 1e-7
) -> tuple[float, np.ndarray, float]:
    """Estimate the algebraically largest eigenvalue of a symmetric matrix.

    The matrix is shifted by its Gershgorin lower bound so the target
    eigenvalue dominates in magnitude.  Returns (rayleigh quotient,
    unit eigenvector estimate, residual norm); the rayleigh quotient is
    always a lower bound on lambda_max.  For a unit vector the residual
    is sqrt(|Av|^2 - rayleigh^2), so each step costs one matvec.
    """
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0]), np.ones(1), 0.0
    shift = gershgorin_lower(a)
    shifted = a - shift * np.eye(n)
    v = np.ones(n) + 1e-3 * np.arange(n)
    v /= math.sqrt(float(v @ v))
    residual = math.inf
    for _ in range(max(iters, 30)):
        w = shifted @ v
        rayleigh = float(v @ w)
        residual = math.sqrt(max(float(w @ w) - rayleigh * rayleigh, 0.0))
        if residual <= tol * max(1.0, abs(rayleigh)):
            break
        norm = math.sqrt(float(w @ w))
        if norm == 0.0:
            # v is in the kernel of the shifted matrix
            break
        v = w / norm
    w = a @ v
    rayleigh = float(v @ w)
    residual = math.sqrt(max(float(w @ w) - rayleigh * rayleigh, 0.0))
    return rayleigh, v, residual


def certified_lambda_max(a: np.ndarray, tol: float = 1e-7) -> float:
    """Upper bound on lambda_max, certified by a PSD factorization check.

    Starting from the power-iteration estimate plus its residual, the
    candidate is escalated until mu * I - A admits a Cholesky
    factorization; the Gershgorin disc bound caps the escalation and is
    returned when nothing smaller certifies.
    """
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    n = a.shape[0]
    gersh = gershgorin_upper(a)
    rayleigh, _, residual = power_iteration(a, tol=tol)
    scale = max(1.0, abs(rayleigh), float(np.max(np.abs(a))))
    margin = 1e-11 * scale
    candidate = rayleigh + residual + margin
    eye = np.eye(n)
    while candidate < gersh:
        try:
            np.linalg.cholesky(candidate * eye - a + margin * eye)
            return float(candidate + margin)
        except np.linalg.LinAlgError:
            candidate = rayleigh + 4.0 * (candidate - rayleigh)
    return gersh


def shifted_diagonal_bound(mf: np.ndarray, kappa: np.ndarray) -> float:
    """Certified value 0.5 * sum max(kappa + max(lmax, 0), 0) at this kappa."""
    lmax = certified_lambda_max(mf - np.diag(kappa))
    s = max(lmax, 0.0)
    return 0.5 * float(np.maximum(kappa + s, 0.0).sum())


def qp_box_bound(
    h: np.ndarray,
    g: np.ndarray,
    c0: float,
    kappa: np.ndarray | None = None,
    steps: int = 120,
) -> tuple[float, np.ndarray]:
    """Bound max of c0 + g.t + 0.5 t'Ht over t in [-1, 1]^d.

    Runs subgradient descent on the shift vector kappa, tracking the
    best iterate by a cheap power-iteration estimate; the returned value
    is the *certified* bound re-evaluated at that iterate (and at the
    start point), so it is sound regardless of the tracking accuracy.
    """
    d = g.shape[0]
    mf = _pack_mf(h, g)
    kappa = np.zeros(d + 1) if kappa is None else np.asarray(kappa, dtype=float).copy()

    def estimate(kap):
        lmax, v, residual = power_iteration(mf - np.diag(kap))
        s = max(lmax + residual, 0.0)
        return 0.5 * float(np.maximum(kap + s, 0.0).sum()), lmax, v

    best_est, _, _ = estimate(kappa)
    best_kappa = kappa.copy()
    scale = max(1.0, float(np.max(np.abs(mf))))
    for t in range(steps):
        est, lmax, v = estimate(kappa)
        if est < best_est:
            best_est = est
            best_kappa = kappa.copy()
        s = max(lmax, 0.0)
        active = (kappa + s) > 0.0
        grad = 0.5 * active.astype(float)
        if lmax > 0.0:
            grad -= 0.5 * float(active.sum()) * v**2
        lr = 0.5 * scale / (1.0 + 0.15 * t)
        kappa = kappa - lr * grad
    best_val = c0 + shifted_diagonal_bound(mf, best_kappa)
    return float(best_val), best_kappa


def _reduce_and_rescale(h, g, c0, lo, hi):
    """Substitute degenerate coordinates and map the rest onto [-1, 1]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    fixed = hi - lo <= 0.0
    if np.any(fixed):
        vals = 0.5 * (lo + hi)
        keep = ~fixed
        xf = vals[fixed]
        c0 = c0 + float(g[fixed] @ xf) + 0.5 * float(xf @ h[np.ix_(fixed, fixed)] @ xf)
        g = g[keep] + h[np.ix_(keep, fixed)] @ xf
        h = h[np.ix_(keep, keep)]
        lo, hi = lo[keep], hi[keep]
    if g.shape[0] == 0:
        return None, None, c0
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    c0 = c0 + float(g @ center) + 0.5 * float(center @ h @ center)
    g_scaled = half * (g + h @ center)
    h_scaled = h * np.outer(half, half)
    return h_scaled, g_scaled, c0


def _assemble_relu_qp(layer, q_k, q_k_lin, q_n, q_n_lin, zeta, zeta_plus, zeta_minus):
    """Build (H, g, c0) in variables (x, y) with the relu constraints dualized."""
    c0, m, big_m = expected_quadratic_coeffs(layer, q_n, q_n_lin)
    n = layer.in_dim
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = -q_k
    h[n:, n:] = big_m - 2.0 * np.diag(zeta)
    h[:n, n:] = np.diag(zeta)
    h[n:, :n] = np.diag(zeta)
    g = np.concatenate([-q_k_lin - zeta_plus, m + zeta_plus + zeta_minus])
    return h, g, c0


def _qp_data(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus):
    q_k, q_k_lin = as_quadratic(lam_k, layer.in_dim)
    q_n, q_n_lin = as_quadratic(lam_next, layer.out_dim)
    if layer.activation == "identity":
        c0, m, big_m = expected_quadratic_coeffs(layer, q_n, q_n_lin)
        h = big_m - q_k
        g = m - q_k_lin
        lo, hi = box.lo, box.hi
    else:
        h, g, c0 = _assemble_relu_qp(
            layer, q_k, q_k_lin, q_n, q_n_lin, zeta, zeta_plus, zeta_minus
        )
        lo = np.concatenate([box.lo, np.maximum(box.lo, 0.0)])
        hi = np.concatenate([box.hi, np.maximum(box.hi, 0.0)])
    return _reduce_and_rescale(h, g, c0, lo, hi)


def quadratic_bound_with_duals(
    layer: CanonicalLayer,
    lam_k: Multiplier,
    lam_next: Multiplier,
    box: Interval,
    duals: dict,
) -> float:
    """Certified bound at the given internal duals (sign-clamped as needed)."""
    n = layer.in_dim
    zeta = np.asarray(duals.get("zeta", np.zeros(n)), dtype=float)
    zeta_plus = np.maximum(np.asarray(duals.get("zeta_plus", np.zeros(n)), dtype=float), 0.0)
    zeta_minus = np.maximum(np.asarray(duals.get("zeta_minus", np.zeros(n)), dtype=float), 0.0)
    h, g, c0 = _qp_data(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus)
    if h is None:
        return float(c0)
    kappa = duals.get("kappa")
    if kappa is None or np.asarray(kappa).shape != (g.shape[0] + 1,):
        kappa = np.zeros(g.shape[0] + 1)
    return float(c0 + shifted_diagonal_bound(_pack_mf(h, g), np.asarray(kappa, dtype=float)))


def _pack_mf(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    d = g.shape[0]
    mf = np.zeros((d + 1, d + 1))
    mf[0, 1:] = g
    mf[1:, 0] = g
    mf[1:, 1:] = h
    return mf


def inner_quadratic_bound(
    layer: CanonicalLayer,
    lam_k: Multiplier,
    lam_next: Multiplier,
    box: Interval,
    duals: dict | None = None,
    kappa_steps: int = 120,
    penalty_steps: int = 40,
) -> InnerResult:
    """Sound bound on the quadratic-multiplier layer problem.

    When both quadratic blocks vanish the problem is linear and the exact
    per-coordinate closed form is returned instead.  Otherwise the relu
    penalties (zeta, zeta_plus, zeta_minus) and the shift vector kappa
    are jointly improved by subgradient steps, warm-started from
    ``duals``; every iterate evaluated is a valid bound and the best one
    is returned together with its duals.
    """
    n = layer.in_dim
    q_k, q_k_lin = as_quadratic(lam_k, n)
    q_n, q_n_lin = as_quadratic(lam_next, layer.out_dim)
    if not q_k.any() and not q_n.any():
        from ..multipliers import Linear

        result = inner_linear(layer, Linear(theta=q_k_lin), Linear(theta=q_n_lin), box)
        result.internal_duals = dict(duals or {})
        return result

    duals = dict(duals or {})
    zeta = np.asarray(duals.get("zeta", np.zeros(n)), dtype=float).copy()
    zeta_plus = np.asarray(duals.get("zeta_plus", np.zeros(n)), dtype=float).copy()
    zeta_minus = np.asarray(duals.get("zeta_minus", np.zeros(n)), dtype=float).copy()
    kappa = duals.get("kappa")

    def bound_at(z, zp, zm, kap, steps):
        h, g, c0 = _qp_data(layer, lam_k, lam_next, box, z, np.maximum(zp, 0), np.maximum(zm, 0))
        if h is None:
            return float(c0), np.zeros(1)
        if kap is None or np.asarray(kap).shape != (g.shape[0] + 1,):
            kap = None
        val, kap = qp_box_bound(h, g, c0, kappa=kap, steps=steps)
        return val, kap

    if layer.activation == "identity":
        value, kappa = bound_at(zeta, zeta_plus, zeta_minus, kappa, kappa_steps)
        return InnerResult(
            value=value,
            mode=UPPER_BOUND,
            internal_duals={"zeta": zeta, "zeta_plus": zeta_plus, "zeta_minus": zeta_minus, "kappa": kappa},
        )

    # penalty search is tracked by the cheap Danskin surrogate; only the
    # warm start and the winning iterate get a certified evaluation
    params = np.concatenate([zeta, zeta_plus, zeta_minus])
    best_params = params.copy()
    best_est = math.inf
    scale = max(1.0, float(np.max(np.abs(q_k))) if q_k.size else 1.0, float(np.max(np.abs(q_n))) if q_n.size else 1.0)
    for t in range(penalty_steps):
        est, _, _, _, kappa = _danskin_surrogate(
            layer, lam_k, lam_next, box,
            params[:n], np.maximum(params[n : 2 * n], 0.0), np.maximum(params[2 * n :], 0.0),
            kappa,
        )
        if est < best_est:
            best_est = est
            best_params = params.copy()
        grad = _penalty_subgradient(layer, lam_k, lam_next, box, params, kappa)
        lr = 0.3 * scale / (1.0 + 0.2 * t)
        params = params - lr * grad
        params[n:] = np.maximum(params[n:], 0.0)
        if (t + 1) % 8 == 0:
            _, kappa = bound_at(
                params[:n], params[n : 2 * n], params[2 * n :], kappa, max(8, kappa_steps // 8)
            )

    candidates = [(zeta, zeta_plus, zeta_minus)]
    z, zp, zm = best_params[:n], best_params[n : 2 * n], best_params[2 * n :]
    candidates.append((z, zp, zm))
    best_val = math.inf
    best = None
    for z, zp, zm in candidates:
        val, kap = bound_at(z, zp, zm, kappa, kappa_steps)
        if val < best_val:
            best_val = val
            best = (z.copy(), np.maximum(zp, 0.0), np.maximum(zm, 0.0), kap)
    zeta, zeta_plus, zeta_minus, kappa = best
    return InnerResult(
        value=best_val,
        mode=UPPER_BOUND,
        internal_duals={
            "zeta": zeta,
            "zeta_plus": zeta_plus,
            "zeta_minus": zeta_minus,
            "kappa": kappa,
        },
    )


def _danskin_surrogate(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus, kappa):
    """Danskin pieces of the bound at fixed kappa: value, eigvector, active set."""
    h, g, c0 = _qp_data(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus)
    if h is None:
        return c0, None, None, 0.0, np.zeros(1)
    mf = _pack_mf(h, g)
    if kappa is None or np.asarray(kappa).shape != (g.shape[0] + 1,):
        kappa = np.zeros(g.shape[0] + 1)
    lmax, v, _ = power_iteration(mf - np.diag(kappa))
    s = max(lmax, 0.0)
    active = (kappa + s) > 0.0
    value = c0 + 0.5 * float(np.maximum(kappa + s, 0.0).sum())
    return value, v, active, lmax, kappa


def _surrogate_value(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus, v, active, positive, kappa):
    """Affine-in-parameters surrogate that matches the bound at the base point."""
    h, g, c0 = _qp_data(layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus)
    if h is None:
        return c0
    mf = _pack_mf(h, g)
    val = c0 + 0.5 * float(kappa[active].sum())
    if positive:
        val += 0.5 * float(active.sum()) * float(v @ (mf - np.diag(kappa)) @ v)
    return val


def quadratic_param_grads(
    layer: CanonicalLayer,
    lam_k: Multiplier,
    lam_next: Multiplier,
    box: Interval,
    duals: dict,
) -> tuple[float, dict, dict]:
    """Bound value plus Danskin gradients in both multipliers' parameters.

    The bound at frozen internal duals is affine in each multiplier
    parameter once the top eigvector and active set are held fixed, so
    unit-bump differences of the surrogate recover the exact gradient.
    """
    from ..multipliers import unit_param_bumps, zero_param_grads

    n = layer.in_dim
    zeta = np.asarray(duals.get("zeta", np.zeros(n)), dtype=float)
    zeta_plus = np.maximum(np.asarray(duals.get("zeta_plus", np.zeros(n)), dtype=float), 0.0)
    zeta_minus = np.maximum(np.asarray(duals.get("zeta_minus", np.zeros(n)), dtype=float), 0.0)
    value, v, active, lmax, kappa = _danskin_surrogate(
        layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus, duals.get("kappa")
    )
    grads_k = zero_param_grads(lam_k)
    grads_next = zero_param_grads(lam_next)
    if v is None:
        return float(value), grads_k, grads_next
    positive = lmax > 0.0
    base = _surrogate_value(
        layer, lam_k, lam_next, box, zeta, zeta_plus, zeta_minus, v, active, positive, kappa
    )
    for name, idx, bumped in unit_param_bumps(lam_k):
        diff = (
            _surrogate_value(
                layer, bumped, lam_next, box, zeta, zeta_plus, zeta_minus, v, active, positive, kappa
            )
            - base
        )
        if idx == ():
            grads_k[name] = np.asarray(diff)
        else:
            grads_k[name][idx] = diff
            if len(idx) == 2 and idx[0] != idx[1]:
                grads_k[name][idx[::-1]] = diff
    for name, idx, bumped in unit_param_bumps(lam_next):
        diff = (
            _surrogate_value(
                layer, lam_k, bumped, box, zeta, zeta_plus, zeta_minus, v, active, positive, kappa
            )
            - base
        )
        if idx == ():
            grads_next[name] = np.asarray(diff)
        else:
            grads_next[name][idx] = diff
            if len(idx) == 2 and idx[0] != idx[1]:
                grads_next[name][idx[::-1]] = diff
    return float(value), grads_k, grads_next


def _penalty_subgradient(layer, lam_k, lam_next, box, params, kappa):
    """Exact gradient of the Danskin surrogate in the penalty parameters.

    The surrogate is affine in (zeta, zeta_plus, zeta_minus) once the top
    eigvector and active set are frozen, so unit-step differences recover
    its gradient exactly.
    """
    n = layer.in_dim
    z, zp, zm = params[:n], params[n : 2 * n], params[2 * n :]
    value, v, active, lmax, kappa = _danskin_surrogate(layer, lam_k, lam_next, box, z, zp, zm, kappa)
    if v is None:
        return np.zeros(3 * n)
    positive = lmax > 0.0
    base = _surrogate_value(layer, lam_k, lam_next, box, z, zp, zm, v, active, positive, kappa)
    grad = np.zeros(3 * n)
    for i in range(3 * n):
        bumped = params.copy()
        bumped[i] += 1.0
        bz, bzp, bzm = bumped[:n], bumped[n : 2 * n], bumped[2 * n :]
        grad[i] = (
            _surrogate_value(layer, lam_k, lam_next, box, bz, bzp, bzm, v, active, positive, kappa)
            - base
        )
    return grad
