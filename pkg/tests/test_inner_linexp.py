import math

import numpy as np
import pytest

from funclag import Interval, LinExp, Linear
from funclag.inner import (
    inner_linear,
    inner_linexp_input,
    inner_linexp_transition,
    transition_value_with_duals,
)

from conftest import det_layer


def random_transition_instance(rng, n=2, m=2):
    layer = det_layer(rng.standard_normal((m, n)), 0.3 * rng.standard_normal(m), "relu")
    lam1 = LinExp(
        alpha=0.5 * rng.standard_normal(n),
        gamma=0.5 * rng.standard_normal(n),
        kappa=float(0.5 * rng.standard_normal()),
    )
    lam2 = Linear(theta=rng.standard_normal(m))
    lo = rng.standard_normal(n)
    box = Interval(lo, lo + 2.0 * rng.random(n))
    return layer, lam1, lam2, box


def transition_grid_max(layer, lam1, lam2, box, res=600):
    xs = np.linspace(box.lo[0], box.hi[0], res)
    ys = np.linspace(box.lo[1], box.hi[1], res)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    w = layer.weights.values
    b = layer.bias.values
    out = np.maximum(P, 0.0) @ w.T + b
    vals = out @ lam2.theta - P @ lam1.alpha - np.exp(P @ lam1.gamma + lam1.kappa)
    return float(vals.max())


class TestInputBound:
    def test_mgf_term_off(self):
        layer = det_layer([[1.0, 0.0], [0.0, 2.0]], [0.5, -0.5])
        lam1 = LinExp(alpha=np.array([1.0, 1.0]), gamma=np.zeros(2), kappa=0.0)
        center = np.array([0.25, 0.5])
        res = inner_linexp_input(layer, center, sigma=0.3, lam1=lam1)
        nominal = layer.weights.values @ center + layer.bias.values
        assert res.value == pytest.approx(lam1.alpha @ nominal + 1.0, rel=1e-12)

    def test_degenerate_noise_is_plain_evaluation(self):
        rng = np.random.default_rng(2)
        layer = det_layer(rng.standard_normal((3, 2)), rng.standard_normal(3))
        lam1 = LinExp(
            alpha=rng.standard_normal(3), gamma=0.4 * rng.standard_normal(3), kappa=-0.3
        )
        center = rng.random(2)
        res = inner_linexp_input(layer, center, sigma=0.0, lam1=lam1)
        nominal = layer.weights.values @ center + layer.bias.values
        direct = lam1.evaluate(nominal)
        assert res.value == pytest.approx(direct, rel=1e-12)

    def test_dominates_truncated_gaussian_monte_carlo(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            d, n1 = 3, 2
            layer = det_layer(rng.standard_normal((n1, d)), 0.2 * rng.standard_normal(n1))
            lam1 = LinExp(
                alpha=rng.standard_normal(n1),
                gamma=rng.standard_normal(n1),
                kappa=float(0.3 * rng.standard_normal()),
            )
            center = rng.random(d)
            sigma, eps = 0.1, 0.05
            res = inner_linexp_input(layer, center, sigma, lam1)
            scale = min(sigma, eps)
            noise = rng.normal(0.0, scale, size=(100_000, d))
            bad = np.abs(noise) > eps
            while bad.any():
                noise = np.where(bad, rng.normal(0.0, scale, size=noise.shape), noise)
                bad = np.abs(noise) > eps
            z = (center + noise) @ layer.weights.values.T + layer.bias.values
            vals = z @ lam1.alpha + np.exp(z @ lam1.gamma + lam1.kappa)
            est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(len(vals))
            assert res.value >= est - 4.0 * se

    def test_requires_deterministic_layer(self, gaussian_layer):
        lam1 = LinExp(alpha=np.zeros(1), gamma=np.zeros(1), kappa=0.0)
        with pytest.raises(ValueError):
            inner_linexp_input(gaussian_layer, np.array([0.5]), 0.1, lam1)


class TestTransitionBound:
    def test_zeta_zero_limit_term(self):
        # the zeta-entropy term evaluates to 0 at zeta = 0
        layer = det_layer([[1.0]], [0.0], "relu")
        lam1 = LinExp(alpha=np.array([0.3]), gamma=np.array([0.2]), kappa=-1.0)
        box = Interval(np.array([-1.0]), np.array([1.0]))
        value = transition_value_with_duals(lam1, Linear(theta=np.array([1.0])), layer, box,
                                            eta=np.zeros(1), zeta=0.0)
        assert math.isfinite(value)

    def test_exp_suppressed_matches_inner_linear(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            layer, lam1, lam2, box = random_transition_instance(rng, n=3, m=2)
            suppressed = LinExp(alpha=lam1.alpha, gamma=np.zeros(3), kappa=-1000.0)
            res = inner_linexp_transition(suppressed, lam2, layer, box)
            ref = inner_linear(layer, Linear(theta=lam1.alpha), lam2, box)
            assert abs(res.value - ref.value) <= 1e-3

    def test_dominates_grid_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(15):
            layer, lam1, lam2, box = random_transition_instance(rng)
            res = inner_linexp_transition(lam1, lam2, layer, box)
            assert res.value >= transition_grid_max(layer, lam1, lam2, box) - 1e-9

    def test_any_dual_point_is_an_upper_bound(self):
        rng = np.random.default_rng(12)
        for trial in range(10):
            layer, lam1, lam2, box = random_transition_instance(rng)
            res = inner_linexp_transition(lam1, lam2, layer, box)
            oracle = transition_grid_max(layer, lam1, lam2, box)
            eta = res.internal_duals["eta"]
            zeta = res.internal_duals["zeta"]
            for _ in range(10):
                eta_p = eta + 0.5 * rng.standard_normal(eta.shape)
                zeta_p = max(zeta + 0.5 * rng.standard_normal(), 0.0)
                perturbed = transition_value_with_duals(lam1, lam2, layer, box, eta_p, zeta_p)
                assert perturbed >= oracle - 1e-9
                assert perturbed >= res.value - 1e-9
