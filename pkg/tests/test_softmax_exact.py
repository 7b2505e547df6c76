import math

import numpy as np
import pytest

from funclag import Interval, Linear, Zero, softmax
from funclag.inner import (
    DimensionError,
    box_softmax_max,
    box_softmax_min,
    final_softmax_exact,
    stationary_points_case_a,
    stationary_points_case_b,
)


def objective(m, lin, x):
    return float(softmax(x)[m] + lin @ x)


def case_a_gradient(lam, i, c, x):
    """Gradient of exp(x_i)/(sum exp + C) + lam.x at x."""
    e = np.exp(x)
    denom = e.sum() + c
    zeta = e / denom
    grad = lam - zeta[i] * zeta
    grad[i] = lam[i] + zeta[i] - zeta[i] ** 2
    return grad


def case_b_gradient(lam, c, d, x):
    e = np.exp(x)
    denom = e.sum() + c
    return lam - d * e / denom**2


class TestStationaryPointsCaseA:
    def test_zero_discriminant(self):
        pts = stationary_points_case_a(np.array([-0.25, 0.1]), 0, 1.0)
        assert len(pts) == 1
        e = np.exp(pts[0])
        shares = e / (e.sum() + 1.0)
        assert shares[0] == pytest.approx(0.5, abs=1e-12)

    def test_share_split(self):
        # lam_i = -0.1875 gives shares 0.75 and 0.25 on the two branches
        pts = stationary_points_case_a(np.array([-0.1875, 0.05]), 0, 1.0)
        shares = sorted(
            float(np.exp(x[0]) / (np.exp(x).sum() + 1.0)) for x in pts
        )
        assert shares == pytest.approx([0.25, 0.75], abs=1e-12)

    def test_positive_lam_i_empty(self):
        assert stationary_points_case_a(np.array([0.1, 0.2]), 0, 1.0) == []

    def test_candidates_are_stationary(self):
        rng = np.random.default_rng(0)
        found = 0
        for _ in range(200):
            lam = np.array([-rng.random() * 0.25, rng.random(), rng.random()])
            c = float(rng.random() * 2)
            for x in stationary_points_case_a(lam, 0, c):
                found += 1
                assert np.max(np.abs(case_a_gradient(lam, 0, c, x))) <= 1e-8
        assert found > 0


class TestStationaryPointsCaseB:
    def test_boundary_case(self):
        pts = stationary_points_case_b(np.array([1.0]), 1.0, 4.0)
        assert len(pts) == 1
        np.testing.assert_allclose(pts[0], [0.0], atol=1e-12)
        # embedded arithmetic check: f(0) = 4 / (e^0 + 1) = 2 with zero slope
        assert 4.0 / (math.exp(0.0) + 1.0) == pytest.approx(2.0)
        assert case_b_gradient(np.array([1.0]), 1.0, 4.0, np.zeros(1))[0] == pytest.approx(0.0)

    def test_nonpositive_lam_empty(self):
        assert stationary_points_case_b(np.array([1.0, -0.1]), 1.0, 4.0) == []

    def test_sum_condition(self):
        # sum(lam) beyond D / (4C) leaves no stationary point
        assert stationary_points_case_b(np.array([1.1]), 1.0, 4.0) == []

    def test_candidates_are_stationary(self):
        rng = np.random.default_rng(1)
        found = 0
        for _ in range(200):
            lam = rng.random(2) * 0.2 + 0.01
            c = float(rng.random() + 0.2)
            d = float(4.0 * c * lam.sum() * (1.0 + rng.random()))
            for x in stationary_points_case_b(lam, c, d):
                found += 1
                assert np.max(np.abs(case_b_gradient(lam, c, d, x))) <= 1e-8
        assert found > 0


class TestFinalSoftmaxExact:
    def test_monotone_corner(self):
        box = Interval(np.zeros(2), np.ones(2))
        res = final_softmax_exact(0, Zero(), box)
        assert res.value == pytest.approx(math.e / (math.e + 1.0), rel=1e-12)
        np.testing.assert_allclose(res.witness, [1.0, 0.0])

    def test_box_softmax_corners(self):
        box = Interval(np.array([-1.0, 0.0, 0.3]), np.array([0.5, 2.0, 0.9]))
        assert box_softmax_max(1, box) == pytest.approx(
            math.exp(2.0) / (math.exp(2.0) + math.exp(-1.0) + math.exp(0.3)), rel=1e-12
        )
        assert box_softmax_min(1, box) == pytest.approx(
            math.exp(0.0) / (math.exp(0.0) + math.exp(0.5) + math.exp(0.9)), rel=1e-12
        )

    def test_dimension_cap(self):
        box = Interval(np.zeros(13), np.ones(13))
        with pytest.raises(DimensionError):
            final_softmax_exact(0, Zero(), box, cap=12)

    def test_matches_fine_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            lam = 0.4 * rng.standard_normal(2)
            lo = rng.standard_normal(2)
            box = Interval(lo, lo + 0.5 + 2.0 * rng.random(2))
            res = final_softmax_exact(0, Linear(theta=-lam), box)
            xs = np.linspace(box.lo[0], box.hi[0], 1000)
            ys = np.linspace(box.lo[1], box.hi[1], 1000)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            P = np.stack([X.ravel(), Y.ravel()], axis=1)
            vals = softmax(P)[:, 0] + P @ lam
            spacing = np.array([xs[1] - xs[0], ys[1] - ys[0]])
            lip = math.sqrt(((0.25 + np.abs(lam)) ** 2).sum())
            err = lip * float(np.linalg.norm(spacing)) / 2.0
            assert res.value >= vals.max() - 1e-9
            assert res.value <= vals.max() + err

    def test_interior_maximum_found(self):
        # concave-ish instance whose maximum is strictly inside the box
        lam = np.array([-0.1, 0.05])
        box = Interval(np.array([-4.0, -4.0]), np.array([4.0, 4.0]))
        res = final_softmax_exact(0, Linear(theta=-lam), box)
        xs = np.linspace(-4, 4, 1200)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        P = np.stack([X.ravel(), Y.ravel()], axis=1)
        vals = softmax(P)[:, 0] + P @ lam
        assert res.value >= vals.max() - 1e-9
