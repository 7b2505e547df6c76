"""Independent brute-force and sampling oracles.

These live in the shipped library rather than only in the test suite so
certificates can be cross-checked against an implementation-independent
route at desk scale: dense grids with explicit Lipschitz error bounds,
Monte Carlo layer expectations, and a reproducible random problem
generator for fuzzing.  Grids are only trusted in up to a few dimensions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bounds import Interval
from .model import (
    CanonicalLayer,
    CanonicalNetwork,
    Deterministic,
    DiagonalGaussian,
    Dropout,
)
from .multipliers import Multiplier
from .specs import (
    BoxOfDeltas,
    ExpectedSoftmax,
    LogitDiff,
    SubGaussianNoise,
    VerificationProblem,
)

_POINT_BUDGET = 10**7


class BudgetExceeded(Exception):
    """The grid would contain more points than the safety budget allows."""


@dataclass(frozen=True)
class GridSpec:
    """A dense grid: points per dimension (>= 2 each) over a box."""

    resolution: tuple[int, ...]
    box: Interval

    def __post_init__(self):
        resolution = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if len(resolution) == 1 and self.box.lo.shape[0] > 1:
            resolution = resolution * self.box.lo.shape[0]
        object.__setattr__(self, "resolution", resolution)
        if len(resolution) != self.box.lo.shape[0]:
            raise ValueError("resolution and box dimensions disagree")
        if any(r < 2 for r in resolution):
            raise ValueError("resolution must be at least 2 per dimension")
        total = 1
        for r in resolution:
            total *= r
            if total > _POINT_BUDGET:
                raise BudgetExceeded(f"grid exceeds {_POINT_BUDGET} points")

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.hi - self.box.lo) / (np.asarray(self.resolution) - 1)


def grid_maximize(f, grid: GridSpec, lipschitz: float) -> tuple[float, np.ndarray, float]:
    """Dense-grid maximum of a batch-evaluable function plus its error bound.

    ``f`` receives an (N, d) array and returns N values.  Every box point
    lies within half a cell diagonal of some grid point, so the true
    maximum exceeds the grid maximum by at most L * h / 2 with h the cell
    diameter.  Returns (value, argmax, error bound).
    """
    axes = [
        np.linspace(grid.box.lo[i], grid.box.hi[i], grid.resolution[i])
        for i in range(len(grid.resolution))
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    best_val = -np.inf
    best_point = points[0]
    chunk = 200_000
    for start in range(0, points.shape[0], chunk):
        block = points[start : start + chunk]
        values = np.asarray(f(block), dtype=float)
        idx = int(np.argmax(values))
        if values[idx] > best_val:
            best_val = float(values[idx])
            best_point = block[idx].copy()
    diameter = float(np.linalg.norm(grid.spacing))
    return best_val, best_point, lipschitz * diameter / 2.0


def mc_expectation(
    layer: CanonicalLayer, lam: Multiplier, x, n: int, seed: int
) -> tuple[float, float]:
    """Sample mean and standard error of lam(W s(x) + b) over weight draws.

    Gaussian weights are drawn untruncated, matching the moment and mgf
    semantics of the closed-form expectations this oracle validates.
    Draws are batched, so millions of samples stay cheap.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    s = layer.apply_activation(x)
    total, total_sq = 0.0, 0.0
    done = 0
    while done < n:
        take = min(100_000, n - done)
        w = _draw_untruncated_batch(layer.weights, rng, take)
        b = _draw_untruncated_batch(layer.bias, rng, take)
        y = np.einsum("nij,j->ni", w, s) + b
        values = _evaluate_batch(lam, y)
        total += float(values.sum())
        total_sq += float((values**2).sum())
        done += take
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0) * (n / max(n - 1, 1))
    stderr = float(np.sqrt(var / n)) if n > 1 else 0.0
    return mean, stderr


def _draw_untruncated_batch(dist, rng, n):
    """(n, *dist.shape) weight realizations; deterministic weights broadcast."""
    shape = (n,) + tuple(dist.shape)
    if isinstance(dist, DiagonalGaussian):
        return rng.normal(dist.mean, dist.stddev, size=shape)
    if isinstance(dist, Dropout):
        return dist.values * (rng.random(shape) < dist.keep)
    return np.broadcast_to(dist.values, shape)


def _evaluate_batch(lam, y: np.ndarray) -> np.ndarray:
    from .multipliers import DiagQuadratic, LinExp, Linear, Quadratic, Zero

    if isinstance(lam, Zero):
        return np.zeros(y.shape[0])
    if isinstance(lam, Linear):
        return y @ lam.theta
    if isinstance(lam, Quadratic):
        return 0.5 * np.einsum("ni,ij,nj->n", y, lam.Q, y) + y @ lam.q
    if isinstance(lam, DiagQuadratic):
        return y @ lam.alpha + (y * y) @ lam.beta
    if isinstance(lam, LinExp):
        return y @ lam.alpha + np.exp(y @ lam.gamma + lam.kappa)
    raise TypeError(f"cannot batch-evaluate {type(lam).__name__}")


def enumerate_dropout_patterns(layer: CanonicalLayer):
    """All (probability, W, b) realizations of a dropout layer.

    Exhaustive over the 2^m on/off patterns of entries with keep strictly
    inside (0, 1); usable as an exact expectation oracle for tiny layers.
    """
    parts = []
    for dist in (layer.weights, layer.bias):
        if isinstance(dist, Dropout):
            free = np.argwhere((dist.keep > 0) & (dist.keep < 1))
            base = dist.values * (dist.keep == 1.0)
            parts.append(("dropout", dist, free, base))
        elif isinstance(dist, Deterministic):
            parts.append(("fixed", dist.values, None, None))
        else:
            raise ValueError("pattern enumeration only covers dropout and deterministic")

    def realizations(part):
        kind = part[0]
        if kind == "fixed":
            yield 1.0, part[1]
            return
        _, dist, free, base = part
        m = len(free)
        for mask_bits in itertools.product((0, 1), repeat=m):
            prob = 1.0
            value = base.copy()
            for bit, idx in zip(mask_bits, free):
                idx = tuple(idx)
                keep_p = dist.keep[idx]
                if bit:
                    prob *= keep_p
                    value[idx] = dist.values[idx]
                else:
                    prob *= 1.0 - keep_p
            yield prob, value

    for p_w, w in realizations(parts[0]):
        for p_b, b in realizations(parts[1]):
            yield p_w * p_b, w, b


def random_problem(
    seed: int,
    max_layers: int = 3,
    max_width: int = 6,
    max_classes: int = 4,
    kinds=("adversarial", "robust_ood", "dist_robust_ood"),
) -> tuple[CanonicalNetwork, VerificationProblem]:
    """Reproducible random network + specification for fuzz suites.

    Weights are N(0, 1/width) scaled, layers mix deterministic, Gaussian
    and dropout weights (the first layer stays deterministic so every
    multiplier family applies), epsilon lies in [0.01, 0.1], and inputs
    avoid the clipping boundary.
    """
    rng = np.random.default_rng(seed)
    spec_kind = kinds[int(rng.integers(0, len(kinds)))]
    # the linexp family needs a transition layer after the input problem
    min_layers = 2 if spec_kind == "dist_robust_ood" else 1
    n_layers = int(rng.integers(min_layers, max(max_layers, min_layers) + 1))
    widths = [int(rng.integers(2, max_width + 1)) for _ in range(n_layers)]
    n_classes = int(rng.integers(2, max_classes + 1))
    widths[-1] = n_classes
    input_dim = int(rng.integers(2, max_width + 1))

    dims = [input_dim] + widths
    layers = []
    for i in range(n_layers):
        out_dim, in_dim = dims[i + 1], dims[i]
        scale = 1.0 / np.sqrt(in_dim)
        w_values = scale * rng.standard_normal((out_dim, in_dim))
        b_values = 0.1 * rng.standard_normal(out_dim)
        weight_kind = "deterministic" if i == 0 else rng.choice(["deterministic", "gaussian", "dropout"])
        if weight_kind == "gaussian":
            weights = DiagonalGaussian(
                mean=w_values,
                stddev=0.2 * scale * rng.random((out_dim, in_dim)),
                truncation=3.0,
            )
        elif weight_kind == "dropout":
            weights = Dropout(
                values=w_values,
                keep=0.5 + 0.5 * rng.random((out_dim, in_dim)),
            )
        else:
            weights = Deterministic(values=w_values)
        layers.append(
            CanonicalLayer(
                activation="identity" if i == 0 else "relu",
                weights=weights,
                bias=Deterministic(values=b_values),
            )
        )
    net = CanonicalNetwork(layers=tuple(layers))

    center = 0.2 + 0.6 * rng.random(input_dim)
    epsilon = float(0.01 + 0.09 * rng.random())
    if spec_kind == "adversarial":
        true_label = int(rng.integers(0, n_classes))
        target = int((true_label + 1 + rng.integers(0, n_classes - 1)) % n_classes)
        problem = VerificationProblem(
            network=net,
            input_set=BoxOfDeltas(center=center, epsilon=epsilon, clip=False),
            objective=LogitDiff(target=target, true=true_label),
            threshold=0.0,
        )
    elif spec_kind == "robust_ood":
        problem = VerificationProblem(
            network=net,
            input_set=BoxOfDeltas(center=center, epsilon=epsilon, clip=False),
            objective=ExpectedSoftmax(label=int(rng.integers(0, n_classes))),
            threshold=0.5,
        )
    else:
        problem = VerificationProblem(
            network=net,
            input_set=SubGaussianNoise(
                center=center,
                epsilon=epsilon,
                sigma=float(0.02 + 0.1 * rng.random()),
                clip=False,
            ),
            objective=ExpectedSoftmax(label=int(rng.integers(0, n_classes))),
            threshold=0.5,
        )
    return net, problem
