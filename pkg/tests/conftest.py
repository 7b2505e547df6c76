import numpy as np
import pytest

from funclag import (
    BoxOfDeltas,
    CanonicalLayer,
    CanonicalNetwork,
    Deterministic,
    DiagonalGaussian,
    Dropout,
    LogitDiff,
    VerificationProblem,
)


def det_layer(w, b, activation="identity"):
    return CanonicalLayer(
        activation=activation,
        weights=Deterministic(np.asarray(w, dtype=float)),
        bias=Deterministic(np.asarray(b, dtype=float)),
    )


@pytest.fixture
def two_layer_net():
    """2 -> 2 -> 2 deterministic net: identity affine, then relu affine."""
    return CanonicalNetwork(
        layers=(
            det_layer([[1.0, 0.5], [0.2, -1.0]], [0.1, 0.0]),
            det_layer([[2.0, 1.0], [0.0, 1.0]], [0.0, -0.2], activation="relu"),
        )
    )


@pytest.fixture
def gaussian_layer():
    return CanonicalLayer(
        activation="identity",
        weights=DiagonalGaussian(
            mean=np.array([[1.0]]), stddev=np.array([[1.0]]), truncation=3.0
        ),
        bias=Deterministic(np.array([0.0])),
    )


@pytest.fixture
def dropout_net():
    """1 -> 2 net whose second layer uses dropout weights."""
    return CanonicalNetwork(
        layers=(
            det_layer([[1.0], [0.5]], [0.0, 0.1]),
            CanonicalLayer(
                activation="relu",
                weights=Dropout(
                    values=np.array([[1.2, -0.6], [0.4, 0.9]]),
                    keep=np.array([[0.7, 0.5], [0.9, 0.6]]),
                ),
                bias=Deterministic(np.array([0.05, -0.1])),
            ),
        )
    )


def random_affine_net(rng, conditioned=False):
    """Random deterministic affine network for tightness checks.

    ``conditioned`` draws orthogonal weight factors so that no layer
    direction collapses; plain draws are Gaussians scaled 1/sqrt(d).
    """
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(2, 5)) for _ in range(depth + 1)]
    layers = []
    for i in range(depth):
        out_d, in_d = dims[i + 1], dims[i]
        if conditioned:
            g = rng.standard_normal((max(out_d, in_d), max(out_d, in_d)))
            q, _ = np.linalg.qr(g)
            w = 0.9 * q[:out_d, :in_d]
        else:
            w = rng.standard_normal((out_d, in_d)) / np.sqrt(in_d)
        layers.append(det_layer(w, 0.2 * rng.standard_normal(out_d)))
    return CanonicalNetwork(layers=tuple(layers))


def logit_diff_problem(net, rng=None, epsilon=0.2):
    center = np.full(net.input_dim, 0.5)
    return VerificationProblem(
        network=net,
        input_set=BoxOfDeltas(center=center, epsilon=epsilon, clip=False),
        objective=LogitDiff(target=0, true=1),
        threshold=0.0,
    )
