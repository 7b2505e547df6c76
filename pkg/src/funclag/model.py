"""Networks as sequences of possibly stochastic dense layers.

Every layer is stored in the canonical "activation, then affine" form

    x_{k+1} = W * s(x_k) + b

where ``s`` is ``identity`` or ``relu`` and both ``W`` and ``b`` may be
random: deterministic matrices, entrywise-independent diagonal Gaussians
(truncated at sampling time), or Bernoulli dropout masks applied to a
value matrix.  The first layer always has an identity activation so that
raw inputs enter an affine map directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class ModelError(Exception):
    """Base class for model construction and loading failures."""


class ParseError(ModelError):
    """The model file is not valid JSON."""


class SchemaError(ModelError):
    """The model file does not match the documented schema."""


class ShapeError(ModelError):
    """Matrix shapes within or across layers do not compose."""


class StructureError(ModelError):
    """A raw layer sequence cannot be grouped into canonical layers."""


_ACTIVATIONS = ("identity", "relu")


def _as_array(values, what: str, ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Deterministic:
    """A point-mass weight: always equal to ``values``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_array(self.values, "values"))

    @property
    def shape(self):
        return self.values.shape

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.values


@dataclass(frozen=True)
class DiagonalGaussian:
    """Entrywise-independent Gaussian weights N(mean, stddev^2).

    ``truncation`` is the number of standard deviations used when the
    weight is *sampled*: draws are rejected outside mean +- truncation *
    stddev so that realized weights have bounded support.  Moments and
    the mgf are those of the untruncated Gaussian; the support interval
    is the truncated one.
    """

    mean: np.ndarray
    stddev: np.ndarray
    truncation: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_array(self.mean, "mean"))
        object.__setattr__(self, "stddev", _as_array(self.stddev, "stddev"))
        object.__setattr__(self, "truncation", float(self.truncation))
        if self.stddev.shape != self.mean.shape:
            raise ShapeError("mean and stddev must share one shape")
        if np.any(self.stddev < 0):
            raise ValueError("stddev entries must be non-negative")
        if not self.truncation > 0:
            raise ValueError("truncation multiplier must be positive")

    @property
    def shape(self):
        return self.mean.shape

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        draw = rng.normal(self.mean, self.stddev)
        radius = self.truncation * self.stddev
        bad = np.abs(draw - self.mean) > radius
        while np.any(bad):
            redraw = rng.normal(self.mean, self.stddev)
            draw = np.where(bad, redraw, draw)
            bad = np.abs(draw - self.mean) > radius
        return draw


@dataclass(frozen=True)
class Dropout:
    """Dropout weights: values * Bernoulli(keep), independently per entry.

    ``keep`` is the probability that an entry is *retained*, so the mean
    is ``values * keep``.
    """

    values: np.ndarray
    keep: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_array(self.values, "values"))
        object.__setattr__(self, "keep", _as_array(self.keep, "keep"))
        if self.keep.shape != self.values.shape:
            raise ShapeError("values and keep must share one shape")
        if np.any(self.keep < 0) or np.any(self.keep > 1):
            raise ValueError("keep probabilities must lie in [0, 1]")

    @property
    def shape(self):
        return self.values.shape

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        mask = rng.random(self.values.shape) < self.keep
        return self.values * mask


WeightDistribution = Union[Deterministic, DiagonalGaussian, Dropout]


def weight_mean(dist: WeightDistribution) -> np.ndarray:
    """First moment, entrywise."""
    if isinstance(dist, Deterministic):
        return dist.values
    if isinstance(dist, DiagonalGaussian):
        return dist.mean
    if isinstance(dist, Dropout):
        return dist.values * dist.keep
    raise TypeError(f"unknown weight distribution {type(dist).__name__}")


def weight_variance(dist: WeightDistribution) -> np.ndarray:
    """Second central moment, entrywise."""
    if isinstance(dist, Deterministic):
        return np.zeros_like(dist.values)
    if isinstance(dist, DiagonalGaussian):
        return dist.stddev**2
    if isinstance(dist, Dropout):
        return dist.values**2 * dist.keep * (1.0 - dist.keep)
    raise TypeError(f"unknown weight distribution {type(dist).__name__}")


def weight_log_mgf(dist: WeightDistribution, theta: np.ndarray) -> np.ndarray:
    """Entrywise log moment generating function log E[exp(w * theta)]."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(dist, Deterministic):
        return dist.values * theta
    if isinstance(dist, DiagonalGaussian):
        return dist.mean * theta + 0.5 * dist.stddev**2 * theta**2
    if isinstance(dist, Dropout):
        return np.log(dist.keep * np.exp(dist.values * theta) + (1.0 - dist.keep))
    raise TypeError(f"unknown weight distribution {type(dist).__name__}")


def is_deterministic(dist: WeightDistribution) -> bool:
    if isinstance(dist, Deterministic):
        return True
    if isinstance(dist, DiagonalGaussian):
        return bool(np.all(dist.stddev == 0))
    if isinstance(dist, Dropout):
        return bool(np.all((dist.keep == 0) | (dist.keep == 1)))
    raise TypeError(f"unknown weight distribution {type(dist).__name__}")


@dataclass(frozen=True)
class CanonicalLayer:
    """One canonical layer: x -> W * s(x) + b with s applied to the input."""

    activation: str
    weights: WeightDistribution
    bias: WeightDistribution

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if len(self.weights.shape) != 2:
            raise ShapeError("weights must be a matrix")
        if len(self.bias.shape) != 1:
            raise ShapeError("bias must be a vector")
        if self.bias.shape[0] != self.out_dim:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match output dim {self.out_dim}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def apply_activation(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0) if self.activation == "relu" else x

    def is_deterministic(self) -> bool:
        return is_deterministic(self.weights) and is_deterministic(self.bias)


@dataclass(frozen=True)
class CanonicalNetwork:
    """An ordered sequence of canonical layers; immutable after creation."""

    layers: tuple[CanonicalLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise StructureError("network must contain at least one layer")
        if layers[0].activation != "identity":
            raise StructureError("layer 0 must have an identity activation")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ShapeError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer "
                    f"{i - 1} produces {layers[i - 1].out_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def is_deterministic(self) -> bool:
        return all(layer.is_deterministic() for layer in self.layers)

    def is_affine(self) -> bool:
        """True when every activation is identity and every weight is a point mass."""
        return self.is_deterministic() and all(
            layer.activation == "identity" for layer in self.layers
        )


@dataclass(frozen=True)
class RawAffine:
    """An affine descriptor used by :func:`normalize_layers`."""

    weights: WeightDistribution
    bias: WeightDistribution


def normalize_layers(items: Sequence) -> CanonicalNetwork:
    """Group an alternating affine/activation sequence into canonical layers.

    Each activation descriptor (the string ``"relu"`` or ``"identity"``)
    fuses into the affine map that *follows* it.  Already-canonical
    layers pass through unchanged, which makes the operation idempotent.
    Two consecutive activations, a leading relu, or a trailing activation
    raise :class:`StructureError`.
    """
    layers: list[CanonicalLayer] = []
    pending: str | None = None
    for item in items:
        if isinstance(item, str):
            if item not in _ACTIVATIONS:
                raise StructureError(f"unknown activation descriptor {item!r}")
            if pending is not None:
                raise StructureError("two consecutive activation descriptors")
            if not layers and item != "identity":
                raise StructureError("sequence must begin with an affine descriptor")
            pending = item
        elif isinstance(item, RawAffine):
            layers.append(
                CanonicalLayer(
                    activation=pending or "identity",
                    weights=item.weights,
                    bias=item.bias,
                )
            )
            pending = None
        elif isinstance(item, CanonicalLayer):
            if pending is not None:
                raise StructureError("activation descriptor before a canonical layer")
            layers.append(item)
        else:
            raise StructureError(f"unsupported descriptor of type {type(item).__name__}")
    if pending is not None:
        raise StructureError("trailing activation descriptor")
    return CanonicalNetwork(layers=tuple(layers))


# --- JSON model format -------------------------------------------------

_WEIGHT_KEYS = {
    "deterministic": {"kind", "values"},
    "gaussian": {"kind", "mean", "stddev", "truncation"},
    "dropout": {"kind", "values", "keep"},
}


def _check_keys(obj: dict, expected: set, what: str) -> None:
    keys = set(obj)
    missing = expected - keys
    extra = keys - expected
    if missing:
        raise SchemaError(f"{what}: missing fields {sorted(missing)}")
    if extra:
        raise SchemaError(f"{what}: unexpected fields {sorted(extra)}")


def _weights_from_dict(obj, ndim: int, what: str) -> WeightDistribution:
    if not isinstance(obj, dict):
        raise SchemaError(f"{what} must be an object")
    kind = obj.get("kind")
    if kind not in _WEIGHT_KEYS:
        raise SchemaError(f"{what}: kind must be one of {sorted(_WEIGHT_KEYS)}")
    _check_keys(obj, _WEIGHT_KEYS[kind], what)
    if kind == "deterministic":
        return Deterministic(values=_as_array(obj["values"], what, ndim))
    if kind == "gaussian":
        return DiagonalGaussian(
            mean=_as_array(obj["mean"], what, ndim),
            stddev=_as_array(obj["stddev"], what, ndim),
            truncation=float(obj["truncation"]),
        )
    return Dropout(
        values=_as_array(obj["values"], what, ndim),
        keep=_as_array(obj["keep"], what, ndim),
    )


def load_model(path) -> CanonicalNetwork:
    """Load and validate a canonical network from its JSON file format.

    The document must carry exactly the keys ``input_dim`` and ``layers``;
    each layer carries ``activation``, ``weights`` and ``bias`` where the
    weight objects follow the deterministic/gaussian/dropout schema.
    Raises :class:`ParseError`, :class:`SchemaError`, :class:`ShapeError`
    or :class:`ValueError` depending on what is wrong.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level document must be an object")
    _check_keys(doc, {"input_dim", "layers"}, "model")
    if not isinstance(doc["input_dim"], int) or doc["input_dim"] <= 0:
        raise SchemaError("input_dim must be a positive integer")
    if not isinstance(doc["layers"], list) or not doc["layers"]:
        raise SchemaError("layers must be a non-empty list")

    layers = []
    for i, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise SchemaError(f"layer {i} must be an object")
        _check_keys(entry, {"activation", "weights", "bias"}, f"layer {i}")
        if entry["activation"] not in _ACTIVATIONS:
            raise SchemaError(f"layer {i}: activation must be one of {_ACTIVATIONS}")
        weights = _weights_from_dict(entry["weights"], 2, f"layer {i} weights")
        bias = _weights_from_dict(entry["bias"], 1, f"layer {i} bias")
        layers.append(
            CanonicalLayer(activation=entry["activation"], weights=weights, bias=bias)
        )

    if layers[0].activation != "identity":
        raise SchemaError("layer 0 must have an identity activation")
    if layers[0].in_dim != doc["input_dim"]:
        raise ShapeError(
            f"layer 0 expects {layers[0].in_dim} inputs but input_dim is {doc['input_dim']}"
        )
    return CanonicalNetwork(layers=tuple(layers))


def model_to_dict(net: CanonicalNetwork) -> dict:
    """Inverse of :func:`load_model`: dump a network to its JSON document."""

    def weight_dict(dist: WeightDistribution) -> dict:
        if isinstance(dist, Deterministic):
            return {"kind": "deterministic", "values": dist.values.tolist()}
        if isinstance(dist, DiagonalGaussian):
            return {
                "kind": "gaussian",
                "mean": dist.mean.tolist(),
                "stddev": dist.stddev.tolist(),
                "truncation": dist.truncation,
            }
        return {"kind": "dropout", "values": dist.values.tolist(), "keep": dist.keep.tolist()}

    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "activation": layer.activation,
                "weights": weight_dict(layer.weights),
                "bias": weight_dict(layer.bias),
            }
            for layer in net.layers
        ],
    }


# --- sampling ----------------------------------------------------------


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def forward_sample(net: CanonicalNetwork, x, seed: int) -> np.ndarray:
    """One stochastic forward pass with freshly sampled weights.

    Gaussian weights are rejection-sampled within their truncated support
    and dropout weights are Bernoulli masks; deterministic weights pass
    through unchanged.  The pass is a pure function of (net, x, seed).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ShapeError(f"input must have shape ({net.input_dim},), got {x.shape}")
    rng = np.random.default_rng(seed)
    out = x
    for layer in net.layers:
        w = layer.weights.sample(rng)
        b = layer.bias.sample(rng)
        out = w @ layer.apply_activation(out) + b
    return out


def mean_softmax_estimate(
    net: CanonicalNetwork, x, n_samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the expected softmax output.

    Returns the per-class sample mean (a probability vector) and the
    per-class standard error of that mean.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    probs = np.empty((n_samples, net.output_dim))
    for i in range(n_samples):
        out = x
        for layer in net.layers:
            w = layer.weights.sample(rng)
            b = layer.bias.sample(rng)
            out = w @ layer.apply_activation(out) + b
        probs[i] = softmax(out)
    mean = probs.mean(axis=0)
    if n_samples == 1 or net.is_deterministic():
        stderr = np.zeros(net.output_dim)
    else:
        stderr = probs.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return mean, stderr
