"""Functional multiplier families and their exact layer expectations.

A multiplier attaches to one layer boundary and maps that layer's
activation vector to a scalar penalty.  For stochastic layers the dual
needs E[lam(W s(x) + b)] over the weight distribution; for the families
here this expectation is available in closed form:

* linear and quadratic parts need only the first and second weight
  moments (Gaussian: mean/variance; dropout: v*p and v^2*p*(1-p));
* the exponential part of a linexp multiplier factorizes into a product
  of per-entry moment generating functions because weight entries are
  independent.

Gaussian expectations deliberately use the *untruncated* moments and
mgf even though sampling and support boxes are truncated; the certified
output records this via its metadata.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CanonicalLayer,
    weight_log_mgf,
    weight_mean,
    weight_variance,
)


class UnsupportedCombination(Exception):
    """No closed form or sound solver exists for this pairing."""


def _vec(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Zero:
    """The identically-zero multiplier (the convention at both ends)."""

    def evaluate(self, x) -> float:
        return 0.0


@dataclass(frozen=True)
class Linear:
    """lam(x) = theta . x"""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _vec(self.theta, "theta"))

    @property
    def width(self) -> int:
        return self.theta.shape[0]

    def evaluate(self, x) -> float:
        return float(self.theta @ np.asarray(x, dtype=float))


@dataclass(frozen=True)
class LinExp:
    """lam(x) = alpha . x + exp(gamma . x + kappa)"""

    alpha: np.ndarray
    gamma: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _vec(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _vec(self.gamma, "gamma"))
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.alpha.shape != self.gamma.shape:
            raise ValueError("alpha and gamma must share one length")

    @property
    def width(self) -> int:
        return self.alpha.shape[0]

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.alpha @ x + np.exp(self.gamma @ x + self.kappa))


@dataclass(frozen=True)
class Quadratic:
    """lam(x) = 0.5 * x' Q x + q . x with symmetric Q."""

    Q: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be a square matrix")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", _vec(self.q, "q"))
        if self.q.shape[0] != Q.shape[0]:
            raise ValueError("Q and q dimensions disagree")

    @property
    def width(self) -> int:
        return self.q.shape[0]

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x)


@dataclass(frozen=True)
class DiagQuadratic:
    """lam(x) = alpha . x + beta . (x * x)"""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", _vec(self.alpha, "alpha"))
        object.__setattr__(self, "beta", _vec(self.beta, "beta"))
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must share one length")

    @property
    def width(self) -> int:
        return self.alpha.shape[0]

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.alpha @ x + self.beta @ (x * x))


Multiplier = Zero | Linear | LinExp | Quadratic | DiagQuadratic


def evaluate(lam: Multiplier, x) -> float:
    """Evaluate a multiplier's closed form at a point."""
    return lam.evaluate(x)


def as_quadratic(lam: Multiplier, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(Q, q) such that lam(x) = 0.5 x'Qx + q.x, for the quadratic-family views."""
    if isinstance(lam, Zero):
        return np.zeros((width, width)), np.zeros(width)
    if isinstance(lam, Linear):
        return np.zeros((width, width)), lam.theta
    if isinstance(lam, Quadratic):
        return lam.Q, lam.q
    if isinstance(lam, DiagQuadratic):
        return 2.0 * np.diag(lam.beta), lam.alpha
    raise UnsupportedCombination(
        f"{type(lam).__name__} has no quadratic representation"
    )


def linear_coeffs(lam: Multiplier, width: int) -> np.ndarray:
    """The theta vector of a Zero/Linear multiplier."""
    if isinstance(lam, Zero):
        return np.zeros(width)
    if isinstance(lam, Linear):
        return lam.theta
    raise UnsupportedCombination(f"{type(lam).__name__} is not linear")


def expected_quadratic_coeffs(
    layer: CanonicalLayer, Q: np.ndarray, q: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Coefficients of E[0.5 (Wy+b)'Q(Wy+b) + q.(Wy+b)] as a quadratic in y.

    Returns (c0, m, M) with the expectation equal to
    c0 + m . y + 0.5 * y' M y.  Only first and second weight moments
    enter; the variance terms contribute to the diagonal of M and to c0
    because weight entries are independent.
    """
    w_mean = weight_mean(layer.weights)
    w_var = weight_variance(layer.weights)
    b_mean = weight_mean(layer.bias)
    b_var = weight_variance(layer.bias)
    diag_q = np.diag(Q)
    M = w_mean.T @ Q @ w_mean + np.diag(w_var.T @ diag_q)
    m = w_mean.T @ (q + Q @ b_mean)
    c0 = float(q @ b_mean + 0.5 * (b_mean @ Q @ b_mean + diag_q @ b_var))
    return c0, m, M


def expected_under_layer(lam: Multiplier, layer: CanonicalLayer, x) -> float:
    """E over (W, b) of lam(W s(x) + b) at a fixed layer input x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.in_dim,):
        raise ValueError(f"x must have shape ({layer.in_dim},), got {x.shape}")
    s = layer.apply_activation(x)
    w_mean = weight_mean(layer.weights)
    b_mean = weight_mean(layer.bias)
    mean_out = w_mean @ s + b_mean

    if isinstance(lam, Zero):
        return 0.0
    if isinstance(lam, Linear):
        return float(lam.theta @ mean_out)
    if isinstance(lam, (Quadratic, DiagQuadratic)):
        Q, q = as_quadratic(lam, layer.out_dim)
        c0, m, M = expected_quadratic_coeffs(layer, Q, q)
        return float(c0 + m @ s + 0.5 * s @ M @ s)
    if isinstance(lam, LinExp):
        linear_part = float(lam.alpha @ mean_out)
        # E[exp(gamma.(Ws+b) + kappa)] = exp(kappa) * prod_ij mgf_ij(gamma_i s_j)
        # * prod_i mgf_bias_i(gamma_i), accumulated in log space.
        theta_w = np.outer(lam.gamma, s)
        log_exp = lam.kappa
        log_exp += float(np.sum(weight_log_mgf(layer.weights, theta_w)))
        log_exp += float(np.sum(weight_log_mgf(layer.bias, lam.gamma)))
        return linear_part + float(np.exp(log_exp))
    raise UnsupportedCombination(
        f"no closed-form expectation for {type(lam).__name__}"
    )


def get_params(lam: Multiplier) -> dict[str, np.ndarray]:
    """The trainable parameter arrays of a multiplier (kappa as a 0-d array)."""
    if isinstance(lam, Zero):
        return {}
    if isinstance(lam, Linear):
        return {"theta": np.array(lam.theta)}
    if isinstance(lam, LinExp):
        return {
            "alpha": np.array(lam.alpha),
            "gamma": np.array(lam.gamma),
            "kappa": np.array(lam.kappa),
        }
    if isinstance(lam, Quadratic):
        return {"Q": np.array(lam.Q), "q": np.array(lam.q)}
    if isinstance(lam, DiagQuadratic):
        return {"alpha": np.array(lam.alpha), "beta": np.array(lam.beta)}
    raise UnsupportedCombination(f"{type(lam).__name__} has no parameters")


def with_params(lam: Multiplier, params: dict[str, np.ndarray]) -> Multiplier:
    """Rebuild a multiplier of the same family from a parameter dict."""
    if isinstance(lam, Zero):
        return lam
    if isinstance(lam, Linear):
        return Linear(theta=np.asarray(params["theta"], dtype=float))
    if isinstance(lam, LinExp):
        return LinExp(
            alpha=np.asarray(params["alpha"], dtype=float),
            gamma=np.asarray(params["gamma"], dtype=float),
            kappa=float(params["kappa"]),
        )
    if isinstance(lam, Quadratic):
        q_mat = np.asarray(params["Q"], dtype=float)
        return Quadratic(Q=0.5 * (q_mat + q_mat.T), q=np.asarray(params["q"], dtype=float))
    if isinstance(lam, DiagQuadratic):
        return DiagQuadratic(
            alpha=np.asarray(params["alpha"], dtype=float),
            beta=np.asarray(params["beta"], dtype=float),
        )
    raise UnsupportedCombination(f"{type(lam).__name__} has no parameters")


def unit_param_bumps(lam: Multiplier):
    """Yield (name, index, bumped multiplier) with one parameter entry raised by 1.

    Symmetric off-diagonal entries of a quadratic's Q move together, so
    the bump matches the tied parameterization the optimizer updates.
    """
    params = get_params(lam)
    for name, arr in params.items():
        if arr.ndim == 0:
            bumped = {k: np.array(v) for k, v in params.items()}
            bumped[name] = arr + 1.0
            yield name, (), with_params(lam, bumped)
        elif arr.ndim == 1:
            for i in range(arr.shape[0]):
                bumped = {k: np.array(v) for k, v in params.items()}
                bumped[name] = arr.copy()
                bumped[name][i] += 1.0
                yield name, (i,), with_params(lam, bumped)
        else:
            for i in range(arr.shape[0]):
                for j in range(i, arr.shape[1]):
                    bumped = {k: np.array(v) for k, v in params.items()}
                    mat = arr.copy()
                    mat[i, j] += 1.0
                    if i != j:
                        mat[j, i] += 1.0
                    bumped[name] = mat
                    yield name, (i, j), with_params(lam, bumped)


def zero_param_grads(lam: Multiplier) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in get_params(lam).items()}


# --- stacks --------------------------------------------------------------


@dataclass(frozen=True)
class MultiplierStack:
    """One multiplier per layer boundary, lam_1 .. lam_K.

    Entry k (0-based) attaches to the output of layer k; the multipliers
    at the two ends of the dual (lam_0 and lam_{K+1}) are implicitly
    Zero and never stored.
    """

    lams: tuple[Multiplier, ...]

    def __post_init__(self):
        object.__setattr__(self, "lams", tuple(self.lams))

    def __len__(self) -> int:
        return len(self.lams)

    def __getitem__(self, i: int) -> Multiplier:
        return self.lams[i]

    def replace(self, i: int, lam: Multiplier) -> "MultiplierStack":
        lams = list(self.lams)
        lams[i] = lam
        return MultiplierStack(lams=tuple(lams))


FAMILIES = ("linear", "linexp", "quadratic")

DEFAULT_LINEXP_KAPPA = -10.0


def init_stack(
    families,
    widths,
    strategy: str = "zeros",
    scale: float = 0.01,
    seed: int = 0,
) -> MultiplierStack:
    """Build an initial stack, one family name per boundary.

    ``zeros`` initializes every parameter at zero except the linexp
    kappa, which starts at a large negative value so the exponential
    term is effectively off; ``noise`` adds reproducible Gaussian noise
    of the given scale on top.
    """
    if strategy not in ("zeros", "noise"):
        raise ValueError(f"unknown init strategy {strategy!r}")
    if len(families) != len(widths):
        raise ValueError("families and widths must have equal length")
    rng = np.random.default_rng(seed)

    def noise(shape):
        if strategy == "noise":
            return scale * rng.standard_normal(shape)
        return np.zeros(shape)

    lams: list[Multiplier] = []
    for family, width in zip(families, widths):
        if family == "linear":
            lams.append(Linear(theta=noise(width)))
        elif family == "linexp":
            lams.append(
                LinExp(
                    alpha=noise(width),
                    gamma=noise(width),
                    kappa=DEFAULT_LINEXP_KAPPA + float(noise(())),
                )
            )
        elif family == "quadratic":
            raw = noise((width, width))
            lams.append(Quadratic(Q=0.5 * (raw + raw.T), q=noise(width)))
        elif family == "diag_quadratic":
            lams.append(DiagQuadratic(alpha=noise(width), beta=noise(width)))
        else:
            raise ValueError(f"unknown multiplier family {family!r}")
    return MultiplierStack(lams=tuple(lams))


def stack_to_jsonable(stack: MultiplierStack) -> list[dict]:
    out = []
    for lam in stack.lams:
        if isinstance(lam, Linear):
            out.append({"family": "linear", "params": {"theta": lam.theta.tolist()}})
        elif isinstance(lam, LinExp):
            out.append(
                {
                    "family": "linexp",
                    "params": {
                        "alpha": lam.alpha.tolist(),
                        "gamma": lam.gamma.tolist(),
                        "kappa": lam.kappa,
                    },
                }
            )
        elif isinstance(lam, Quadratic):
            out.append(
                {"family": "quadratic", "params": {"Q": lam.Q.tolist(), "q": lam.q.tolist()}}
            )
        elif isinstance(lam, DiagQuadratic):
            out.append(
                {
                    "family": "diag_quadratic",
                    "params": {"alpha": lam.alpha.tolist(), "beta": lam.beta.tolist()},
                }
            )
        elif isinstance(lam, Zero):
            out.append({"family": "linear", "params": {"theta": []}})
        else:
            raise UnsupportedCombination(f"cannot serialize {type(lam).__name__}")
    return out


def stack_from_jsonable(entries) -> MultiplierStack:
    lams: list[Multiplier] = []
    for entry in entries:
        family = entry["family"]
        params = entry["params"]
        if family == "linear":
            lams.append(Linear(theta=np.asarray(params["theta"], dtype=float)))
        elif family == "linexp":
            lams.append(
                LinExp(
                    alpha=np.asarray(params["alpha"], dtype=float),
                    gamma=np.asarray(params["gamma"], dtype=float),
                    kappa=float(params["kappa"]),
                )
            )
        elif family == "quadratic":
            lams.append(
                Quadratic(
                    Q=np.asarray(params["Q"], dtype=float),
                    q=np.asarray(params["q"], dtype=float),
                )
            )
        elif family == "diag_quadratic":
            lams.append(
                DiagQuadratic(
                    alpha=np.asarray(params["alpha"], dtype=float),
                    beta=np.asarray(params["beta"], dtype=float),
                )
            )
        else:
            raise UnsupportedCombination(f"unknown multiplier family {family!r}")
    return MultiplierStack(lams=tuple(lams))
