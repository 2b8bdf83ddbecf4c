"""State-space model interface shared by the filter, estimators and MLE drivers.

A model is a bundle of density/sampler/derivative callables over a scalar
latent state.  All callables take the parameter vector ``theta`` (a 1-d float
array of length ``d``) as their last argument and broadcast over particle
arrays:

* ``init_logpdf(x, theta)``, ``trans_logpdf(x, x_prev, theta)`` and
  ``obs_logpdf(y, x, t, theta)`` return elementwise log-densities,
* ``grad_log_*`` return arrays of shape ``broadcast_shape + (d,)``,
* ``hess_log_*`` return arrays of shape ``broadcast_shape + (d, d)``.

Observation-side callables receive the 1-based time index ``t`` so that
deterministic regressors (seasonal terms, trends) can enter the observation
density without widening the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TRANSFORM_TAGS = ("identity", "log", "artanh")


@dataclass(frozen=True)
class ThetaVector:
    """A d-dimensional parameter point with optional unconstrained bijections.

    ``transforms`` holds one tag per coordinate: ``identity`` (no change),
    ``log`` (positive coordinate, working value is its log) or ``artanh``
    (coordinate in (-1, 1), working value is its inverse hyperbolic tangent).
    Transforms are off (all identity) unless requested.
    """

    values: np.ndarray
    names: tuple[str, ...]
    transforms: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("theta must be a 1-d vector with d >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("theta values must be finite")
        if len(self.names) != values.size:
            raise ValueError("names and values disagree on dimension")
        if self.transforms is not None:
            if len(self.transforms) != values.size:
                raise ValueError("transforms and values disagree on dimension")
            for tag in self.transforms:
                if tag not in TRANSFORM_TAGS:
                    raise ValueError(f"unknown transform tag {tag!r}")
            for tag, v in zip(self.transforms, values):
                if tag == "log" and v <= 0:
                    raise ValueError("log transform requires a positive value")
                if tag == "artanh" and not -1 < v < 1:
                    raise ValueError("artanh transform requires a value in (-1, 1)")

    @property
    def d(self) -> int:
        return self.values.size

    def to_unconstrained(self) -> np.ndarray:
        """Map the constrained values to the unconstrained working space."""
        if self.transforms is None:
            return self.values.copy()
        u = self.values.copy()
        for j, tag in enumerate(self.transforms):
            if tag == "log":
                u[j] = np.log(u[j])
            elif tag == "artanh":
                u[j] = np.arctanh(u[j])
        return u

    def from_unconstrained(self, u: np.ndarray) -> "ThetaVector":
        """Rebuild the constrained vector from unconstrained working values."""
        u = np.asarray(u, dtype=float)
        if self.transforms is None:
            values = u.copy()
        else:
            values = u.copy()
            for j, tag in enumerate(self.transforms):
                if tag == "log":
                    values[j] = np.exp(u[j])
                elif tag == "artanh":
                    values[j] = np.tanh(u[j])
        return ThetaVector(values, self.names, self.transforms)

    def grad_to_unconstrained(self, grad: np.ndarray) -> np.ndarray:
        """Chain-rule a gradient in theta into the unconstrained space."""
        grad = np.asarray(grad, dtype=float)
        if self.transforms is None:
            return grad.copy()
        out = grad.copy()
        for j, tag in enumerate(self.transforms):
            if tag == "log":
                out[j] = grad[j] * self.values[j]
            elif tag == "artanh":
                out[j] = grad[j] * (1.0 - self.values[j] ** 2)
        return out


@dataclass(frozen=True)
class Proposal:
    """Auxiliary-filter proposal: a transition kernel plus lookahead weights.

    ``log_lookahead`` returns the per-particle log factor multiplying the
    previous weights when forming the auxiliary selection probabilities; the
    bootstrap choice is identically zero (selection by current weight alone).
    """

    sample: Callable  # (rng, x_prev, y, t, theta) -> x
    logpdf: Callable  # (x, x_prev, y, t, theta) -> log q
    log_lookahead: Callable  # (x_prev, y, t, theta) -> log xi factor


@dataclass(frozen=True)
class ModelSpec:
    """A state-space model as a bundle of callables.

    Immutable after construction; all randomness enters through explicitly
    passed ``numpy.random.Generator`` streams, so instances are safe for
    concurrent read-only use.
    """

    name: str
    d: int
    param_names: tuple[str, ...]
    init_logpdf: Callable
    init_sample: Callable  # (rng, n, theta) -> (n,) states
    trans_logpdf: Callable
    trans_sample: Callable  # (rng, x_prev, theta) -> states
    obs_logpdf: Callable  # (y, x, t, theta)
    obs_sample: Callable  # (rng, x, t, theta) -> y
    grad_log_init: Callable
    hess_log_init: Callable
    grad_log_trans: Callable
    hess_log_trans: Callable
    grad_log_obs: Callable
    hess_log_obs: Callable
    validate_theta: Callable  # raises ValueError outside the admissible set
    project_theta: Callable  # clips theta back into the admissible set
    proposal: Optional[Proposal] = None
    default_transforms: Optional[tuple[str, ...]] = None
    obs_format: str = "real"  # "real" | "count", controls data CSV headers
    state_dim: int = 1
    obs_dim: int = 1
    fast_kernels: object = field(default=None, compare=False, repr=False)

    def theta_vector(self, values, unconstrained: bool = False) -> ThetaVector:
        transforms = self.default_transforms if unconstrained else None
        return ThetaVector(np.asarray(values, dtype=float), self.param_names, transforms)


def as_theta_array(theta, d: int) -> np.ndarray:
    """Coerce a ThetaVector or array-like into a validated (d,) float array."""
    if isinstance(theta, ThetaVector):
        values = theta.values
    else:
        values = np.asarray(theta, dtype=float)
    if values.shape != (d,):
        raise ValueError(f"theta has shape {values.shape}, expected ({d},)")
    return values


def simulate(model: ModelSpec, theta, T: int, rng: np.random.Generator):
    """Draw a state/observation path of length T from the model.

    Returns ``(x, y)`` with ``x[t-1]`` the state and ``y[t-1]`` the
    observation at time ``t``.  Deterministic given the generator state.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    th = as_theta_array(theta, model.d)
    model.validate_theta(th)
    x = np.empty(T)
    y = np.empty(T)
    x[0] = model.init_sample(rng, 1, th)[0]
    y[0] = model.obs_sample(rng, x[0], 1, th)
    for t in range(2, T + 1):
        x[t - 1] = model.trans_sample(rng, x[t - 2], th)
        y[t - 1] = model.obs_sample(rng, x[t - 1], t, th)
    return x, y
