"""Batch and recursive gradient-ascent parameter estimation.

Batch mode repeatedly re-estimates the full-series score (and optionally the
observed information, enabling Newton steps) at the current parameter value
and climbs.  Recursive mode makes a single filtering pass, nudging the
parameters after every observation by the increment of the score estimate,
treating the estimator state as if the parameters had been fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _engine
from .estimators.fixed_lag import fixed_lag_run
from .estimators.marginal import poyiadjis_n2_run
from .estimators.rb import poyiadjis_n_run, rb_init, rb_run, rb_step
from .filter import apf_init, apf_step
from .kalman import kalman_score_info
from .models.base import ModelSpec, as_theta_array


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes gamma_k, either constant or a decaying power law.

    The power schedule ``scale * k**(-alpha)`` with ``0.5 < alpha <= 1``
    satisfies the divergent-sum / summable-squares conditions required for
    stochastic-approximation convergence.
    """

    kind: str = "power"
    alpha: float = 0.6
    scale: float = 1.0
    per_coordinate_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("power", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "power" and not 0.5 < self.alpha <= 1.0:
            raise ValueError("power schedule needs alpha in (0.5, 1]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.per_coordinate_scale is not None:
            object.__setattr__(
                self,
                "per_coordinate_scale",
                np.asarray(self.per_coordinate_scale, dtype=float),
            )

    def gamma(self, k: int) -> float:
        if self.kind == "constant":
            return self.scale
        return self.scale * float(k) ** (-self.alpha)

    def step(self, k: int, direction: np.ndarray) -> np.ndarray:
        g = self.gamma(k) * direction
        if self.per_coordinate_scale is not None:
            g = self.per_coordinate_scale * g
        return g


@dataclass
class AscentTrace:
    """Iteration history of an ascent run."""

    thetas: np.ndarray  # (K+1, d), row 0 is the start
    scores: np.ndarray  # (K, d) score estimate used at each iteration
    step_norms: np.ndarray  # (K,)
    status: str = "max-iters"  # "max-iters" | "converged" | "diverged"

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[-1]


def newton_safeguard(info: np.ndarray, score: np.ndarray) -> np.ndarray:
    """Ascent direction info^{-1} score, safeguarded against bad curvature.

    Solves with the matrix as given when it is positive definite, otherwise
    adds a ridge large enough to make it so; falls back to the raw score if
    conditioning still fails.  The returned direction always satisfies
    score . step >= 0.
    """
    info = np.asarray(info, dtype=float)
    score = np.asarray(score, dtype=float)
    d = score.size
    sym = 0.5 * (info + info.T)
    if not np.all(np.isfinite(sym)):
        return score.copy()
    eigmin = float(np.linalg.eigvalsh(sym)[0])
    eps = 1e-8 * np.trace(sym) / d
    if eigmin > max(eps, 0.0):
        step = np.linalg.solve(sym, score)
        if np.all(np.isfinite(step)) and score @ step >= 0.0:
            return step
    ridge = abs(eigmin) + 1e-6 * (np.abs(np.diag(sym)).max() + 1.0)
    try:
        step = np.linalg.solve(sym + ridge * np.eye(d), score)
    except np.linalg.LinAlgError:
        return score.copy()
    if not np.all(np.isfinite(step)) or score @ step < 0.0:
        return score.copy()
    return step


@dataclass(frozen=True)
class EstimatorConfig:
    """Which score/information estimator an ascent run consumes."""

    kind: str  # rb | poyiadjis_n | poyiadjis_n2 | fixed_lag | kalman
    n_particles: int = 1000
    lam: float = 0.95
    lag: int = 10
    engine: str = "auto"

    KINDS = ("rb", "poyiadjis_n", "poyiadjis_n2", "fixed_lag", "kalman")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown estimator {self.kind!r}")


def make_score_source(model: ModelSpec, y, cfg: EstimatorConfig, with_info: bool) -> Callable:
    """Build ``f(theta, rng) -> (score, info | None)`` for batch ascent."""
    y = np.asarray(y, dtype=float)

    def source(theta, rng):
        if cfg.kind == "kalman":
            if model.name != "ar1":
                raise ValueError("the exact filter applies to the ar1 model only")
            score, info = kalman_score_info(theta, y)
            return score, (info if with_info else None)
        if cfg.kind == "rb":
            r = rb_run(model, theta, y, cfg.n_particles, cfg.lam, rng,
                       with_info=with_info, engine=cfg.engine)
        elif cfg.kind == "poyiadjis_n":
            r = poyiadjis_n_run(model, theta, y, cfg.n_particles, rng,
                                with_info=with_info, engine=cfg.engine)
        elif cfg.kind == "poyiadjis_n2":
            r = poyiadjis_n2_run(model, theta, y, cfg.n_particles, rng,
                                 with_info=with_info)
        else:
            r = fixed_lag_run(model, theta, y, cfg.n_particles, cfg.lag, rng,
                              with_info=with_info)
        return r.score, r.info

    return source


def batch_ascent(
    model: ModelSpec, y, theta0, estimator: EstimatorConfig,
    schedule: StepSchedule, iterations: int, rng,
    use_newton: bool = False, tol: Optional[float] = None,
) -> AscentTrace:
    """Iterate theta_k = theta_{k-1} + gamma_k * direction(theta_{k-1}).

    The estimator is re-run on the full batch with a fresh substream at every
    iteration.  Parameters are projected back into the admissible set after
    each step; an optional ``tol`` on the step norm declares early
    convergence.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    theta = as_theta_array(theta0, model.d).copy()
    model.validate_theta(theta)
    source = make_score_source(model, np.asarray(y, dtype=float), estimator,
                               with_info=use_newton)
    thetas = np.zeros((iterations + 1, model.d))
    scores = np.zeros((iterations, model.d))
    step_norms = np.zeros(iterations)
    thetas[0] = theta
    status = "max-iters"
    k_done = 0
    for k in range(1, iterations + 1):
        sub = rng.spawn(1)[0]
        score, info = source(theta, sub)
        if not np.all(np.isfinite(score)):
            status = "diverged"
            break
        direction = newton_safeguard(info, score) if use_newton else score
        step = schedule.step(k, direction)
        theta = model.project_theta(theta + step)
        thetas[k] = theta
        scores[k - 1] = score
        step_norms[k - 1] = float(np.linalg.norm(step))
        k_done = k
        if not np.all(np.isfinite(theta)):
            status = "diverged"
            break
        if tol is not None and step_norms[k - 1] < tol:
            status = "converged"
            break
    return AscentTrace(
        thetas=thetas[: k_done + 1],
        scores=scores[:k_done],
        step_norms=step_norms[:k_done],
        status=status,
    )


def recursive_ascent(
    model: ModelSpec, y, theta0, n_particles: int, lam: float,
    schedule: StepSchedule, rng, engine: str = "auto",
) -> AscentTrace:
    """Single-pass online update theta_t += gamma_t (S_t - S_{t-1}).

    The estimator state evolves across the changing parameters as if they
    were fixed; each observation is consumed exactly once, in order.
    """
    theta = as_theta_array(theta0, model.d).copy()
    model.validate_theta(theta)
    y = np.asarray(y, dtype=float)
    T = y.size

    use_fast = engine == "fast" or (engine == "auto" and model.fast_kernels is not None)
    if use_fast and model.fast_kernels is None:
        raise ValueError(f"model {model.name!r} ships no compiled kernels")
    coord = (
        schedule.per_coordinate_scale
        if schedule.per_coordinate_scale is not None
        else np.ones(model.d)
    )
    if use_fast:
        seed = _engine._seed32(rng)
        status, theta_trace, s_trace = _engine.recursive_fast(
            model.fast_kernels, y, theta, n_particles, lam, seed,
            schedule.kind == "power", schedule.alpha, schedule.scale, coord,
        )
        if status != 0:
            return AscentTrace(
                thetas=np.vstack([theta0, theta_trace]),
                scores=s_trace, step_norms=np.zeros(T), status="diverged",
            )
        steps = np.linalg.norm(np.diff(np.vstack([theta0, theta_trace]), axis=0), axis=1)
        return AscentTrace(
            thetas=np.vstack([theta0, theta_trace]),
            scores=s_trace, step_norms=steps, status="max-iters",
        )

    thetas = np.zeros((T + 1, model.d))
    scores = np.zeros((T, model.d))
    step_norms = np.zeros(T)
    thetas[0] = theta
    s_prev = np.zeros(model.d)
    ps = apf_init(model, theta, y[0], n_particles, rng)
    ss = rb_init(ps, model, theta, y[0], lam, with_info=False)
    for t in range(1, T + 1):
        if t > 1:
            ps_new = apf_step(ps, model, theta, y[t - 1], rng)
            ss = rb_step(ss, ps, ps_new, model, theta, y[t - 1])
            ps = ps_new
        step = schedule.step(t, ss.S - s_prev)
        theta = model.project_theta(theta + step)
        thetas[t] = theta
        scores[t - 1] = ss.S
        step_norms[t - 1] = float(np.linalg.norm(step))
        s_prev = ss.S.copy()
    return AscentTrace(thetas=thetas, scores=scores, step_norms=step_norms,
                       status="max-iters")
