"""Declarative experiment configuration (JSON)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..models import Ar1Params, PolioParams, ar1_model, polio_model

ESTIMATORS = ("rb", "poyiadjis_n", "poyiadjis_n2", "fixed_lag", "kalman",
              "particle_learning")
MODELS = ("ar1", "polio")


class ConfigError(ValueError):
    """Invalid experiment configuration; lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


@dataclass(frozen=True)
class MleBlock:
    mode: str  # "batch" | "recursive"
    theta0: tuple
    iterations: int = 100
    newton: bool = False
    schedule_kind: str = "power"
    alpha: float = 0.6
    scale: float = 1.0
    per_coordinate_scale: Optional[tuple] = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment byte-for-byte."""

    model_id: str
    model_params: dict
    estimator: str
    output_dir: str
    seed_root: int = 0
    replicates: int = 1
    lam_grid: tuple = (0.95,)
    n_grid: tuple = (1000,)
    lag_grid: tuple = (10,)
    simulate: Optional[dict] = None  # {"T": int, "theta_star": [...], "seed": int}
    csv_path: Optional[str] = None
    mle: Optional[MleBlock] = None
    engine: str = "auto"
    with_info: bool = True
    workers: int = 1

    def build_model(self):
        if self.model_id == "ar1":
            p = self.model_params
            return ar1_model(Ar1Params(p["phi"], p["sigma"], p["tau"]))
        p = self.model_params
        return polio_model(PolioParams(tuple(p["mu"]), p["phi"], p["sigma2"]))

    def eval_theta(self) -> np.ndarray:
        if self.model_id == "ar1":
            p = self.model_params
            return np.array([p["phi"], p["sigma"], p["tau"]])
        p = self.model_params
        return np.array(list(p["mu"]) + [p["phi"], p["sigma2"]])

    def grid_points(self):
        """Applicable cartesian grid as (label, dict) pairs, deterministic order."""
        points = []
        use_n = self.estimator != "kalman"
        use_lag = self.estimator == "fixed_lag"
        lams = self.lam_grid if self.estimator == "rb" else (None,)
        ns = self.n_grid if use_n else (None,)
        lags = self.lag_grid if use_lag else (None,)
        for lam in lams:
            for n in ns:
                for lag in lags:
                    label = self.estimator
                    gp = {"lam": lam, "n_particles": n, "lag": lag}
                    if lam is not None:
                        label += f"_lam{lam:g}"
                    if n is not None:
                        label += f"_N{n}"
                    if lag is not None:
                        label += f"_L{lag}"
                    points.append((label, gp))
        return points


def _require(cond, problems, msg):
    if not cond:
        problems.append(msg)
    return cond


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a JSON document tree into an ExperimentConfig."""
    problems = []
    model = doc.get("model", {})
    model_id = model.get("id")
    _require(model_id in MODELS, problems, f"model.id must be one of {MODELS}")
    params = model.get("params", {})
    if model_id == "ar1":
        for key in ("phi", "sigma", "tau"):
            _require(key in params, problems, f"model.params.{key} missing")
    elif model_id == "polio":
        for key in ("mu", "phi", "sigma2"):
            _require(key in params, problems, f"model.params.{key} missing")
        if "mu" in params:
            _require(len(params["mu"]) == 6, problems,
                     "model.params.mu needs 6 components")

    estimator = doc.get("estimator")
    _require(estimator in ESTIMATORS, problems,
             f"estimator must be one of {ESTIMATORS}")

    data = doc.get("data", {})
    simulate = data.get("simulate")
    csv_path = data.get("csv")
    _require(
        (simulate is None) != (csv_path is None), problems,
        "data must contain exactly one of 'simulate' or 'csv'",
    )
    if simulate is not None:
        _require(int(simulate.get("T", 0)) >= 1, problems, "data.simulate.T must be >= 1")
        _require("seed" in simulate, problems, "data.simulate.seed missing")

    grid = doc.get("grid", {})
    lam_grid = tuple(grid.get("lam", [0.95]))
    n_grid = tuple(int(v) for v in grid.get("n_particles", [1000]))
    lag_grid = tuple(int(v) for v in grid.get("lag", [10]))
    for lam in lam_grid:
        _require(0 < lam <= 1, problems, f"grid.lam value {lam} outside (0, 1]")
    for n in n_grid:
        _require(n >= 2, problems, f"grid.n_particles value {n} must be >= 2")
    for lag in lag_grid:
        _require(lag >= 1, problems, f"grid.lag value {lag} must be >= 1")

    replicates = int(doc.get("replicates", 1))
    _require(replicates >= 1, problems, "replicates must be >= 1")

    mle = None
    if "mle" in doc and doc["mle"] is not None:
        m = doc["mle"]
        mode = m.get("mode")
        _require(mode in ("batch", "recursive"), problems,
                 "mle.mode must be 'batch' or 'recursive'")
        _require("theta0" in m, problems, "mle.theta0 missing")
        sched = m.get("schedule", {})
        kind = sched.get("kind", "power")
        _require(kind in ("power", "constant"), problems,
                 "mle.schedule.kind must be 'power' or 'constant'")
        alpha = float(sched.get("alpha", 0.6))
        if kind == "power":
            _require(0.5 < alpha <= 1.0, problems,
                     "mle.schedule.alpha must be in (0.5, 1]")
        pcs = sched.get("per_coordinate_scale")
        mle = MleBlock(
            mode=mode or "batch",
            theta0=tuple(float(v) for v in m.get("theta0", ())),
            iterations=int(m.get("iterations", 100)),
            newton=bool(m.get("newton", False)),
            schedule_kind=kind,
            alpha=alpha,
            scale=float(sched.get("scale", 1.0)),
            per_coordinate_scale=None if pcs is None else tuple(float(v) for v in pcs),
        )
        _require(mle.iterations >= 1, problems, "mle.iterations must be >= 1")

    output_dir = doc.get("output_dir")
    _require(bool(output_dir), problems, "output_dir missing")

    engine = doc.get("engine", "auto")
    _require(engine in ("auto", "numpy", "fast"), problems,
             "engine must be auto, numpy or fast")

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(
        model_id=model_id,
        model_params=params,
        estimator=estimator,
        output_dir=output_dir,
        seed_root=int(doc.get("seed_root", 0)),
        replicates=replicates,
        lam_grid=lam_grid,
        n_grid=n_grid,
        lag_grid=lag_grid,
        simulate=None if simulate is None else dict(simulate),
        csv_path=csv_path,
        mle=mle,
        engine=engine,
        with_info=bool(doc.get("with_info", True)),
        workers=int(doc.get("workers", 1)),
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError([f"not valid JSON: {e}"]) from e
    return parse_config(doc)
