"""Particle-filter score and observed-information estimation for state-space
models, with batch and online maximum-likelihood drivers."""

from .models import (
    Ar1Params, ModelSpec, PolioParams, Proposal, ThetaVector,
    ar1_model, load_polio_csv, polio_model, simulate,
)
from .filter import (
    FilterDegeneracyError, ParticleSystem, apf_init, apf_step, loglik_increment,
)
from .kalman import (
    KalmanState, kalman_loglik, kalman_score_info, kalman_score_trace,
)
from .estimators import (
    LagBuffer, ScoreRunResult, ScoreState, fixed_lag_run, poyiadjis_n2_run,
    poyiadjis_n_run, rb_init, rb_run, rb_step, shrinkage_coeffs,
)
from .mle import (
    AscentTrace, EstimatorConfig, StepSchedule, batch_ascent, newton_safeguard,
    recursive_ascent,
)
from .particle_learning import PlHyper, PlResult, SuffStats, pl_run, pl_update_stats

__version__ = "0.1.0"

__all__ = [
    "Ar1Params", "ModelSpec", "PolioParams", "Proposal", "ThetaVector",
    "ar1_model", "load_polio_csv", "polio_model", "simulate",
    "FilterDegeneracyError", "ParticleSystem", "apf_init", "apf_step",
    "loglik_increment",
    "KalmanState", "kalman_loglik", "kalman_score_info", "kalman_score_trace",
    "LagBuffer", "ScoreRunResult", "ScoreState", "fixed_lag_run",
    "poyiadjis_n2_run", "poyiadjis_n_run", "rb_init", "rb_run", "rb_step",
    "shrinkage_coeffs",
    "AscentTrace", "EstimatorConfig", "StepSchedule", "batch_ascent",
    "newton_safeguard", "recursive_ascent",
    "PlHyper", "PlResult", "SuffStats", "pl_run", "pl_update_stats",
    "__version__",
]
