from .rb import ScoreState, ScoreRunResult, rb_init, rb_step, rb_run, poyiadjis_n_run
from .marginal import poyiadjis_n2_run
from .fixed_lag import LagBuffer, fixed_lag_run
from .coeffs import shrinkage_coeffs

__all__ = [
    "ScoreState",
    "ScoreRunResult",
    "rb_init",
    "rb_step",
    "rb_run",
    "poyiadjis_n_run",
    "poyiadjis_n2_run",
    "LagBuffer",
    "fixed_lag_run",
    "shrinkage_coeffs",
]
