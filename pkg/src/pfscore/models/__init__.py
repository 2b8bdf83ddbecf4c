from .base import ModelSpec, Proposal, ThetaVector, as_theta_array, simulate
from .ar1 import Ar1Params, ar1_model
from .polio import PolioParams, polio_model, load_polio_csv, seasonal_predictor

__all__ = [
    "ModelSpec",
    "Proposal",
    "ThetaVector",
    "as_theta_array",
    "simulate",
    "Ar1Params",
    "ar1_model",
    "PolioParams",
    "polio_model",
    "load_polio_csv",
    "seasonal_predictor",
]
