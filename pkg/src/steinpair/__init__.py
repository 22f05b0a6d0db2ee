"""Stein-method bounds for pair couplings with equal marginals, computed exactly on small models."""
from .numerics import ParameterError
from .couplings import CouplingError, ExactPairCoupling

__all__ = ["ParameterError", "CouplingError", "ExactPairCoupling"]
