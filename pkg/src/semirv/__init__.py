"""Semi-regular-variation tails: construction, convolution oracles and asymptotic predictors."""
from .asym import AsymptoticPrediction, classify_and_predict, lattice_mix_constant
from .dist import SemiRVDistribution, exponential, geometric, make_distribution
from .errors import (AccuracyError, DomainError, InvalidConstructionError, InvalidSpecError,
                     SemiRVError, UnsupportedCaseError, WrongCaseError)
from .risk import RiskModelConfig, RuinEstimate
from .tailfn import TailFunctionSpec

__all__ = [
    "AccuracyError", "AsymptoticPrediction", "DomainError", "InvalidConstructionError",
    "InvalidSpecError", "RiskModelConfig", "RuinEstimate", "SemiRVDistribution", "SemiRVError",
    "TailFunctionSpec", "UnsupportedCaseError", "WrongCaseError", "classify_and_predict",
    "exponential", "geometric", "lattice_mix_constant", "make_distribution",
]
