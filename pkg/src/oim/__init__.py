"""Optimal interventional mixture learning and resilience evaluation.

Trains a full model including the protected attribute, then averages
counterfactual interventions on that attribute under simplex-optimal mixing
weights.  Ships the synthetic-data harness, disparity metrics, and comparison
baselines used to measure resilience to discriminatory data perturbations.
"""

__version__ = "0.1.0"

from .dataset import Dataset, DatasetPair
from .mixture import MixingDistribution, OimModel, chained_oim, oim_fit

__all__ = [
    "Dataset",
    "DatasetPair",
    "MixingDistribution",
    "OimModel",
    "chained_oim",
    "oim_fit",
    "__version__",
]
