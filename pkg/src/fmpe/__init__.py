"""Filtered moment-projection phase estimation.

Post-processing estimators for quantum-phase-estimation sample data
(filtered moment projection with and without a depolarizing-noise model,
and the quasiprobability noise-unbiased variant), analytic bias/variance
bound evaluators, and a desk-scale noisy-QPE trajectory simulator.
"""

from .angles import wrap
from .kernels import Fejer, Gaussian, Kernel
from .spectral import (
    FilterReport,
    NoisySpec,
    PromiseInterval,
    SpectralDistribution,
    promise_interval_from_gap,
)
from .estimators import EstimateReport, PhaseModel, TaggedSample

__all__ = [
    "wrap",
    "Gaussian",
    "Fejer",
    "Kernel",
    "SpectralDistribution",
    "PromiseInterval",
    "NoisySpec",
    "FilterReport",
    "promise_interval_from_gap",
    "PhaseModel",
    "TaggedSample",
    "EstimateReport",
]
