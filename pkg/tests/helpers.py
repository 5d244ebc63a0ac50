"""Shared builders for the test suite."""

import numpy as np

from fmpe.kernels import Gaussian
from fmpe.spectral import NoisySpec, PromiseInterval, SpectralDistribution, filtered_pdf


def two_phase_spec(phi0, phi1, a0, sigma, fidelity=1.0):
    sd = SpectralDistribution([phi0, phi1], [a0, 1.0 - a0])
    return NoisySpec(sd, Gaussian(sigma), fidelity)


def filtered_density(spec, interval):
    return lambda x: filtered_pdf(spec, interval, x)


def random_valid_config(rng, noisy: bool):
    """Random (sigma, interval, d, a0, F, phi0, phi1) meeting the lemma
    preconditions, with everything placed safely inside (-pi, pi)."""
    from fmpe.bounds import gdn_sigma_limit

    width = rng.uniform(0.8, 2.2)
    center = rng.uniform(-0.4, 0.4)
    a0 = rng.uniform(0.4, 0.95)
    F = rng.uniform(0.25, 0.9) if noisy else 1.0
    limit = gdn_sigma_limit(width, F, a0) if noisy else width / 6.0
    sigma = rng.uniform(0.4, 0.98) * limit
    d = rng.uniform(0.35, 0.9)
    interval = PromiseInterval(center, width, width / 6.0, d)
    phi0 = center + rng.uniform(-1, 1) * width / 3.0
    phi1 = interval.hi + d
    assert phi1 < np.pi
    return sigma, interval, d, a0, F, phi0, phi1
