"""Canonical angle convention: every phase lives in [-pi, pi)."""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Wrap angle(s) to the principal branch [-pi, pi)."""
    return np.mod(x + np.pi, TWO_PI) - np.pi
