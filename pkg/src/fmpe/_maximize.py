"""Deterministic 1-d maximization: coarse grid scan + golden-section refinement.

The objectives this serves (filtered log-likelihoods) can be multimodal for
sparse data, so the bracket comes from a dense scan rather than a local
search. Ties in the scan break toward the smaller abscissa, and the whole
procedure is derivative-free and reproducible.
"""

import numpy as np

SCAN_POINTS = 512
XTOL = 1e-7
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


class FlatObjectiveError(ValueError):
    """Raised when the scanned objective carries no information."""


def maximize_scan(objective, lo: float, hi: float, *, scan_points: int = SCAN_POINTS,
                  xtol: float = XTOL):
    """Maximize objective on [lo, hi].

    objective must accept a 1-d array of abscissae and return the values.
    Returns (argmax, at_boundary, grid, values); non-finite scan values are
    excluded (they only arise on measure-zero singular points).
    """
    grid = np.linspace(lo, hi, scan_points)
    values = np.asarray(objective(grid), dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        raise FlatObjectiveError("objective is non-finite everywhere on the grid")
    masked = np.where(finite, values, -np.inf)
    if masked.max() - masked[finite].min() < 1e-13:
        raise FlatObjectiveError("objective is flat on the scan grid")
    best = int(np.argmax(masked))  # first occurrence = smaller abscissa on ties
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, scan_points - 1)]
    x = _golden_section(objective, a, b, xtol)
    at_boundary = bool(min(x - lo, hi - x) <= 10 * xtol)
    return x, at_boundary, grid, values


def _golden_section(objective, a: float, b: float, xtol: float) -> float:
    def f(x):
        v = float(objective(np.array([x]))[0])
        return v if np.isfinite(v) else -np.inf

    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > xtol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)
