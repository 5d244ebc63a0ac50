"""Kernel functions on the circle: densities, interval integrals, scores, samplers.

Two kernels are provided, both even, non-negative and normalized on [-pi, pi):

  Gaussian(sigma):  f(x) = g_sigma(x) / M_sigma, where
                    g_sigma(x) = exp(-x^2 / 2 sigma^2) / (sqrt(2 pi) sigma)
                    M_sigma    = erf(pi / (sqrt(2) sigma))   (truncation mass)

  Fejer(K):         f(x) = (1 / (2 pi K)) * (sin(K x / 2) / sin(x / 2))^2,
                    the window of a uniform K-dimensional phase register.

Raw-Gaussian helpers (`gaussian_pdf`, `gaussian_interval_integral`,
`kernel_normalization`) expose the untruncated g_sigma and its integrals,
which the closed-form bound formulas are written in terms of; the kernel
objects themselves always use the truncated normalization so that
integral(pdf) over the circle is exactly 1.

All evaluation points are wrapped to [-pi, pi) first, so kernels behave as
genuine circle densities. Interval integrals use exact antiderivatives (the
error function for the Gaussian, the Fourier series of the Fejer kernel) and
unwind windings when the shifted interval crosses the branch cut.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erf

from .angles import TWO_PI, wrap

__all__ = [
    "Gaussian",
    "Fejer",
    "Kernel",
    "gaussian_pdf",
    "gaussian_interval_integral",
    "kernel_normalization",
    "fejer_pdf",
    "kernel_pdf",
    "kernel_sample",
    "kernel_score",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)
# |sin(x/2)| below this is treated as the removable singularity at x = 0.
_SING_EPS = 1e-9
_FEJER_CDF_GRID = 2 ** 14


def gaussian_pdf(x, sigma: float):
    """Untruncated normal density g_sigma(x)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * (x / sigma) ** 2) / (_SQRT_2PI * sigma)
    return out if out.ndim else float(out)


def gaussian_interval_integral(interval, phi: float, sigma: float) -> float:
    """G_sigma(phi) = integral of g_sigma(x - phi) over interval = [lo, hi]."""
    lo, hi = interval
    if lo >= hi:
        raise ValueError("interval must satisfy lo < hi")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    s = np.sqrt(2.0) * sigma
    return 0.5 * float(erf((hi - phi) / s) - erf((lo - phi) / s))


def kernel_normalization(sigma: float) -> float:
    """Truncation mass M_sigma = integral of g_sigma over [-pi, pi]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return float(erf(np.pi / (np.sqrt(2.0) * sigma)))


def fejer_pdf(x, K: int):
    """Continuous Fejer density of a K-dimensional uniform register."""
    if K < 2:
        raise ValueError("K must be at least 2")
    x = wrap(np.asarray(x, dtype=float))
    half = 0.5 * x
    s = np.sin(half)
    small = np.abs(s) < _SING_EPS
    num = np.sin(K * half)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (num / s) ** 2 / (TWO_PI * K)
    # limit K/(2 pi) at the removable singularity x -> 0
    out = np.where(small, K / TWO_PI, out)
    return out if out.ndim else float(out)


@lru_cache(maxsize=16)
def _fejer_fourier_coeffs(K: int) -> np.ndarray:
    """Weights (1 - m/K) / m for m = 1 .. K-1 of the Fejer Fourier series."""
    m = np.arange(1, K)
    return (1.0 - m / K) / m


def _fejer_cdf(t, K: int):
    """Exact CDF of the Fejer kernel from -pi to t, for t in [-pi, pi]."""
    t = np.asarray(t, dtype=float)
    m = np.arange(1, K)
    series = np.sin(np.multiply.outer(t, m)) @ _fejer_fourier_coeffs(K)
    out = (t + np.pi) / TWO_PI + series / np.pi
    return out if out.ndim else float(out)


@lru_cache(maxsize=8)
def _fejer_cdf_table(K: int):
    """Tabulated (grid, cdf) used by the inverse-CDF sampler."""
    grid = np.linspace(-np.pi, np.pi, _FEJER_CDF_GRID + 1)
    cdf = _fejer_cdf(grid, K)
    # clip the last entry to exactly 1 so searchsorted never overruns
    cdf[-1] = 1.0
    return grid, cdf


@dataclass(frozen=True)
class Gaussian:
    """Gaussian kernel of width sigma, truncated and renormalized on the circle."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def normalization(self) -> float:
        return kernel_normalization(self.sigma)

    def pdf(self, x):
        return gaussian_pdf(wrap(x), self.sigma) / self.normalization

    def pdf_deriv(self, x):
        x = wrap(x)
        return -x / self.sigma ** 2 * self.pdf(x)

    def pdf_deriv2(self, x):
        x = wrap(x)
        return (x ** 2 / self.sigma ** 4 - 1.0 / self.sigma ** 2) * self.pdf(x)

    def score(self, x):
        """d/dx log pdf(x) = -x / sigma^2 on the principal branch."""
        return -wrap(x) / self.sigma ** 2

    def max_pdf(self) -> float:
        return 1.0 / (_SQRT_2PI * self.sigma * self.normalization)

    def _cdf(self, t):
        lo_erf = erf(-np.pi / (np.sqrt(2.0) * self.sigma))
        val = 0.5 * (erf(np.asarray(t) / (np.sqrt(2.0) * self.sigma)) - lo_erf)
        return val / self.normalization

    def interval_integral(self, lo: float, hi: float, phi: float = 0.0) -> float:
        return _circular_interval_integral(self._cdf, lo - phi, hi - phi)

    def sample(self, rng: np.random.Generator, size=None):
        """Standard-normal draws, rejecting anything outside (-pi, pi)."""
        n = 1 if size is None else int(size)
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = rng.normal(0.0, self.sigma, size=n - filled)
            keep = draw[np.abs(draw) < np.pi]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return float(out[0]) if size is None else out

    def quad_knots(self, phi: float, lo: float, hi: float) -> np.ndarray:
        """Breakpoints for adaptive quadrature: the peak and +-6 sigma."""
        pts = phi + self.sigma * np.array([-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0])
        return pts[(pts > lo) & (pts < hi)]


@dataclass(frozen=True)
class Fejer:
    """Continuous Fejer kernel of a K-dimensional uniform register."""

    K: int

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")

    def pdf(self, x):
        return fejer_pdf(x, self.K)

    def pdf_deriv(self, x):
        x = wrap(x)
        half = 0.5 * np.asarray(x, dtype=float)
        A, B = np.sin(self.K * half), np.sin(half)
        C, Dc = np.cos(self.K * half), np.cos(half)
        small = np.abs(B) < _SING_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (self.K * A * C * B - A ** 2 * Dc) / (TWO_PI * self.K * B ** 3)
        # series about x = 0: f(x) ~ (K/2pi) (1 - (K^2-1) x^2 / 12)
        limit = -(self.K / TWO_PI) * (self.K ** 2 - 1) / 6.0 * x
        out = np.where(small, limit, out)
        return out if out.ndim else float(out)

    def pdf_deriv2(self, x):
        x = wrap(x)
        half = 0.5 * np.asarray(x, dtype=float)
        A, B = np.sin(self.K * half), np.sin(half)
        C, Dc = np.cos(self.K * half), np.cos(half)
        small = np.abs(B) < _SING_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            fs2 = (self.K * C * B - A * Dc) ** 2 / (TWO_PI * self.K * B ** 4)
            fsp = -self.K / (2.0 * TWO_PI * B ** 2) + A ** 2 / (2.0 * TWO_PI * self.K * B ** 4)
            out = fs2 + fsp
        out = np.where(small, -(self.K / TWO_PI) * (self.K ** 2 - 1) / 6.0, out)
        return out if out.ndim else float(out)

    def score(self, x):
        """d/dx log pdf = K cot(Kx/2) - cot(x/2); infinite at the kernel zeros."""
        x = wrap(x)
        half = 0.5 * np.asarray(x, dtype=float)
        A, B = np.sin(self.K * half), np.sin(half)
        small = np.abs(B) < _SING_EPS
        at_zero = (np.abs(A) < _SING_EPS) & ~small
        if np.any(at_zero):
            raise ValueError("score is not finite at a Fejer kernel zero")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.K * np.cos(self.K * half) / A - np.cos(half) / B
        out = np.where(small, -(self.K ** 2 - 1) / 6.0 * x, out)
        return out if out.ndim else float(out)

    def max_pdf(self) -> float:
        return self.K / TWO_PI

    def _cdf(self, t):
        return _fejer_cdf(t, self.K)

    def interval_integral(self, lo: float, hi: float, phi: float = 0.0) -> float:
        return _circular_interval_integral(self._cdf, lo - phi, hi - phi)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-CDF lookup on a dense grid, then linear interpolation."""
        grid, cdf = _fejer_cdf_table(self.K)
        n = 1 if size is None else int(size)
        u = rng.random(n)
        idx = np.searchsorted(cdf, u)
        idx = np.clip(idx, 1, len(cdf) - 1)
        c0, c1 = cdf[idx - 1], cdf[idx]
        frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.0)
        out = grid[idx - 1] + frac * (grid[idx] - grid[idx - 1])
        return float(out[0]) if size is None else out

    def quad_knots(self, phi: float, lo: float, hi: float) -> np.ndarray:
        """Breakpoints at the kernel zeros phi + 2 pi m / K inside (lo, hi)."""
        step = TWO_PI / self.K
        m_lo = int(np.ceil((lo - phi) / step))
        m_hi = int(np.floor((hi - phi) / step))
        pts = phi + step * np.arange(m_lo, m_hi + 1)
        return pts[(pts > lo) & (pts < hi)]


Kernel = Gaussian | Fejer


def _circular_interval_integral(cdf, a: float, b: float) -> float:
    """Integral of a circle pdf over [a, b] via its principal-branch CDF.

    cdf(t) must be the mass of [-pi, t] for t in [-pi, pi]; windings are
    unwound so shifted intervals crossing the branch cut stay exact.
    """
    if a > b:
        raise ValueError("interval must satisfy lo <= hi")

    def lifted(t):
        wind = np.floor((t + np.pi) / TWO_PI)
        return wind + cdf(t - wind * TWO_PI)

    return float(np.clip(lifted(b) - lifted(a), 0.0, None))


def kernel_pdf(kernel: Kernel, x):
    """Density of the kernel at x (wrapped to the principal branch)."""
    return kernel.pdf(x)


def kernel_sample(kernel: Kernel, rng: np.random.Generator, size=None):
    """Draw size samples (scalar when size is None) distributed as kernel.pdf."""
    return kernel.sample(rng, size)


def kernel_score(kernel: Kernel, x):
    """d/dx log pdf(x), analytic for both kernels."""
    return kernel.score(x)
