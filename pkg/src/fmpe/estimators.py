"""Single-phase models and the six phase estimators.

The parametric model on a promise interval D is

    q(x|phi) = F a0 f(x - phi) + (1 - F) / (2 pi),
    Q(x|phi) = q(x|phi) / N(phi),       N(phi) = integral of q over D,

which reduces to the plain truncated kernel when F = 1. Estimators:

  mean_estimate           arithmetic mean of the filtered samples
  shifted_rescaled_mean   inverts E[x] = (1-w) phi0 + w phi_guess
  pec_average             signed quasiprobability average of two branches
  mpe_estimate            maximizes the mean log-likelihood of Q over D
  nme_estimate            maximizes the signed (quasiprobability) version,
                          optionally regularized by a constant added to Q
  bootstrap               resampling standard error for any of the above

Likelihood maximization is a 512-point scan plus golden-section refinement
to 1e-7 rad (see _maximize); boundary maxima are flagged, not rejected.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._maximize import FlatObjectiveError, maximize_scan
from .angles import TWO_PI, wrap
from .kernels import Kernel, kernel_normalization
from .spectral import PromiseInterval

__all__ = [
    "PhaseModel",
    "TaggedSample",
    "EstimateReport",
    "EstimationError",
    "model_log_density",
    "mean_estimate",
    "gdn_noise_weight",
    "shifted_rescaled_mean",
    "pec_average",
    "mpe_estimate",
    "nme_estimate",
    "bootstrap",
]


class EstimationError(RuntimeError):
    """An estimator could not produce a value from the given samples."""


@dataclass(frozen=True)
class TaggedSample:
    """A phase sample with its quasiprobability branch and sign."""

    x: float
    branch: int
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")


@dataclass
class EstimateReport:
    """Point estimate with bootstrap uncertainty and shot accounting."""

    estimate: float
    bootstrap_stderr: float = float("nan")
    accepted: int = 0
    total_shots: int = 0
    at_boundary: bool = False
    objective_trace: tuple | None = None


@dataclass
class PhaseModel:
    """Parametric filtered single-phase distribution Q(x|phi) on an interval."""

    kernel: Kernel
    interval: PromiseInterval
    fidelity: float = 1.0
    overlap: float = 1.0
    reg_const: float = 0.0
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not (0 <= self.fidelity <= 1):
            raise ValueError("fidelity must lie in [0, 1]")
        if not (0 < self.overlap <= 1):
            raise ValueError("overlap must lie in (0, 1]")
        if self.reg_const < 0:
            raise ValueError("reg_const must be non-negative")

    # -- unnormalized density and its phi-derivatives ------------------------

    def unnorm(self, x, phi):
        """q(x|phi); with an array phi, returns the (x, phi) outer evaluation."""
        x = np.asarray(x, dtype=float)
        shifted = np.subtract.outer(x, np.asarray(phi, dtype=float)) if np.ndim(phi) else x - phi
        val = self.fidelity * self.overlap * self.kernel.pdf(shifted)
        return val + (1.0 - self.fidelity) / TWO_PI

    def unnorm_dphi(self, x, phi):
        shifted = np.asarray(x, dtype=float) - phi
        return -self.fidelity * self.overlap * self.kernel.pdf_deriv(shifted)

    def unnorm_d2phi(self, x, phi):
        shifted = np.asarray(x, dtype=float) - phi
        return self.fidelity * self.overlap * self.kernel.pdf_deriv2(shifted)

    # -- normalization over the interval -------------------------------------

    def norm(self, phi):
        """N(phi) = integral of q(x|phi) over the interval (exact)."""
        iv = self.interval
        floor = (1.0 - self.fidelity) * iv.width / TWO_PI
        if np.ndim(phi):
            phi = np.asarray(phi, dtype=float)
            key = (phi[0], phi[-1], phi.size)
            cached = self._norm_cache.get(key)
            if cached is None:
                cached = np.array(
                    [self.kernel.interval_integral(iv.lo, iv.hi, p) for p in phi]
                )
                self._norm_cache[key] = cached
            return self.fidelity * self.overlap * cached + floor
        signal = self.kernel.interval_integral(iv.lo, iv.hi, float(phi))
        return self.fidelity * self.overlap * signal + floor

    def norm_dphi(self, phi: float) -> float:
        """N'(phi) = F a0 [f(lo - phi) - f(hi - phi)]."""
        iv = self.interval
        return self.fidelity * self.overlap * float(
            self.kernel.pdf(iv.lo - phi) - self.kernel.pdf(iv.hi - phi)
        )

    def norm_d2phi(self, phi: float) -> float:
        iv = self.interval
        return self.fidelity * self.overlap * float(
            self.kernel.pdf_deriv(iv.hi - phi) - self.kernel.pdf_deriv(iv.lo - phi)
        )

    # -- normalized model -----------------------------------------------------

    def density(self, x, phi):
        """Q(x|phi), normalized on the interval (reg_const not included)."""
        return self.unnorm(x, phi) / self.norm(phi)

    def log_density(self, x, phi):
        """log(Q(x|phi) + reg_const); the plain log-model when reg_const = 0."""
        q = self.density(x, phi)
        with np.errstate(divide="ignore"):
            return np.log(q + self.reg_const)

    def score(self, x, phi0: float):
        """d/dphi log Q(x|phi) at phi0 (reg_const not included)."""
        return self.unnorm_dphi(x, phi0) / self.unnorm(x, phi0) - (
            self.norm_dphi(phi0) / self.norm(phi0)
        )

    def score_reg(self, x, phi0: float):
        """d/dphi log(Q + reg_const) at phi0."""
        q = self.density(x, phi0)
        dq = (
            self.unnorm_dphi(x, phi0)
            - self.unnorm(x, phi0) * self.norm_dphi(phi0) / self.norm(phi0)
        ) / self.norm(phi0)
        return dq / (q + self.reg_const)

    def log_density_d2phi(self, x, phi0: float):
        """Second phi-derivative of log Q at phi0 (reg_const = 0 form)."""
        q = self.unnorm(x, phi0)
        dq = self.unnorm_dphi(x, phi0)
        d2q = self.unnorm_d2phi(x, phi0)
        n, dn, d2n = self.norm(phi0), self.norm_dphi(phi0), self.norm_d2phi(phi0)
        return (d2q * q - dq ** 2) / q ** 2 - (d2n * n - dn ** 2) / n ** 2

    def sample(self, phi0: float, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw model-exact samples from Q(.|phi0) on the interval."""
        iv = self.interval
        signal_w = self.fidelity * self.overlap * self.kernel.interval_integral(
            iv.lo, iv.hi, phi0
        )
        floor_w = (1.0 - self.fidelity) * iv.width / TWO_PI
        p_signal = signal_w / (signal_w + floor_w)
        out = np.empty(size)
        n_signal = int(rng.binomial(size, p_signal))
        got = 0
        while got < n_signal:
            draw = wrap(phi0 + self.kernel.sample(rng, size=n_signal - got))
            keep = draw[iv.contains(draw)]
            out[got:got + keep.size] = keep
            got += keep.size
        out[n_signal:] = rng.uniform(iv.lo, iv.hi, size=size - n_signal)
        rng.shuffle(out)
        return out


def model_log_density(model: PhaseModel, x, phi):
    """log(Q(x|phi) + reg_const); raises if the density is not finite."""
    val = model.log_density(x, phi)
    if model.reg_const == 0 and not np.all(np.isfinite(val)):
        raise ValueError("model density vanished; log-density is not finite")
    return val


def _report(estimate, samples_len, **kw):
    return EstimateReport(
        estimate=float(estimate),
        accepted=samples_len,
        total_shots=kw.pop("total_shots", samples_len),
        **kw,
    )


def mean_estimate(samples) -> EstimateReport:
    """Arithmetic mean of the accepted samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EstimationError("mean estimator needs at least one sample")
    return _report(samples.mean(), samples.size)


def gdn_noise_weight(fidelity: float, overlap: float, sigma: float, width: float) -> float:
    """Weight w of the uniform-noise mean in E[x] = (1-w) phi0 + w phi_guess.

    w = (1-F) (M_sigma / 2 pi) |D| / (F a0 + (1-F) (M_sigma / 2 pi) |D|),
    the in-interval noise mass relative to the total acceptance (with the
    signal mass approximated by F a0, exact up to exponentially small tails).
    """
    noise_mass = (1.0 - fidelity) * kernel_normalization(sigma) * width / TWO_PI
    return noise_mass / (fidelity * overlap + noise_mass)


def shifted_rescaled_mean(
    samples,
    phi_guess: float,
    w: float | None = None,
    *,
    fidelity: float | None = None,
    overlap: float | None = None,
    sigma: float | None = None,
    width: float | None = None,
) -> EstimateReport:
    """Noise-corrected mean (xbar - w phi_guess) / (1 - w).

    When w is not supplied it is computed from (fidelity, overlap, sigma,
    width) via gdn_noise_weight.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EstimationError("mean estimator needs at least one sample")
    if w is None:
        if None in (fidelity, overlap, sigma, width):
            raise ValueError("supply w or all of (fidelity, overlap, sigma, width)")
        w = gdn_noise_weight(fidelity, overlap, sigma, width)
    if not (0 <= w < 1):
        raise ValueError("noise weight w must lie in [0, 1)")
    estimate = (samples.mean() - w * phi_guess) / (1.0 - w)
    return _report(estimate, samples.size)


def pec_average(x0, x1) -> EstimateReport:
    """Signed quasiprobability average (sum X0 - sum X1) / (M0 - M1)."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.size == x1.size:
        raise EstimationError("PEC average is degenerate when |X0| = |X1|")
    estimate = (x0.sum() - x1.sum()) / (x0.size - x1.size)
    return _report(estimate, x0.size + x1.size)


def _scan_grid_log_density(model: PhaseModel, samples: np.ndarray, grid: np.ndarray):
    """Matrix of log(Q(x_j|phi_i) + c) for the scan grid, shape (M, G)."""
    q = model.unnorm(samples, grid) / model.norm(grid)
    with np.errstate(divide="ignore"):
        return np.log(q + model.reg_const)


def mpe_estimate(samples, model: PhaseModel, *, keep_trace: bool = False) -> EstimateReport:
    """Moment-projection estimate: argmax over D of the mean log-likelihood."""
    if model.reg_const != 0:
        raise ValueError("mpe_estimate requires reg_const = 0 (use nme_estimate)")
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise EstimationError("moment projection needs at least two samples")
    if not np.all(model.interval.contains(samples)):
        raise ValueError("all samples must lie inside the model interval")

    def objective(phis):
        return _scan_grid_log_density(model, samples, phis).mean(axis=0)

    est, at_boundary, grid, values = maximize_scan(
        objective, model.interval.lo, model.interval.hi
    )
    return _report(
        est,
        samples.size,
        at_boundary=at_boundary,
        objective_trace=(grid, values) if keep_trace else None,
    )


def nme_estimate(
    tagged_samples: Sequence[TaggedSample],
    model: PhaseModel,
    alpha_norm: float = 1.0,
    reg_const: float | None = None,
    *,
    keep_trace: bool = False,
) -> EstimateReport:
    """Noise-unbiased moment projection over signed quasiprobability samples.

    Maximizes (||alpha||_1 / M) sum_j sgn_j log(Q(x_j|phi) + c)
              + c * integral over D of log(Q(x|phi) + c) dx.
    """
    if reg_const is None:
        reg_const = model.reg_const
    if reg_const < 0:
        raise ValueError("reg_const must be non-negative")
    xs = np.array([s.x for s in tagged_samples], dtype=float)
    signs = np.array([s.sign for s in tagged_samples], dtype=float)
    if xs.size < 2:
        raise EstimationError("noise-unbiased projection needs at least two samples")
    if not np.all(model.interval.contains(xs)):
        raise ValueError("all samples must lie inside the model interval")
    work = PhaseModel(
        kernel=model.kernel,
        interval=model.interval,
        fidelity=model.fidelity,
        overlap=model.overlap,
        reg_const=reg_const,
        _norm_cache=model._norm_cache,
    )

    if reg_const > 0:
        from ._integrate import integrate

        iv = work.interval

        def reg_term(phi):
            return reg_const * integrate(
                lambda x: float(work.log_density(x, phi)),
                iv.lo,
                iv.hi,
                knots=work.kernel.quad_knots(phi, iv.lo, iv.hi),
                tol=1e-9,
            )
    else:
        def reg_term(phi):
            return 0.0

    def objective(phis):
        logq = _scan_grid_log_density(work, xs, phis)
        base = alpha_norm * (signs @ logq) / xs.size
        return base + np.array([reg_term(p) for p in phis])

    est, at_boundary, grid, values = maximize_scan(
        objective, work.interval.lo, work.interval.hi
    )
    return _report(
        est,
        xs.size,
        at_boundary=at_boundary,
        objective_trace=(grid, values) if keep_trace else None,
    )


def bootstrap(
    estimator: Callable[[Sequence], EstimateReport],
    samples: Sequence,
    B: int,
    rng: np.random.Generator,
) -> float:
    """Standard deviation of the estimator over B with-replacement resamples.

    Tagged samples are resampled as whole records. A resample on which the
    estimator fails is redrawn, up to 10 B attempts in total.
    """
    if B < 100:
        raise ValueError("bootstrap needs B >= 100 resamples")
    samples = list(samples)
    n = len(samples)
    estimates = []
    attempts = 0
    while len(estimates) < B:
        if attempts >= 10 * B:
            raise EstimationError("bootstrap exceeded its retry budget")
        attempts += 1
        idx = rng.integers(0, n, size=n)
        resample = [samples[i] for i in idx]
        try:
            estimates.append(estimator(resample).estimate)
        except (EstimationError, FlatObjectiveError):
            continue
    return float(np.std(estimates, ddof=1))
