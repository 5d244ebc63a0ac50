"""Analytic bias/variance quantities for the filtered estimators.

Numerically exact versions (Fisher information, first-order bias, mean
estimator bias) are adaptive quadratures of the model score; the closed-form
lemma bounds dominate them whenever their width conditions hold:

  noiseless:  |bias| <= 4 sigma^2 g_sigma(d) (1-a0)/a0 * |D|/d,  M Var <= 2 sigma^2
              for sigma <= |D|/6
  with noise: |bias| <= 20 sigma^2 g_sigma(d) (1-a0)/a0 (1 + (1-F)/(F a0)) |D|/d,
              M Var <= 10 sigma^2 (1 + (1-F)/(F a0)) (1 + (1-F)/(2 pi F a0))
              for sigma below a width limit built from the constants
              C1 = 10.1, C2 = 0.7, C3 = 1.2.

Two forms of the noisy width condition circulate: a log^(-1/2)((1-F)/(F a0))
form that is undefined when the argument is <= 1, and the always-defined
refined form sigma <= (|D|/6) / sqrt(C3 + log(1 + C2 (|D|/2 pi) (1-F)/(F a0))).
Reports use the refined form for the validity flag and expose both.

The noisy-depth cost model T(t) = eps^-2 t^-1 e^(2 gamma t) a0^-2 and its
minimizer t* = 1/(2 gamma) close out the module.
"""

from dataclasses import dataclass

import numpy as np

from ._integrate import integrate
from ._maximize import _golden_section
from .angles import TWO_PI
from .estimators import PhaseModel
from .kernels import gaussian_pdf

__all__ = [
    "BoundReport",
    "C1",
    "C2",
    "C3",
    "fisher_information",
    "score_zero_mean_check",
    "first_order_bias",
    "mean_estimator_bias",
    "gaussian_bias_bound_noiseless",
    "gaussian_var_bound_noiseless",
    "gaussian_bounds_gdn",
    "gdn_sigma_limit",
    "gdn_sigma_limit_maintext",
    "nme_bounds",
    "cost_model_gdn",
    "optimal_depth",
]

C1 = 10.1
C2 = 0.7
C3 = 1.2

_SCORE_GRID = 4096


@dataclass(frozen=True)
class BoundReport:
    """Bias/variance bounds with the width-condition flag that gates them."""

    bias_bound: float
    variance_bound: float
    fisher_info: float = float("nan")
    valid: bool = True
    reason: str = ""


def _model_knots(model: PhaseModel, phi0: float):
    iv = model.interval
    return model.kernel.quad_knots(phi0, iv.lo, iv.hi)


def fisher_information(model: PhaseModel, phi0: float) -> float:
    """I0 = integral over D of Q(x|phi0) [d/dphi log Q]^2."""
    iv = model.interval
    if not iv.contains(phi0):
        raise ValueError("phi0 must lie inside the model interval")

    def integrand(x):
        return float(model.density(x, phi0)) * float(model.score(x, phi0)) ** 2

    return integrate(integrand, iv.lo, iv.hi, knots=_model_knots(model, phi0), tol=1e-12)


def fisher_information_curvature(model: PhaseModel, phi0: float) -> float:
    """Dual form -integral of Q d^2/dphi^2 log Q; equals I0 for normalized Q."""
    iv = model.interval

    def integrand(x):
        return -float(model.density(x, phi0)) * float(model.log_density_d2phi(x, phi0))

    return integrate(integrand, iv.lo, iv.hi, knots=_model_knots(model, phi0), tol=1e-12)


def score_zero_mean_check(model: PhaseModel, phi0: float) -> float:
    """Residual of integral Q(x|phi0) d/dphi log Q dx; 0 for a normalized model."""
    iv = model.interval

    def integrand(x):
        return float(model.density(x, phi0)) * float(model.score(x, phi0))

    return integrate(integrand, iv.lo, iv.hi, knots=_model_knots(model, phi0), tol=1e-12)


def _check_normalized(P, lo, hi, knots):
    mass = integrate(P, lo, hi, knots=knots, tol=1e-9)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"true density must be normalized on the interval (mass {mass})")


def first_order_bias(P, model: PhaseModel, phi0: float, *, knots=()) -> float:
    """First-order estimator bias: integral of (P - Q) score / I0.

    P is a callable density, normalized on the model interval.
    """
    iv = model.interval
    all_knots = np.concatenate([_model_knots(model, phi0), np.asarray(knots, dtype=float)])
    _check_normalized(P, iv.lo, iv.hi, all_knots)
    info = fisher_information(model, phi0)

    def integrand(x):
        h = float(P(x)) - float(model.density(x, phi0))
        return h * float(model.score(x, phi0))

    num = integrate(integrand, iv.lo, iv.hi, knots=all_knots, tol=1e-12)
    return num / info


def mean_estimator_bias(P, interval, phi0: float, *, knots=(), signed: bool = False) -> float:
    """|integral of P(x) x dx - phi0| on the interval (signed on request)."""
    _check_normalized(P, interval.lo, interval.hi, knots)
    first_moment = integrate(
        lambda x: float(P(x)) * x, interval.lo, interval.hi, knots=knots, tol=1e-12
    )
    bias = first_moment - phi0
    return bias if signed else abs(bias)


def gaussian_bias_bound_noiseless(
    sigma: float, d: float, a0: float, width: float
) -> BoundReport:
    """Noiseless lemma bound: 4 sigma^2 g_sigma(d) (1-a0)/a0 * width/d."""
    if d <= 0 or not (0 < a0 <= 1) or sigma <= 0 or width <= 0:
        raise ValueError("requires sigma, d, width > 0 and a0 in (0, 1]")
    valid = bool(sigma <= width / 6.0)
    bias = 4.0 * sigma ** 2 * gaussian_pdf(d, sigma) * (1.0 - a0) / a0 * width / d
    return BoundReport(
        bias_bound=bias,
        variance_bound=2.0 * sigma ** 2,
        valid=valid,
        reason="" if valid else f"requires sigma <= width/6 = {width / 6.0:.4g}",
    )


def gaussian_var_bound_noiseless(sigma: float) -> float:
    """Noiseless lemma variance bound M Var <= 2 sigma^2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return 2.0 * sigma ** 2


def gdn_sigma_limit(width: float, fidelity: float, a0: float) -> float:
    """Refined width condition (always defined):
    sigma <= (width/6) / sqrt(C3 + log(1 + C2 (width/2 pi) (1-F)/(F a0)))."""
    noise_ratio = (1.0 - fidelity) / (fidelity * a0)
    return (width / 6.0) / np.sqrt(C3 + np.log1p(C2 * width / TWO_PI * noise_ratio))


def gdn_sigma_limit_maintext(width: float, fidelity: float, a0: float) -> float | None:
    """Main-text width condition width * min(1/6, log^(-1/2)((1-F)/(F a0))).

    Returns None when the log argument is <= 1, where the form is undefined.
    """
    noise_ratio = (1.0 - fidelity) / (fidelity * a0)
    if noise_ratio <= 1.0:
        return None
    return width * min(1.0 / 6.0, 1.0 / np.sqrt(np.log(noise_ratio)))


def gaussian_bounds_gdn(
    sigma: float, d: float, a0: float, fidelity: float, width: float
) -> BoundReport:
    """Depolarizing-noise lemma bounds (20 sigma^2 / 10 sigma^2 forms)."""
    if d <= 0 or not (0 < a0 <= 1) or sigma <= 0 or width <= 0:
        raise ValueError("requires sigma, d, width > 0 and a0 in (0, 1]")
    if not (0 < fidelity <= 1):
        raise ValueError("fidelity must lie in (0, 1]")
    noise_ratio = (1.0 - fidelity) / (fidelity * a0)
    limit = gdn_sigma_limit(width, fidelity, a0)
    valid = bool(sigma <= limit)
    bias = (
        20.0
        * sigma ** 2
        * gaussian_pdf(d, sigma)
        * (1.0 - a0)
        / a0
        * (1.0 + noise_ratio)
        * width
        / d
    )
    var = 10.0 * sigma ** 2 * (1.0 + noise_ratio) * (1.0 + noise_ratio / TWO_PI)
    return BoundReport(
        bias_bound=bias,
        variance_bound=var,
        valid=valid,
        reason="" if valid else f"requires sigma <= {limit:.4g} (refined width condition)",
    )


def max_score(model: PhaseModel, phi0: float, *, regularized: bool = True) -> float:
    """Max over the interval of d/dphi log(Q + c) at phi0 (dense grid + golden)."""
    iv = model.interval
    grid = np.linspace(iv.lo, iv.hi, _SCORE_GRID)
    score_fn = model.score_reg if regularized else model.score
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(score_fn(grid, phi0), dtype=float)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    best = int(np.argmax(vals))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, _SCORE_GRID - 1)]
    refined = _golden_section(
        lambda xs: np.asarray(score_fn(xs, phi0), dtype=float), a, b, 1e-9
    )
    return max(float(vals[best]), float(score_fn(refined, phi0)))


def fisher_information_reg(model: PhaseModel, phi0: float) -> float:
    """I_c = integral over D of (Q + c) [d/dphi log(Q + c)]^2."""
    iv = model.interval

    def integrand(x):
        qc = float(model.density(x, phi0)) + model.reg_const
        return qc * float(model.score_reg(x, phi0)) ** 2

    return integrate(integrand, iv.lo, iv.hi, knots=_model_knots(model, phi0), tol=1e-12)


def nme_bounds(
    model: PhaseModel, phi0: float, alpha_norm: float, h_norm: float
) -> BoundReport:
    """Noise-unbiased estimator bounds: bias <= ||h||_1 S_c / I_c and
    M Var <= ||alpha||_1^2 S_c^2 / I_c^2."""
    if alpha_norm < 1.0:
        raise ValueError("alpha_norm is a 1-norm of a decomposition summing to 1; >= 1")
    if h_norm < 0:
        raise ValueError("h_norm must be non-negative")
    s_c = max_score(model, phi0)
    info_c = fisher_information_reg(model, phi0)
    return BoundReport(
        bias_bound=h_norm * s_c / info_c,
        variance_bound=alpha_norm ** 2 * s_c ** 2 / info_c ** 2,
        fisher_info=info_c,
    )


def cost_model_gdn(gamma: float, epsilon: float, a0: float, t: float) -> float:
    """Total unitary calls T(t) = eps^-2 t^-1 e^(2 gamma t) a0^-2."""
    if min(gamma, epsilon, a0, t) <= 0:
        raise ValueError("all cost-model arguments must be positive")
    return epsilon ** -2 * t ** -1 * np.exp(2.0 * gamma * t) * a0 ** -2


def optimal_depth(gamma: float) -> float:
    """argmin_t T(t) = 1 / (2 gamma)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 1.0 / (2.0 * gamma)
