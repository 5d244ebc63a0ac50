import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import shapiro

from fmpe._maximize import FlatObjectiveError, maximize_scan
from fmpe.angles import TWO_PI
from fmpe.kernels import Fejer, Gaussian, gaussian_interval_integral, gaussian_pdf
from fmpe.spectral import PromiseInterval, filter_samples, sample_noisy
from fmpe.estimators import (
    EstimationError,
    PhaseModel,
    TaggedSample,
    bootstrap,
    gdn_noise_weight,
    mean_estimate,
    model_log_density,
    mpe_estimate,
    nme_estimate,
    pec_average,
    shifted_rescaled_mean,
)
from fmpe.bounds import fisher_information

from helpers import two_phase_spec

IV = PromiseInterval(0.0, 2.0, 1.0 / 3.0)


def gaussian_model(sigma=0.3, **kw):
    return PhaseModel(Gaussian(sigma), IV, **kw)


class TestPhaseModel:
    def test_noiseless_peak_log_density(self):
        model = gaussian_model()
        phi = 0.2
        expect = np.log(
            gaussian_pdf(0.0, 0.3) / gaussian_interval_integral((IV.lo, IV.hi), phi, 0.3)
        )
        assert model_log_density(model, phi, phi) == pytest.approx(expect, rel=1e-10)

    def test_pure_noise_is_flat(self):
        model = gaussian_model(fidelity=0.0)
        vals = [model_log_density(model, x, p) for x in (-0.5, 0.1) for p in (-0.3, 0.7)]
        assert vals == pytest.approx([-np.log(IV.width)] * 4, rel=1e-12)

    def test_density_normalized_on_interval(self):
        for model in (gaussian_model(), gaussian_model(fidelity=1 / np.e, overlap=0.7)):
            total = quad(
                lambda x: float(model.density(x, 0.25)), IV.lo, IV.hi,
                epsabs=1e-11, limit=200,
            )[0]
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_reduces_to_plain_truncated_kernel_at_full_fidelity(self):
        # with F = 1 the overlap cancels between numerator and normalization
        a, b = gaussian_model(overlap=1.0), gaussian_model(overlap=0.52)
        xs = np.linspace(IV.lo, IV.hi, 17)
        assert a.density(xs, 0.3) == pytest.approx(np.asarray(b.density(xs, 0.3)))

    def test_log_density_raises_on_vanishing_density(self):
        # a narrow noiseless kernel underflows to an exact zero in the far tail
        model = gaussian_model(sigma=0.01)
        with pytest.raises(ValueError):
            model_log_density(model, 0.9, -0.9)

    def test_regularized_log_density_finite_at_zero(self):
        model = gaussian_model(sigma=0.01, reg_const=0.01)
        val = model_log_density(model, 0.9, -0.9)
        assert np.isfinite(val)
        assert val == pytest.approx(np.log(0.01), rel=1e-6)


class TestMeanEstimators:
    def test_mean_basic(self):
        assert mean_estimate([0.1, 0.3]).estimate == pytest.approx(0.2)
        with pytest.raises(EstimationError):
            mean_estimate([])

    def test_mean_symmetric(self):
        xs = 0.4 + np.array([-0.2, -0.1, 0.1, 0.2])
        assert mean_estimate(xs).estimate == pytest.approx(0.4)

    def test_srm_zero_weight_is_plain_mean(self):
        xs = np.array([0.1, 0.5, 0.2])
        assert shifted_rescaled_mean(xs, 0.7, w=0.0).estimate == pytest.approx(xs.mean())

    def test_srm_algebraic_inverse(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = rng.uniform(0.0, 0.95)
            phi0, phig = rng.uniform(-1, 1, 2)
            xbar = (1 - w) * phi0 + w * phig
            est = shifted_rescaled_mean([xbar, xbar], phig, w=w)
            assert est.estimate == pytest.approx(phi0, abs=1e-12)

    def test_srm_rejects_unit_weight(self):
        with pytest.raises(ValueError):
            shifted_rescaled_mean([0.1, 0.2], 0.0, w=1.0)

    def test_srm_monte_carlo_self_consistency(self):
        # true two-phase mixture with depolarizing floor; the computed noise
        # weight must undo the pull toward the interval center
        fidelity, a0, sigma = 1 / np.e, 0.52, 0.3
        width = np.pi / 2
        phig = -0.75 * np.pi
        phi0 = phig + 0.05
        iv = PromiseInterval(phig, width, width / 6)
        spec = two_phase_spec(phi0, 0.5, a0, sigma, fidelity)
        # remainder of the weight supplied by a second far spurious phase
        rng = np.random.default_rng(99)
        kept, _ = filter_samples(sample_noisy(spec, rng, 100_000), iv)
        w = gdn_noise_weight(fidelity, a0, sigma, width)
        est = shifted_rescaled_mean(
            kept, phig, fidelity=fidelity, overlap=a0, sigma=sigma, width=width
        )
        stderr = bootstrap(
            lambda s: shifted_rescaled_mean(s, phig, w=w), kept, 200,
            np.random.default_rng(3),
        )
        assert abs(est.estimate - phi0) < 3 * stderr

    def test_pec_average(self):
        assert pec_average([1.0, 1.0, 1.0], [1.0]).estimate == pytest.approx(1.0)
        assert pec_average([0.2, 0.4], []).estimate == pytest.approx(0.3)
        with pytest.raises(EstimationError):
            pec_average([0.1], [0.2])


class TestMpe:
    def test_recovers_phase_on_model_exact_data(self):
        model = gaussian_model()
        rng = np.random.default_rng(4)
        phi0 = 0.1
        xs = model.sample(phi0, rng, 10_000)
        info = fisher_information(model, phi0)
        est = mpe_estimate(xs, model)
        assert abs(est.estimate - phi0) < 4 / np.sqrt(xs.size * info)
        assert not est.at_boundary

    def test_fixed_point_identity(self):
        model = gaussian_model()
        sig = 0.3
        rng = np.random.default_rng(6)
        xs = model.sample(0.25, rng, 2000)
        est = mpe_estimate(xs, model).estimate
        G = gaussian_interval_integral((IV.lo, IV.hi), est, sig)
        rhs = xs.mean() + sig ** 2 * (
            gaussian_pdf(est - IV.hi, sig) - gaussian_pdf(est - IV.lo, sig)
        ) / G
        assert est == pytest.approx(rhs, abs=1e-5)

    def test_centered_symmetric_matches_mean(self):
        model = gaussian_model()
        xs = np.concatenate([np.linspace(-0.6, 0.6, 2001)])  # exactly symmetric
        est = mpe_estimate(xs, model).estimate
        assert est == pytest.approx(xs.mean(), abs=1e-6)

    def test_sample_requirements(self):
        model = gaussian_model()
        with pytest.raises(EstimationError):
            mpe_estimate([0.1], model)
        with pytest.raises(ValueError):
            mpe_estimate([0.1, 5.0], model)  # outside interval
        with pytest.raises(ValueError):
            mpe_estimate([0.1, 0.2], gaussian_model(reg_const=0.1))

    def test_flat_objective_raises(self):
        model = gaussian_model(fidelity=0.0)
        with pytest.raises(FlatObjectiveError):
            mpe_estimate([0.1, 0.4, -0.2], model)

    def test_boundary_flagged(self):
        model = gaussian_model(sigma=0.15)
        xs = np.full(40, IV.hi - 1e-4)
        est = mpe_estimate(xs, model)
        assert est.at_boundary

    def test_trace_kept_on_request(self):
        model = gaussian_model()
        xs = model.sample(0.0, np.random.default_rng(0), 100)
        est = mpe_estimate(xs, model, keep_trace=True)
        grid, values = est.objective_trace
        assert grid.shape == values.shape == (512,)


class TestNme:
    def test_reduces_to_mpe_with_positive_signs(self):
        model = gaussian_model()
        rng = np.random.default_rng(14)
        xs = model.sample(0.2, rng, 500)
        tagged = [TaggedSample(float(x), 0, 1) for x in xs]
        a = nme_estimate(tagged, model, alpha_norm=1.0, reg_const=0.0)
        b = mpe_estimate(xs, model)
        assert a.estimate == pytest.approx(b.estimate, abs=1e-12)

    def test_regularized_objective_finite_with_negative_branch_on_zero(self):
        model = PhaseModel(Fejer(16), IV)
        rng = np.random.default_rng(15)
        xs = model.sample(0.1, rng, 200)
        tagged = [TaggedSample(float(x), 0, 1) for x in xs]
        # negative-sign sample parked exactly on a kernel zero of many models
        tagged.append(TaggedSample(0.1 + TWO_PI / 16, 1, -1))
        est = nme_estimate(tagged, model, alpha_norm=1.5, reg_const=0.05)
        assert np.isfinite(est.estimate)

    def test_quasiprobability_unbias_on_synthetic_branches(self):
        # branch 0 = noisy mixture, branch 1 = pure uniform noise, both drawn
        # on the full circle and filtered as in the PEC sampler; the signed
        # combination recovers the clean phase while branch 0 alone is pulled
        from fmpe.angles import wrap

        fidelity = 0.5
        model = gaussian_model()
        kernel = model.kernel
        phi0 = 0.35
        rng = np.random.default_rng(16)
        shots = 60_000
        alpha = np.array([1 / fidelity, 1 - 1 / fidelity])
        alpha_norm = float(np.abs(alpha).sum())
        p1 = abs(alpha[1]) / alpha_norm
        tagged = []
        for _ in range(shots):
            branch = int(rng.random() < p1)
            if branch or rng.random() >= fidelity:
                x = rng.uniform(-np.pi, np.pi)
            else:
                x = wrap(phi0 + kernel.sample(rng))
            if IV.contains(x):
                tagged.append(TaggedSample(float(x), branch, 1 - 2 * branch))
        est = nme_estimate(tagged, model, alpha_norm=alpha_norm)
        biased = mpe_estimate([t.x for t in tagged if t.branch == 0], model)
        info = fisher_information(model, phi0)
        spread = alpha_norm / np.sqrt(len(tagged) * info)
        assert abs(est.estimate - phi0) < 4 * spread
        assert abs(biased.estimate - phi0) > abs(est.estimate - phi0)


class TestMaximizer:
    def test_shift_invariance(self):
        rng = np.random.default_rng(21)
        vals = rng.normal(size=512)

        def objective(phis, shift=0.0):
            idx = np.clip(((phis + 1) / 2 * 511).astype(int), 0, 511)
            return np.sin(3 * phis) + 0.001 * vals[idx] + shift

        base, *_ = maximize_scan(lambda p: objective(p), -1.0, 1.0)
        shifted, *_ = maximize_scan(lambda p: objective(p, shift=17.3), -1.0, 1.0)
        assert base == shifted

    def test_tie_breaks_toward_smaller_phi(self):
        # two symmetric plateaus of equal height: scan must pick the left one
        est, *_ = maximize_scan(
            lambda p: (np.abs(p) > 0.9).astype(float), -1.0, 1.0
        )
        assert est < -0.9

    def test_flat_objective_raises(self):
        with pytest.raises(FlatObjectiveError):
            maximize_scan(lambda p: np.zeros_like(p), -1.0, 1.0)


class TestConsistency:
    def test_asymptotic_normality_and_spread(self):
        # Lemma-2 behavior on model-exact data
        model = gaussian_model()
        phi0 = 0.1
        M, trials = 1000, 200
        info = fisher_information(model, phi0)
        rng = np.random.default_rng(31)
        errs = np.array(
            [mpe_estimate(model.sample(phi0, rng, M), model).estimate - phi0
             for _ in range(trials)]
        )
        eps = 1 / np.sqrt(M * info)
        assert abs(errs.mean()) < 3 * eps / np.sqrt(trials)
        assert errs.std(ddof=1) == pytest.approx(eps, rel=0.30)
        assert shapiro(errs).pvalue > 0.01

    def test_variance_tracks_fisher_information(self):
        rng = np.random.default_rng(32)
        M, trials = 1000, 60
        for sigma in (0.4, 0.2, 0.1):
            model = gaussian_model(sigma=sigma)
            info = fisher_information(model, 0.1)
            errs = np.array(
                [mpe_estimate(model.sample(0.1, rng, M), model).estimate - 0.1
                 for _ in range(trials)]
            )
            assert errs.var(ddof=1) == pytest.approx(1 / (M * info), rel=0.30)

    def test_bias_ordering_vs_mean(self):
        # spurious phase far out: moment projection beats the plain mean
        phi0, phi1, a0, sigma = 0.3, 2.6, 0.7, 0.3
        spec = two_phase_spec(phi0, phi1, a0, sigma)
        model = gaussian_model()
        rng = np.random.default_rng(33)
        kept, _ = filter_samples(sample_noisy(spec, rng, 300_000), IV)
        err_mpe = mpe_estimate(kept, model).estimate - phi0
        err_mean = mean_estimate(kept).estimate - phi0
        assert abs(err_mpe) < abs(err_mean)


class TestBootstrap:
    def test_constant_estimator_gives_zero(self):
        const = lambda s: mean_estimate([1.0, 1.0])
        assert bootstrap(const, [1.0] * 50, 100, np.random.default_rng(0)) == 0.0

    def test_mean_estimator_consistency(self):
        rng = np.random.default_rng(41)
        xs = rng.normal(0.0, 1.0, size=1000)
        stderr = bootstrap(lambda s: mean_estimate(s), xs, 1000, rng)
        assert stderr == pytest.approx(xs.std(ddof=1) / np.sqrt(xs.size), rel=0.25)

    def test_fmpe_stderr_matches_fisher_prediction(self):
        model = gaussian_model()
        phi0 = 0.1
        rng = np.random.default_rng(42)
        xs = model.sample(phi0, rng, 10_000)
        info = fisher_information(model, phi0)
        stderr = bootstrap(lambda s: mpe_estimate(s, model), xs, 120, rng)
        assert stderr == pytest.approx(1 / np.sqrt(xs.size * info), rel=0.30)

    def test_b_validation(self):
        with pytest.raises(ValueError):
            bootstrap(lambda s: mean_estimate(s), [1.0, 2.0], 50, np.random.default_rng(0))

    def test_failing_resamples_redrawn(self):
        # estimator fails whenever the resample is all-equal
        def picky(samples):
            if len(set(samples)) == 1:
                raise EstimationError("degenerate")
            return mean_estimate(samples)

        stderr = bootstrap(picky, [0.0, 1.0], 100, np.random.default_rng(5))
        assert np.isfinite(stderr)


def test_gdn_noise_weight_formula():
    from fmpe.kernels import kernel_normalization

    F, a0, sigma, width = 1 / np.e, 0.52, 0.3, np.pi / 2
    noise_mass = (1 - F) * kernel_normalization(sigma) * width / TWO_PI
    expect = noise_mass / (F * a0 + noise_mass)
    assert gdn_noise_weight(F, a0, sigma, width) == pytest.approx(expect, rel=1e-12)
