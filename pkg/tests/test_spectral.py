import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import ks_2samp

from fmpe.angles import TWO_PI
from fmpe.kernels import Gaussian
from fmpe.spectral import (
    FilterReport,
    NoisySpec,
    PromiseInterval,
    SpectralDistribution,
    acceptance_lower_bound,
    filter_samples,
    filtered_pdf,
    interval_mass,
    noisy_pdf,
    promise_interval_from_gap,
    qsp_rejection_sample,
    sample_noisy,
)

from helpers import two_phase_spec


class TestSpectralDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpectralDistribution([0.1], [0.5])  # weights must sum to 1
        with pytest.raises(ValueError):
            SpectralDistribution([0.1, 0.2], [1.1, -0.1])

    def test_merges_degenerate_phases(self):
        sd = SpectralDistribution([0.5, 0.5 + 1e-14, -1.0], [0.3, 0.2, 0.5])
        assert sd.phases.size == 2
        assert sd.weights[np.argmax(sd.phases)] == pytest.approx(0.5)

    def test_merge_preserves_noisy_pdf(self):
        merged = NoisySpec(
            SpectralDistribution([0.5, 0.5, -1.0], [0.3, 0.2, 0.5]), Gaussian(0.3), 0.8
        )
        plain = NoisySpec(
            SpectralDistribution([0.5, -1.0], [0.5, 0.5]), Gaussian(0.3), 0.8
        )
        xs = np.linspace(-np.pi, np.pi, 301)
        assert noisy_pdf(merged, xs) == pytest.approx(noisy_pdf(plain, xs), abs=1e-12)

    def test_text_round_trip(self):
        sd = SpectralDistribution([-2.46, -1.0, 0.3], [0.52, 0.3, 0.18])
        back = SpectralDistribution.from_text(sd.to_text())
        assert back.phases == pytest.approx(sd.phases, abs=0)
        assert back.weights == pytest.approx(sd.weights, abs=0)


class TestPromiseInterval:
    def test_from_gap_centering(self):
        iv = promise_interval_from_gap(0.0, np.pi / 2)
        assert (iv.lo, iv.hi) == pytest.approx((-np.pi / 4, np.pi / 4))
        assert iv.inner_buffer == pytest.approx(np.pi / 12)

    def test_from_gap_ising_numbers(self):
        iv = promise_interval_from_gap(-2.36, 1.46)
        assert (iv.lo, iv.hi) == pytest.approx((-3.09, -1.63), abs=1e-9)
        assert iv.inner_buffer == pytest.approx(0.2433, abs=1e-4)
        assert iv.outer_buffer == pytest.approx(0.2433, abs=1e-4)

    def test_wraparound_rejected(self):
        with pytest.raises(ValueError, match="shift"):
            promise_interval_from_gap(3.0, 1.0)

    def test_buffer_validation(self):
        with pytest.raises(ValueError):
            PromiseInterval(0.0, 1.0, 0.6)  # inner > width/2
        with pytest.raises(ValueError):
            PromiseInterval(0.0, 1.0, 0.1, -0.1)


class TestNoisyPdf:
    def test_single_phase_noiseless_equals_kernel(self):
        kernel = Gaussian(0.3)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), kernel, 1.0)
        xs = np.linspace(-1, 1, 31)
        assert noisy_pdf(spec, xs) == pytest.approx(kernel.pdf(xs), rel=1e-14)

    def test_pure_noise_is_uniform(self):
        spec = NoisySpec(SpectralDistribution([0.4], [1.0]), Gaussian(0.3), 1e-12)
        xs = np.linspace(-np.pi, np.pi, 11)
        assert noisy_pdf(spec, xs) == pytest.approx(1 / TWO_PI, rel=1e-9)

    def test_two_phase_direct_sum(self):
        phi0, phi1, a0, sig = 0.0, 1.7, 0.7, 0.3
        spec = two_phase_spec(phi0, phi1, a0, sig)
        kernel = Gaussian(sig)
        expect = a0 * kernel.pdf(phi0 - phi0) + (1 - a0) * kernel.pdf(phi0 - phi1)
        assert noisy_pdf(spec, phi0) == pytest.approx(expect, rel=1e-12)
        ref = quad(lambda x: noisy_pdf(spec, x), -np.pi, np.pi, limit=200)[0]
        assert ref == pytest.approx(1.0, abs=1e-9)


class TestIntervalMass:
    def test_wide_interval_captures_everything(self):
        iv = PromiseInterval(0.0, 4.0, 0.5)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.2), 1.0)
        assert interval_mass(spec, iv) >= 1 - 4e-9

    def test_pure_noise_mass(self):
        iv = PromiseInterval(0.3, 1.2, 0.2)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.2), 1e-15)
        assert interval_mass(spec, iv) == pytest.approx(1.2 / TWO_PI, rel=1e-9)

    def test_matches_empirical_acceptance(self):
        spec = two_phase_spec(0.1, 1.9, 0.7, 0.3, fidelity=0.6)
        iv = PromiseInterval(0.0, 2.0, 1 / 3)
        rng = np.random.default_rng(5)
        n = 10 ** 6
        xs = sample_noisy(spec, rng, n)
        frac = float(np.mean((xs >= iv.lo) & (xs <= iv.hi)))
        mass = interval_mass(spec, iv)
        assert abs(frac - mass) < 3 * np.sqrt(mass * (1 - mass) / n)

    def test_filtered_pdf_normalized(self):
        spec = two_phase_spec(0.1, 1.9, 0.7, 0.3, fidelity=0.7)
        iv = PromiseInterval(0.0, 2.0, 1 / 3)
        total = quad(
            lambda x: filtered_pdf(spec, iv, x), iv.lo, iv.hi, limit=200, epsabs=1e-11
        )[0]
        assert total == pytest.approx(1.0, abs=1e-9)


class TestAcceptanceLowerBound:
    def test_sigma_to_zero_approaches_a0(self):
        gap = 1.0
        iv = promise_interval_from_gap(0.0, gap)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.01), 1.0)
        assert acceptance_lower_bound(spec, iv, gap) == pytest.approx(1.0, abs=1e-9)

    def test_two_sigma_mass(self):
        gap = 6 * 0.2
        iv = promise_interval_from_gap(0.0, gap)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.2), 1.0)
        from scipy.special import erf

        assert acceptance_lower_bound(spec, iv, gap) == pytest.approx(
            erf(np.sqrt(2.0)), abs=1e-4
        )

    def test_dominated_by_interval_mass(self):
        # guaranteed whenever the guess is within gap/6 of the target
        rng = np.random.default_rng(20)
        for _ in range(100):
            gap = rng.uniform(0.5, 1.6)
            sigma = rng.uniform(0.05, gap / 4)
            fidelity = rng.uniform(0.3, 1.0)
            a0 = rng.uniform(0.3, 1.0)
            center = rng.uniform(-0.8, 0.8)
            phi0 = center + rng.uniform(-1, 1) * gap / 6
            iv = promise_interval_from_gap(center, gap)
            phases = [phi0] if a0 == 1.0 else [phi0, center + gap * 1.8]
            weights = [a0] if a0 == 1.0 else [a0, 1 - a0]
            if center + gap * 1.8 >= np.pi:
                continue
            spec = NoisySpec(
                SpectralDistribution(phases, weights), Gaussian(sigma), fidelity
            )
            assert acceptance_lower_bound(spec, iv, gap) <= interval_mass(spec, iv) + 1e-12


class TestSamplers:
    def test_noiseless_single_phase_ks(self):
        kernel = Gaussian(0.3)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), kernel, 1.0)
        rng = np.random.default_rng(8)
        xs = sample_noisy(spec, rng, 50_000)
        from scipy.stats import kstest

        stat = kstest(
            xs, np.vectorize(lambda u: kernel.interval_integral(-np.pi, u))
        ).statistic
        assert stat < 1.628 / np.sqrt(xs.size)

    def test_pure_noise_moments(self):
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.3), 1e-15)
        rng = np.random.default_rng(9)
        xs = sample_noisy(spec, rng, 100_000)
        assert abs(xs.mean()) < 4 * np.pi / np.sqrt(3 * xs.size)
        assert xs.var() == pytest.approx(np.pi ** 2 / 3, rel=0.02)

    def test_fig3_spec_acceptance_consistency(self):
        spec = two_phase_spec(0.1, 1.8, 0.7, 0.3)
        iv = PromiseInterval(0.0, 2.0, 1 / 3)
        rng = np.random.default_rng(10)
        xs = sample_noisy(spec, rng, 200_000)
        _, report = filter_samples(xs, iv)
        mass = interval_mass(spec, iv)
        se = np.sqrt(mass * (1 - mass) / xs.size)
        assert abs(report.empirical_acceptance - mass) < 3 * se


class TestFilterSamples:
    def test_identity_when_all_inside(self):
        iv = PromiseInterval(0.0, 2.0, 0.5)
        xs = np.array([-0.5, 0.1, 0.9])
        kept, report = filter_samples(xs, iv)
        assert kept == pytest.approx(xs)
        assert report.empirical_acceptance == 1.0

    def test_filters_and_counts(self):
        iv = PromiseInterval(0.0, 2.0, 0.5)
        kept, report = filter_samples([-2.0, 0.5, 1.5], iv)
        assert kept == pytest.approx([0.5])
        assert report.accepted == 1 and report.total_shots == 3
        assert report.empirical_acceptance == pytest.approx(1 / 3)

    def test_preserves_order(self):
        iv = PromiseInterval(0.0, 2.0, 0.5)
        kept, _ = filter_samples([0.9, -0.3, 0.2], iv)
        assert kept == pytest.approx([0.9, -0.3, 0.2])

    def test_report_validation(self):
        with pytest.raises(ValueError):
            FilterReport(5, 5, 6)


class TestQspRejection:
    def test_matches_filter_pipeline(self):
        rng = np.random.default_rng(12)
        for trial in range(5):
            a0 = rng.uniform(0.4, 1.0)
            sigma = rng.uniform(0.1, 0.4)
            fidelity = rng.uniform(0.4, 1.0)
            phi0 = rng.uniform(-0.3, 0.3)
            if a0 == 1.0:
                sd = SpectralDistribution([phi0], [1.0])
            else:
                sd = SpectralDistribution([phi0, 2.2], [a0, 1 - a0])
            spec = NoisySpec(sd, Gaussian(sigma), fidelity)
            iv = PromiseInterval(0.0, 2.0, 1 / 3)
            direct, _ = filter_samples(sample_noisy(spec, rng, 300_000), iv)
            via_qsp, _ = qsp_rejection_sample(spec, iv, rng, 100_000)
            assert ks_2samp(direct, via_qsp).pvalue > 0.01

    def test_expected_overhead_wide_interval(self):
        sigma = 0.25
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(sigma), 1.0)
        iv = PromiseInterval(0.0, 5.0, 0.8)
        rng = np.random.default_rng(13)
        _, report = qsp_rejection_sample(spec, iv, rng, 40_000)
        predicted = iv.width / (np.sqrt(TWO_PI) * sigma)
        overhead = report.total_shots / report.accepted
        assert overhead == pytest.approx(predicted, rel=0.05)

    def test_acceptance_probability_at_peak(self):
        fidelity = 0.6
        kernel = Gaussian(0.3)
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), kernel, fidelity)
        peak_acc = noisy_pdf(spec, 0.0) / kernel.max_pdf()
        floor = (1 - fidelity) / TWO_PI / kernel.max_pdf()
        assert peak_acc == pytest.approx(fidelity + floor, rel=1e-12)

    def test_empty_request(self):
        spec = NoisySpec(SpectralDistribution([0.0], [1.0]), Gaussian(0.3), 1.0)
        iv = PromiseInterval(0.0, 2.0, 0.5)
        samples, report = qsp_rejection_sample(spec, iv, np.random.default_rng(1), 0)
        assert samples.size == 0 and report.total_shots == 0


@given(
    st.floats(-0.5, 0.5),
    st.floats(0.1, 0.45),
    st.floats(0.35, 1.0),
    st.floats(0.3, 1.0),
)
@settings(max_examples=20, deadline=None)
def test_filtered_mass_below_one_property(phi0, sigma, a0, fidelity):
    if a0 == 1.0:
        sd = SpectralDistribution([phi0], [1.0])
    else:
        sd = SpectralDistribution([phi0, 2.4], [a0, 1 - a0])
    spec = NoisySpec(sd, Gaussian(sigma), fidelity)
    iv = PromiseInterval(0.0, 2.0, 1 / 3)
    mass = interval_mass(spec, iv)
    assert 0.0 < mass <= 1.0 + 1e-12
