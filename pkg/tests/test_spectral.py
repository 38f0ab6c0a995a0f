"""Tests for spectra, SNR accounting, Lorentzian fitting, and scaling studies."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from lockinsim.lockin import CpmgSequence
from lockinsim.readout import ReadoutModel, noise_variance
from lockinsim.sampler import SamplingSchedule, run_sampling, undersampled_bin
from lockinsim.signal import AcSignal, FmNoise, Tone
from lockinsim.spectral import (
    FitError,
    PowerSpectrum,
    _lorentzian_jacobian,
    _reseed_fm,
    average_spectra,
    default_noise_band,
    find_peak_bin,
    fit_lorentzian,
    lorentzian,
    measure_snr,
    noise_floor_level,
    power_spectrum,
    predicted_snr,
    scaling_study,
)

from .helpers import brute_force_power, omega_for_phi_max, two_sided_total

REFERENCE_MODEL = ReadoutModel(qnd_repetitions=260, contrast=0.35)
REFERENCE_SNR_AT_1E4_SAMPLES = 314.58121684163  # C=27.3, contrast 0.35, phi=0.5


def synthetic_spectrum(power: np.ndarray, bin_width_hz: float = 1.0) -> PowerSpectrum:
    n_bins = power.size
    num_samples = 2 * (n_bins - 1)
    return PowerSpectrum(
        power=np.asarray(power, dtype=float),
        bin_width_hz=bin_width_hz,
        sample_rate_hz=bin_width_hz * num_samples,
        num_samples=num_samples,
    )


def zero_signal_trace(num_samples: int, seed: int):
    f_ac = 1.2e6
    seq = CpmgSequence(pulse_count=16, tau_s=1.0 / (2.0 * f_ac))
    sched = SamplingSchedule.from_components(seq, REFERENCE_MODEL, 5e-4, num_samples)
    sig = AcSignal(tones=(Tone(frequency_hz=f_ac, amplitude_rad_per_s=0.0),))
    return run_sampling(sig, seq, REFERENCE_MODEL, sched, seed)


def onbin_tone_trace(num_samples: int, seed: int, phi_max: float = 0.5, fold: float = 0.31415):
    """Trace of a resonant tone whose fold lands exactly on a record bin."""
    f_ac = 1.2e6
    seq = CpmgSequence(pulse_count=16, tau_s=1.0 / (2.0 * f_ac))
    sched0 = SamplingSchedule.from_components(seq, REFERENCE_MODEL, 5e-4, num_samples)
    t_s = sched0.sampling_period_s
    fold = round(fold * num_samples) / num_samples  # land exactly on a record bin
    cycles = round(f_ac * t_s) + fold
    f_sig = cycles / t_s
    seq = CpmgSequence(pulse_count=16, tau_s=1.0 / (2.0 * f_sig))
    sched = SamplingSchedule.from_period(seq, REFERENCE_MODEL, t_s, num_samples)
    omega = omega_for_phi_max(phi_max, seq.sensing_time_s)
    sig = AcSignal(tones=(Tone(frequency_hz=f_sig, amplitude_rad_per_s=omega, phase_rad=0.6),))
    trace = run_sampling(sig, seq, REFERENCE_MODEL, sched, seed)
    return trace, undersampled_bin(f_sig, sched.sample_rate_hz, num_samples)


class TestPowerSpectrum:
    @pytest.mark.parametrize("num_samples", [17, 97, 256, 1000])
    def test_matches_direct_dft_sum(self, num_samples):
        rng = np.random.default_rng(num_samples)
        counts = rng.integers(0, 60, num_samples)
        spec = power_spectrum(counts.astype(np.int64), sample_rate_hz=100.0)
        oracle = brute_force_power(counts.astype(float))
        np.testing.assert_allclose(spec.power, oracle, rtol=1e-9, atol=1e-6)

    @pytest.mark.parametrize("num_samples", [64, 65])
    def test_total_power_matches_time_domain_energy(self, num_samples):
        rng = np.random.default_rng(3 * num_samples)
        values = rng.normal(10.0, 3.0, num_samples)
        spec = power_spectrum(values, sample_rate_hz=50.0)
        total = two_sided_total(spec.power, num_samples)
        assert total == pytest.approx(num_samples * float(np.sum(values**2)), rel=1e-10)

    def test_constant_trace_concentrates_at_dc(self):
        spec = power_spectrum(np.full(128, 7.0), sample_rate_hz=10.0)
        assert spec.power[0] == pytest.approx((128 * 7.0) ** 2, rel=1e-12)
        assert float(np.max(spec.power[1:])) <= 1e-18 * spec.power[0]

    def test_onbin_cosine_peak_power(self):
        n, amp, bin_idx = 500, 3.0, 40
        k = np.arange(n)
        values = 10.0 + amp * np.cos(2.0 * math.pi * bin_idx * k / n + 1.1)
        spec = power_spectrum(values, sample_rate_hz=1.0)
        assert spec.power[bin_idx] == pytest.approx((n * amp / 2.0) ** 2, rel=1e-10)

    def test_bin_width_is_reciprocal_duration(self):
        spec = power_spectrum(np.arange(100, dtype=np.int64), sample_rate_hz=200.0)
        assert spec.bin_width_hz == pytest.approx(2.0, rel=1e-15)
        np.testing.assert_allclose(
            spec.frequencies_hz, 2.0 * np.arange(51), rtol=1e-15
        )
        assert spec.num_bins == 51

    def test_hour_long_reference_trace_resolves_sub_millihertz(self):
        # One hour at the reference 4.21152 ms period: bin width 278 uHz.
        t_s = 4.21152e-3
        num = int(round(3600.0 / t_s))
        spec = power_spectrum(np.ones(8, dtype=np.int64), sample_rate_hz=1.0 / t_s)
        bin_width = (1.0 / t_s) / num
        assert bin_width * 1e6 == pytest.approx(278.0, abs=0.5)
        assert spec.bin_width_hz == pytest.approx((1.0 / t_s) / 8.0, rel=1e-12)

    def test_raw_array_requires_sample_rate(self):
        with pytest.raises(ValueError):
            power_spectrum(np.arange(8, dtype=np.int64))

    def test_accepts_time_trace_objects(self):
        trace = zero_signal_trace(64, 5)
        spec = power_spectrum(trace)
        assert spec.num_samples == 64
        assert spec.sample_rate_hz == pytest.approx(1.0 / trace.sampling_period_s)


class TestAverageSpectra:
    def test_mean_of_replicates(self):
        a = synthetic_spectrum(np.array([1.0, 2.0, 3.0]))
        b = synthetic_spectrum(np.array([3.0, 6.0, 9.0]))
        avg = average_spectra([a, b])
        np.testing.assert_allclose(avg.power, [2.0, 4.0, 6.0], rtol=1e-15)

    def test_rejects_mismatched_or_empty_inputs(self):
        a = synthetic_spectrum(np.array([1.0, 2.0, 3.0]))
        b = synthetic_spectrum(np.array([1.0, 2.0, 3.0]), bin_width_hz=2.0)
        with pytest.raises(ValueError):
            average_spectra([a, b])
        with pytest.raises(ValueError):
            average_spectra([])


class TestNoiseFloor:
    def test_floor_level_is_record_length_times_readout_variance(self):
        assert noise_floor_level(REFERENCE_MODEL, 4096) == pytest.approx(
            4096 * 45.34700625, rel=1e-12
        )

    def test_zero_signal_floor_mean_and_std_agree_with_model(self):
        trace = zero_signal_trace(4096, 21)
        spec = power_spectrum(trace)
        noise = spec.power[1:-1]
        level = noise_floor_level(REFERENCE_MODEL, 4096)
        n = noise.size
        mean = float(np.mean(noise))
        std = float(np.std(noise, ddof=1))
        # Exponential bins: the sample mean has std level/sqrt(n).
        assert abs(mean - level) <= 4.0 * level / math.sqrt(n)
        # and the sample std concentrates around the same level.
        assert abs(std - level) <= 6.0 * level / math.sqrt(n)

    def test_zero_signal_bins_are_exponentially_distributed(self):
        trace = zero_signal_trace(4096, 77)
        spec = power_spectrum(trace)
        noise = spec.power[1:-1]
        normalized = noise / float(np.mean(noise))
        result = stats.kstest(normalized, "expon")
        assert result.pvalue > 1e-3


class TestSnrMeasurement:
    def test_band_validation(self):
        spec = synthetic_spectrum(np.arange(1.0, 32.0))
        with pytest.raises(ValueError, match="overlaps"):
            measure_snr(spec, 10, [8, 9, 10, 11])
        with pytest.raises(ValueError, match="DC"):
            measure_snr(spec, 10, [0, 1, 2])
        with pytest.raises(ValueError, match="two bins"):
            measure_snr(spec, 10, [5])
        with pytest.raises(ValueError, match="zero variance"):
            measure_snr(synthetic_spectrum(np.full(32, 3.0)), 10, [4, 5, 6])

    def test_exact_mode_subtracts_the_noise_power_bias(self):
        spec = synthetic_spectrum(np.array([0.0, 4.0, 6.0, 100.0, 5.0, 3.0, 6.0]))
        band = [1, 2, 4, 5, 6]
        plain = measure_snr(spec, 3, band)
        exact = measure_snr(spec, 3, band, exact=True)
        assert exact.measured_snr == pytest.approx(plain.measured_snr - 1.0, rel=1e-12)

    def test_predictions_require_the_model(self):
        spec = synthetic_spectrum(np.array([0.0, 4.0, 6.0, 100.0, 5.0, 3.0, 6.0]))
        report = measure_snr(spec, 3, [1, 2, 4, 5])
        assert math.isnan(report.predicted_snr_ideal)
        with pytest.raises(ValueError):
            measure_snr(spec, 3, [1, 2, 4, 5], model=REFERENCE_MODEL)

    def test_reference_prediction_value(self):
        assert predicted_snr(0.5, 10_000, REFERENCE_MODEL) == pytest.approx(
            REFERENCE_SNR_AT_1E4_SAMPLES, rel=1e-10
        )

    def test_prediction_doubles_with_record_length(self):
        one = predicted_snr(0.4, 50_000, REFERENCE_MODEL)
        two = predicted_snr(0.4, 100_000, REFERENCE_MODEL)
        assert two == pytest.approx(2.0 * one, rel=1e-14)

    def test_prediction_saturates_at_projection_noise_limit(self):
        # As the gain grows, shot noise becomes negligible and the SNR
        # approaches N phi^2 / 4.
        huge_gain = ReadoutModel(
            qnd_repetitions=1_000_000, contrast=0.35, gain_slope_photons=1.0
        )
        value = predicted_snr(0.3, 2_000, huge_gain)
        assert value == pytest.approx(2_000 * 0.09 / 4.0, rel=1e-3)

    def test_depolarization_costs_the_squared_survival(self):
        model = ReadoutModel(
            qnd_repetitions=2000, contrast=0.35, depolarization_per_readout=1.4e-4
        )
        ideal = predicted_snr(0.5, 10_000, model)
        depol = predicted_snr(0.5, 10_000, model, depolarized=True)
        assert depol == pytest.approx(ideal * math.exp(-0.56), rel=1e-12)

    def test_depolarized_gain_curve_peaks_near_840_readouts(self):
        # With the reference depolarization rate the analytic SNR-vs-n curve
        # has an interior optimum far above the threshold gain, and reaches
        # 80% of that optimum already near n = 283.
        ns = np.arange(10, 2001)
        curve = np.array(
            [
                predicted_snr(
                    0.5,
                    30_000,
                    ReadoutModel(
                        qnd_repetitions=int(n),
                        contrast=0.35,
                        depolarization_per_readout=1.4e-4,
                    ),
                    depolarized=True,
                )
                for n in ns
            ]
        )
        best = int(ns[np.argmax(curve)])
        knee = int(ns[np.argmax(curve >= 0.8 * np.max(curve))])
        assert best == 838
        assert knee == 283
        assert curve[-1] < 0.9 * np.max(curve)

    def test_measured_snr_tracks_the_prediction(self):
        num = 30_000
        trace, peak = onbin_tone_trace(num, seed=910)
        spec = power_spectrum(trace)
        found = find_peak_bin(spec)
        assert found == peak
        band = default_noise_band(spec, [peak])
        report = measure_snr(spec, peak, band, model=REFERENCE_MODEL, phi_max=0.5)
        assert report.measured_snr == pytest.approx(report.predicted_snr_ideal, rel=0.2)

    def test_find_peak_ties_resolve_to_the_lowest_bin(self):
        power = np.ones(33)
        power[7] = power[21] = 50.0
        assert find_peak_bin(synthetic_spectrum(power)) == 7
        with pytest.raises(ValueError):
            find_peak_bin(synthetic_spectrum(power), 40, 10)

    def test_default_noise_band_guards_signal_dc_and_nyquist(self):
        spec = synthetic_spectrum(np.ones(201))
        band = default_noise_band(spec, [100], linewidth_bins=1.0, guard_linewidths=10.0)
        assert 0 not in band
        assert 200 not in band
        assert np.all(np.abs(band - 100) > 9)
        sub_bin = default_noise_band(spec, [100], linewidth_bins=0.2)
        np.testing.assert_array_equal(band, sub_bin)  # linewidth floors at one bin


class TestLorentzianFit:
    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        freqs = np.linspace(0.0, 100.0, 73)
        for _ in range(10):
            center = float(rng.uniform(20.0, 80.0))
            width = float(rng.uniform(0.5, 10.0))
            amp = float(rng.uniform(1.0, 100.0))
            jac = _lorentzian_jacobian(freqs, center, width, amp)
            for column, (name, step) in enumerate(
                [("center", 1e-5), ("width", 1e-6), ("amplitude", 1e-6)]
            ):
                params = [center, width, amp, 0.0]
                hi, lo = list(params), list(params)
                hi[column] += step
                lo[column] -= step
                numeric = (lorentzian(freqs, *hi) - lorentzian(freqs, *lo)) / (2 * step)
                np.testing.assert_allclose(
                    jac[:, column], numeric, rtol=1e-5, atol=1e-7 * max(1.0, amp / width)
                )
            np.testing.assert_allclose(jac[:, 3], np.ones(freqs.size))

    def test_noiseless_lorentzian_is_recovered_exactly(self):
        freqs = np.arange(2049.0)
        power = lorentzian(freqs, 1000.0, 8.0, 50.0, 5.0)
        spec = synthetic_spectrum(power)
        fit = fit_lorentzian(spec, (960, 1041))
        assert fit.converged
        assert fit.center_hz == pytest.approx(1000.0, abs=1e-9)
        assert fit.width_hz == pytest.approx(8.0, rel=1e-9)
        assert fit.amplitude == pytest.approx(50.0, rel=1e-9)
        assert fit.offset == pytest.approx(5.0, rel=1e-9)
        assert fit.sigma_center_hz < 1e-10

    def test_explicit_init_converges_to_the_same_solution(self):
        freqs = np.arange(2049.0)
        rng = np.random.default_rng(4)
        power = lorentzian(freqs, 1000.0, 8.0, 50.0, 5.0) + rng.normal(0, 0.5, freqs.size)
        spec = synthetic_spectrum(np.maximum(power, 0.0))
        auto = fit_lorentzian(spec, (960, 1041))
        seeded = fit_lorentzian(spec, (960, 1041), init=(990.0, 3.0, 20.0, 1.0))
        assert seeded.center_hz == pytest.approx(auto.center_hz, abs=1e-6)
        assert seeded.width_hz == pytest.approx(auto.width_hz, rel=1e-6)

    def test_center_uncertainty_agrees_with_parametric_bootstrap(self):
        # Homoscedastic Gaussian noise on a resolved line: the covariance
        # route and a 200-replicate parametric bootstrap must agree within
        # a factor of 1.5.
        freqs = np.arange(2049.0)
        clean = lorentzian(freqs, 1000.0, 8.0, 50.0, 5.0)
        fit = fit_lorentzian(
            synthetic_spectrum(
                np.maximum(clean + np.random.default_rng(404).normal(0, 1.0, freqs.size), 0.0)
            ),
            (960, 1041),
        )
        centers = np.empty(200)
        for b in range(200):
            rng = np.random.default_rng(1000 + b)
            noisy = np.maximum(clean + rng.normal(0, 1.0, freqs.size), 0.0)
            centers[b] = fit_lorentzian(synthetic_spectrum(noisy), (960, 1041)).center_hz
        bootstrap = float(np.std(centers, ddof=1))
        assert 1.0 / 1.5 <= fit.sigma_center_hz / bootstrap <= 1.5

    def test_resolution_limited_peak_pins_the_width_floor(self):
        power = np.full(201, 2.0)
        power[100] = 5000.0
        spec = synthetic_spectrum(power, bin_width_hz=0.5)
        fit = fit_lorentzian(spec, (80, 121))
        assert fit.converged
        assert fit.width_hz == pytest.approx(0.25 * 0.5, rel=1e-12)
        assert fit.center_hz == pytest.approx(100 * 0.5, abs=1e-6)

    def test_lowering_the_floor_exposes_the_width_degeneracy(self):
        # A single-bin spike has no identifiable sub-bin width: without the
        # default floor the optimizer rides the width to whatever bound it
        # is given.
        power = np.full(201, 2.0)
        power[100] = 5000.0
        spec = synthetic_spectrum(power, bin_width_hz=0.5)
        fit = fit_lorentzian(spec, (80, 121), width_floor_bins=0.02)
        assert fit.width_hz == pytest.approx(0.02 * 0.5, rel=1e-9)

    def test_window_must_span_at_least_five_bins(self):
        spec = synthetic_spectrum(np.ones(64))
        with pytest.raises(ValueError):
            fit_lorentzian(spec, (10, 14))

    def test_featureless_window_raises_fit_error(self):
        spec = synthetic_spectrum(np.full(64, 3.0))
        with pytest.raises(FitError):
            fit_lorentzian(spec, (10, 40))


def coherent_study_signal(phi_max=0.25, f_ac=1.2e6, pulse_count=32):
    tau = 1.0 / (2.0 * f_ac)
    seq = CpmgSequence(pulse_count=pulse_count, tau_s=tau)
    omega = omega_for_phi_max(phi_max, seq.sensing_time_s)
    sig = AcSignal(tones=(Tone(frequency_hz=f_ac, amplitude_rad_per_s=omega, phase_rad=0.7),))
    model = ReadoutModel(qnd_repetitions=498, contrast=0.35)
    t_s = 20160.31 / f_ac
    dead = t_s - seq.sensing_time_s - model.readout_time_s
    return sig, seq, model, dead


class TestScalingStudy:
    def test_validates_the_duration_ladder(self):
        sig, seq, model, dead = coherent_study_signal()
        with pytest.raises(ValueError):
            scaling_study(sig, seq, model, dead, [4130], seed=1)
        with pytest.raises(ValueError):
            scaling_study(sig, seq, model, dead, [4130, 160_030], seed=1)
        with pytest.raises(ValueError):
            scaling_study(sig, seq, model, dead, [4130, 5230], seed=1, seeds_per_point=0)

    def test_coherent_smoke_study_reports_unresolved_regime(self):
        sig, seq, model, dead = coherent_study_signal()
        result = scaling_study(
            sig, seq, model, dead, [4130, 5230, 6730], seed=11, seeds_per_point=2
        )
        assert result.durations_s.shape == (3,)
        assert np.all(np.isfinite(result.width_hz))
        assert np.all(result.sigma_center_hz > 0.0)
        assert not result.resolved_mask.any()
        assert result.intrinsic_width_hz == 0.0
        # A zero-linewidth tone fits at the resolution floor everywhere.
        np.testing.assert_allclose(result.width_hz, 0.25 * result.bin_width_hz, rtol=1e-6)
        assert result.width_slope_unresolved is not None
        assert result.sigma_center_slope_unresolved is not None
        assert result.width_plateau_hz is None
        assert result.sigma_center_slope_resolved is None

    def test_fm_reseeding_is_deterministic_and_leaves_coherent_signals_alone(self):
        sig, seq, model, dead = coherent_study_signal()
        assert _reseed_fm(sig, (1, 2, 3)) is sig
        broadened = AcSignal(
            tones=sig.tones, fm=FmNoise(linewidth_hz=7.6e-4, rng_seed=5)
        )
        a = _reseed_fm(broadened, (1, 2, 3))
        b = _reseed_fm(broadened, (1, 2, 3))
        c = _reseed_fm(broadened, (1, 2, 4))
        assert a.fm.rng_seed == b.fm.rng_seed
        assert a.fm.rng_seed != c.fm.rng_seed
        assert a.fm.linewidth_hz == broadened.fm.linewidth_hz
