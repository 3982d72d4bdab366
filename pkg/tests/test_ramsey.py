import math

import numpy as np
import pytest

from dqubit.ramsey import (
    NoiseModel,
    benchmark_suite,
    calibrate_noise,
    calibrate_residual_rate,
    fit_t2star,
    ramsey_scan,
)


def delays_for(t2, n=16):
    return np.linspace(t2 / 20, 2.4 * t2, n)


class TestNoiseModel:
    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(sigma_b_mg=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(harmonics=((0.0, 1.0),))

    def test_power_line_constructor(self):
        n = NoiseModel.with_power_line(0.5, 0.2, fundamental_hz=60.0, n_harmonics=3)
        assert [f for f, _ in n.harmonics] == [60.0, 120.0, 180.0]
        assert n.harmonics[0][1] == pytest.approx(0.2)


class TestRamseyScan:
    def test_no_dephasing_channel_keeps_full_contrast(self):
        scan = ramsey_scan(0.0, NoiseModel(), delays_for(1e-4), shots=400, seed=0)
        assert (scan.contrast == 1.0).all()

    def test_insensitive_qubit_ignores_field_noise_exactly(self):
        # first-order phase variance is identically zero, not merely small
        loud = NoiseModel(sigma_b_mg=50.0, harmonics=((60.0, 30.0),))
        scan = ramsey_scan(0.0, loud, delays_for(1e-4), shots=300, seed=3)
        assert (scan.contrast == 1.0).all()

    def test_zero_delay_limit_has_full_contrast(self):
        noise = NoiseModel(sigma_b_mg=1.0)
        delays = np.linspace(1e-9, 3e-4, 12)
        scan = ramsey_scan(2.8, noise, delays, shots=4000, seed=1)
        assert scan.contrast[0] == pytest.approx(1.0, abs=0.05)

    def test_deterministic_per_seed(self):
        noise = NoiseModel(sigma_b_mg=0.8)
        a = ramsey_scan(2.8, noise, delays_for(1e-4), 300, seed=5)
        b = ramsey_scan(2.8, noise, delays_for(1e-4), 300, seed=5)
        assert np.array_equal(a.probabilities, b.probabilities)

    def test_shot_noise_spread_matches_binomial(self):
        noise = NoiseModel(sigma_b_mg=0.84)
        delays = delays_for(96e-6, n=8)
        shots = 400
        samples = np.array(
            [ramsey_scan(2.8, noise, delays, shots, seed=s).probabilities for s in range(150)]
        )
        spread = samples.std(axis=0, ddof=1)
        p = samples.mean(axis=0)
        # quasi-static noise adds variance beyond the binomial floor; the
        # combined spread stays within a modest factor of it
        binom = np.sqrt(p * (1 - p) / shots)
        ratio = spread / binom
        assert (ratio < 2.5).all() and (ratio > 0.6).all()

    def test_fringe_readout_oscillates(self):
        noise = NoiseModel()
        delays = np.linspace(1e-6, 200e-6, 40)
        scan = ramsey_scan(0.0, noise, delays, 2000, seed=9, readout="fringe",
                           fringe_detuning_hz=20e3)
        assert scan.probabilities.min() < 0.2
        assert scan.probabilities.max() > 0.8

    def test_harmonic_noise_dephases_sensitive_qubit(self):
        quiet = NoiseModel()
        hum = NoiseModel(harmonics=((60.0, 1.5),))
        delays = delays_for(150e-6)
        c_quiet = ramsey_scan(2.8, quiet, delays, 3000, seed=2).contrast
        c_hum = ramsey_scan(2.8, hum, delays, 3000, seed=2).contrast
        assert c_hum[-4:].mean() < c_quiet[-4:].mean() - 0.2

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            ramsey_scan(2.8, NoiseModel(), delays_for(1e-4), 0, seed=0)
        with pytest.raises(ValueError):
            ramsey_scan(2.8, NoiseModel(), delays_for(1e-4), 10, seed=0, readout="parity")


class TestFitT2:
    def test_round_trip(self):
        sens = 2.8
        sigma = calibrate_noise(96e-6, sens)
        scan = ramsey_scan(sens, NoiseModel(sigma_b_mg=sigma), delays_for(96e-6), 10_000, seed=3)
        fit = fit_t2star(scan)
        assert fit.t2_s == pytest.approx(96e-6, rel=0.05)
        assert not fit.at_upper_bound and not fit.at_lower_bound

    def test_flat_contrast_pins_upper_bound(self):
        scan = ramsey_scan(0.0, NoiseModel(), delays_for(1e-4), 500, seed=4)
        fit = fit_t2star(scan)
        assert fit.at_upper_bound

    def test_dead_contrast_flags_lower_bound(self):
        noise = NoiseModel(residual_rate_per_s=5e6)  # kills contrast immediately
        scan = ramsey_scan(0.0, noise, delays_for(1e-4), 500, seed=5)
        fit = fit_t2star(scan)
        assert fit.at_lower_bound

    def test_too_few_delays_rejected(self):
        scan = ramsey_scan(0.0, NoiseModel(), delays_for(1e-4, n=4), 100, seed=0)
        with pytest.raises(ValueError):
            fit_t2star(scan)


class TestCalibration:
    def test_closed_form_round_trip(self):
        sigma = calibrate_noise(96e-6, 2.8)
        scan = ramsey_scan(2.8, NoiseModel(sigma_b_mg=sigma), delays_for(96e-6), 20_000, seed=8)
        assert fit_t2star(scan).t2_s == pytest.approx(96e-6, rel=0.05)

    def test_inverse_proportionality(self):
        assert calibrate_noise(1e-4, 5.6) == pytest.approx(calibrate_noise(1e-4, 2.8) / 2)

    def test_infinite_target_gives_zero(self):
        assert calibrate_noise(math.inf, 2.8) == 0.0

    def test_zero_sensitivity_rejected(self):
        with pytest.raises(ValueError):
            calibrate_noise(1e-4, 0.0)

    def test_residual_rate_generate_and_fit(self):
        rate = calibrate_residual_rate(350e-6, shots=8000, seed=6)
        scan = ramsey_scan(
            0.0, NoiseModel(residual_rate_per_s=rate), delays_for(350e-6), 8000, seed=6
        )
        assert fit_t2star(scan).t2_s == pytest.approx(350e-6, rel=0.05)


class TestSensitivityScaling:
    def test_t2_scales_inversely_with_sensitivity(self):
        sigma = 0.8
        fitted = []
        for sens in (1.0, 2.0, 4.0):
            expected = math.sqrt(2) / (2 * math.pi * sens * 1e3 * sigma)
            scan = ramsey_scan(
                sens, NoiseModel(sigma_b_mg=sigma), delays_for(expected), 10_000, seed=17
            )
            fitted.append(fit_t2star(scan).t2_s)
        assert fitted[0] / fitted[1] == pytest.approx(2.0, rel=0.1)
        assert fitted[1] / fitted[2] == pytest.approx(2.0, rel=0.1)


@pytest.fixture(scope="module")
def rows():
    return benchmark_suite(seed=11, shots=10_000)


class TestBenchmarkSuite:

    def test_row_labels_and_sensitivities(self, rows):
        assert [r.label for r in rows] == ["s-doublet", "d-edge-pair", "synthetic-d1d2"]
        assert rows[0].sensitivity_khz_per_mg == pytest.approx(2.8)
        assert rows[1].sensitivity_khz_per_mg == pytest.approx(2.24)
        assert rows[2].sensitivity_khz_per_mg == 0.0

    def test_coherence_ordering_and_ratio(self, rows):
        t2 = [r.t2_s for r in rows]
        assert t2[0] < t2[1] < t2[2]
        assert t2[2] / t2[0] >= 3.0

    def test_doublet_and_pair_match_inverse_sensitivity(self, rows):
        ratio = rows[1].t2_s / rows[0].t2_s
        assert ratio == pytest.approx(2.8 / 2.24, rel=0.08)

    def test_zero_residual_rate_unbounded_synthetic_row(self):
        rows = benchmark_suite(seed=12, shots=2000, residual_rate_per_s=0.0)
        synth = rows[2]
        assert synth.unbounded
