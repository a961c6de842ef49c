import numpy as np
import pytest

from dieburst.errors import InvalidElementError, InvalidShiftError, NoResonanceError
from dieburst.mkid import (
    LumpedElements,
    MkidParams,
    fit_s21_sweep,
    load_mkid_fixture,
    resonance_circle,
    resonant_frequency,
    s21,
    shifted_frequency,
    synthesize_sweep,
    total_inductance_for_frequency,
)


class TestResonantFrequency:
    def test_zero_kinetic_inductance_rejected(self):
        with pytest.raises(InvalidElementError) as err:
            LumpedElements(C=1.0, L_g=1.0, L_k=0.0)
        assert err.value.code == "invalid-element"

    def test_unit_identity(self):
        el = LumpedElements(C=1.0, L_g=0.5, L_k=0.5)
        assert resonant_frequency(el) == pytest.approx(1.0 / (2 * np.pi), rel=1e-15)

    def test_inverse_square_root_scaling(self):
        el = LumpedElements(C=2e-12, L_g=1e-9, L_k=1e-9)
        el4 = LumpedElements(C=2e-12, L_g=4e-9, L_k=4e-9)
        assert resonant_frequency(el4) == pytest.approx(resonant_frequency(el) / 2.0, rel=1e-14)

    def test_round_trip_through_inverse_at_fixture_frequency(self, by_label):
        f0 = by_label["D8"].f0
        C = 0.5e-12
        l_tot = total_inductance_for_frequency(C, f0)
        el = LumpedElements(C=C, L_g=0.7 * l_tot, L_k=0.3 * l_tot)
        assert resonant_frequency(el) == pytest.approx(f0, rel=1e-12)


class TestShiftedFrequency:
    EL = LumpedElements(C=0.5e-12, L_g=2e-9, L_k=1e-9)

    def test_zero_shift_identity(self):
        assert shifted_frequency(self.EL, 0.0) == resonant_frequency(self.EL)

    def test_strictly_decreasing(self):
        deltas = np.linspace(0.0, 2.0, 50)
        freqs = [shifted_frequency(self.EL, d) for d in deltas]
        assert all(b < a for a, b in zip(freqs, freqs[1:]))

    def test_linearization_to_second_order(self):
        delta = 1e-4
        alpha = self.EL.kinetic_fraction
        f0 = resonant_frequency(self.EL)
        exact_rel = shifted_frequency(self.EL, delta) / f0 - 1.0
        assert abs(exact_rel - (-0.5 * alpha * delta)) < delta**2

    def test_invalid_shift_code(self):
        with pytest.raises(InvalidShiftError) as err:
            shifted_frequency(self.EL, -1.0)
        assert err.value.code == "invalid-shift"


class TestS21:
    def test_resonance_value_all_fixture_rows(self, fixture_params):
        for p in fixture_params:
            val = s21(p.f0, p)
            assert val == pytest.approx(p.kappa_i / (p.kappa_i + p.kappa_e), abs=1e-12)
            assert abs(val.imag) < 1e-12

    def test_known_rows(self, by_label):
        assert s21(by_label["D10"].f0, by_label["D10"]) == pytest.approx(0.5 + 0j, abs=1e-12)
        assert s21(by_label["D1"].f0, by_label["D1"]) == pytest.approx(1.5 / 11.0, abs=1e-12)

    def test_far_detuning_limit(self, by_label):
        p = by_label["D8"]
        assert abs(s21(p.f0 + 1e9, p) - 1.0) < 1e-4

    def test_magnitude_bounded_by_one(self, by_label):
        p = by_label["D5"]
        f = np.linspace(p.f0 - 1e6, p.f0 + 1e6, 10001)
        assert np.all(np.abs(s21(f, p)) <= 1.0 + 1e-9)

    def test_resonance_circle(self, fixture_params):
        for p in fixture_params:
            f = np.linspace(p.f0 - 20 * p.kappa_total, p.f0 + 20 * p.kappa_total, 2001)
            vals = s21(f, p)
            center, radius = resonance_circle(p)
            dist = np.abs(vals - center)
            assert np.max(np.abs(dist - radius)) < 1e-9

    def test_phase_odd_about_resonance(self, by_label):
        p = by_label["D9"]
        for delta in (0.1, 1.0, 7.3, 100.0):
            a = np.angle(s21(p.f0 + delta * 1e3, p))
            b = np.angle(s21(p.f0 - delta * 1e3, p))
            assert abs(a + b) < 1e-12


class TestFit:
    def test_noiseless_round_trip_all_rows(self, fixture_params):
        for p in fixture_params:
            freqs, vals = synthesize_sweep(p, n_points=401, span_linewidths=10)
            est, resid = fit_s21_sweep(freqs, vals, label=p.label)
            assert est.f0 == pytest.approx(p.f0, rel=1e-6)
            assert est.kappa_i == pytest.approx(p.kappa_i, rel=1e-6)
            assert est.kappa_e == pytest.approx(p.kappa_e, rel=1e-6)
            assert resid < 1e-8

    def test_noisy_round_trip_within_one_percent(self, fixture_params):
        children = np.random.SeedSequence(0).spawn(len(fixture_params))
        for p, child in zip(fixture_params, children):
            freqs, vals = synthesize_sweep(
                p, n_points=1201, span_linewidths=10, noise_sigma=0.01, rng=np.random.default_rng(child)
            )
            est, _ = fit_s21_sweep(freqs, vals, label=p.label)
            assert est.f0 == pytest.approx(p.f0, rel=0.01)
            assert est.kappa_i == pytest.approx(p.kappa_i, rel=0.01)
            assert est.kappa_e == pytest.approx(p.kappa_e, rel=0.01)

    def test_flat_data_raises_no_resonance(self):
        freqs = np.linspace(1e9, 1.001e9, 101)
        with pytest.raises(NoResonanceError) as err:
            fit_s21_sweep(freqs, np.ones(101, dtype=complex))
        assert err.value.code == "no-resonance"

    def test_too_few_points_rejected(self, by_label):
        p = by_label["D4"]
        freqs, vals = synthesize_sweep(p, n_points=10)
        with pytest.raises(ValueError):
            fit_s21_sweep(freqs, vals)

    def test_cable_delay_nuisance(self, by_label):
        p = by_label["D6"]
        freqs, vals = synthesize_sweep(p, n_points=801, span_linewidths=12)
        delay = 2e-8 / p.kappa_total  # small linear phase ramp across the sweep
        vals = vals * np.exp(1j * (2 * np.pi * (freqs - freqs[0]) * delay + 0.1))
        est, _ = fit_s21_sweep(freqs, vals, fit_delay=True)
        assert est.f0 == pytest.approx(p.f0, rel=1e-7)
        assert est.kappa_e == pytest.approx(p.kappa_e, rel=1e-3)


class TestFixture:
    def test_seven_rows_without_d7(self, fixture_params):
        labels = [p.label for p in fixture_params]
        assert len(labels) == 7
        assert "D7" not in labels
        assert labels == ["D1", "D4", "D5", "D6", "D8", "D9", "D10"]

    def test_known_values(self, by_label):
        assert by_label["D10"].f0 == pytest.approx(3.41655e9)
        assert by_label["D10"].kappa_i == pytest.approx(800.0)
        assert by_label["D10"].kappa_e == pytest.approx(800.0)
        assert by_label["D5"].kappa_e == pytest.approx(13.0e3)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            MkidParams(f0=-1.0, kappa_i=1.0, kappa_e=1.0)
        with pytest.raises(ValueError):
            MkidParams(f0=1.0, kappa_i=1.0, kappa_e=0.0)
