import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mmspc.analysis import (
    RandlesParams,
    ageing_metric,
    amplitude_spectrum,
    degradation_filter,
    dominant_nondc_frequency,
    module_switch_rate,
    pattern_autocorrelation,
    randles_impedance,
    ripple_ratio,
    rms_avg_ratio,
    spectrum_mean_square,
)
from mmspc.topology import Connection, parse_state

FS = 20_000.0


def tone(freq, amp=1.0, f_s=FS, seconds=0.2, dc=0.0):
    t = np.arange(int(round(seconds * f_s))) / f_s
    return dc + amp * np.sin(2 * np.pi * freq * t)


class TestSpectrum:
    def test_constant_signal(self):
        spec = amplitude_spectrum(np.full(4000, 3.7), FS)
        assert spec.amps[0] == pytest.approx(3.7)
        assert np.max(spec.amps[1:]) < 1e-12

    def test_pure_tone_amplitude(self):
        spec = amplitude_spectrum(tone(100.0, amp=2.5), FS)
        i = int(round(100.0 / spec.resolution))
        assert spec.freqs[i] == pytest.approx(100.0)
        assert spec.amps[i] == pytest.approx(2.5, abs=1e-9)
        others = np.delete(spec.amps, [i])
        assert np.max(others) < 1e-9

    def test_dc_bin_is_mean(self):
        x = tone(100.0, dc=4.0)
        spec = amplitude_spectrum(x, FS)
        assert spec.amps[0] == pytest.approx(abs(x.mean()))

    def test_rejects_short_input(self):
        with pytest.raises(ValueError):
            amplitude_spectrum([1.0], FS)

    @given(
        st.lists(
            st.floats(min_value=-100, max_value=100), min_size=2, max_size=600
        )
    )
    @settings(max_examples=80, deadline=None)
    def test_parseval(self, samples):
        x = np.asarray(samples)
        spec = amplitude_spectrum(x, FS)
        time_ms = float(np.mean(x**2))
        assert spectrum_mean_square(spec) == pytest.approx(
            time_ms, rel=1e-6, abs=1e-9
        )

    def test_linearity(self):
        x = tone(250.0, amp=1.3, dc=0.4)
        a = amplitude_spectrum(x, FS)
        b = amplitude_spectrum(3.0 * x, FS)
        assert_allclose(b.amps, 3.0 * a.amps, rtol=1e-9, atol=1e-12)

    def test_dominant_nondc(self):
        x = tone(300.0, amp=2.0, dc=10.0) + tone(700.0, amp=0.5)
        freq, amp = dominant_nondc_frequency(amplitude_spectrum(x, FS))
        assert freq == pytest.approx(300.0)
        assert amp == pytest.approx(2.0, rel=1e-6)


class TestRatios:
    def test_ripple_constant(self):
        assert ripple_ratio(np.full(100, 5.0)) == 0.0

    def test_ripple_one_plus_sine(self):
        assert ripple_ratio(tone(50.0, dc=1.0)) == pytest.approx(
            1 / math.sqrt(2), abs=1e-6
        )

    def test_ripple_zero_mean_raises(self):
        with pytest.raises(ValueError):
            ripple_ratio(tone(50.0))

    def test_rms_avg_constant(self):
        assert rms_avg_ratio(np.full(10, -2.0)) == pytest.approx(1.0)

    def test_rms_avg_one_plus_sine(self):
        assert rms_avg_ratio(tone(50.0, dc=1.0)) == pytest.approx(
            math.sqrt(1.5), abs=1e-6
        )

    @given(
        st.lists(
            st.floats(min_value=0.1, max_value=50.0), min_size=4, max_size=400
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_identity_between_ratios(self, samples):
        x = np.asarray(samples)
        r = ripple_ratio(x)
        total = rms_avg_ratio(x)
        assert total**2 == pytest.approx(1.0 + r**2, rel=1e-9)
        assert r <= total


class TestDegradationFilter:
    def test_dc_gain_exact(self):
        out = degradation_filter(np.full(1000, 2.0), 50.0, FS)
        assert_allclose(out, 2.0)

    def test_corner_gain(self):
        x = tone(100.0, seconds=1.0)
        y = degradation_filter(x, 100.0, FS)
        # measure steady-state amplitude ratio over the trailing half
        gain = np.sqrt(np.mean(y[10_000:] ** 2) / np.mean(x[10_000:] ** 2))
        assert gain == pytest.approx(1 / math.sqrt(2), rel=0.01)

    def test_high_frequency_attenuation(self):
        f_s = 100_000.0
        t = np.arange(int(f_s * 0.1)) / f_s
        x = np.sin(2 * np.pi * 20_000.0 * t)
        y = degradation_filter(x, 100.0, f_s)
        gain = np.sqrt(np.mean(y[5000:] ** 2) / np.mean(x[5000:] ** 2))
        assert gain <= 0.006

    def test_parameter_range(self):
        with pytest.raises(ValueError):
            degradation_filter([1.0, 2.0], 0.0, FS)
        with pytest.raises(ValueError):
            degradation_filter([1.0, 2.0], FS, FS)


class TestAgeingMetric:
    def test_dc_current_has_zero_ripple(self):
        report = ageing_metric(np.full(4000, 10.0), (5.0, 50.0, 100.0), FS)
        assert report.ripple_ratios == (0.0, 0.0, 0.0)
        assert report.rms_avg == pytest.approx(1.0)

    def test_tone_above_cutoffs_ordering(self):
        x = tone(100.0, amp=1.0, dc=5.0, seconds=1.0)
        report = ageing_metric(x, (5.0, 100.0), FS)
        assert report.ratio(5.0) < 0.2 * report.ratio(100.0)

    def test_requires_cutoffs(self):
        with pytest.raises(ValueError):
            ageing_metric(np.ones(10), (), FS)

    @given(
        dc=st.floats(min_value=1.0, max_value=10.0),
        amp1=st.floats(min_value=0.0, max_value=3.0),
        amp2=st.floats(min_value=0.0, max_value=3.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_cutoff(self, dc, amp1, amp2):
        x = tone(100.0, amp=amp1, dc=dc) + tone(850.0, amp=amp2)
        report = ageing_metric(x, (5.0, 20.0, 50.0, 100.0, 400.0), FS)
        ratios = list(report.ripple_ratios)
        assert ratios == sorted(ratios)


class TestRandles:
    def test_high_frequency_limit_is_electrolyte_resistance(self):
        p = RandlesParams()
        z = randles_impedance(1e9, p)
        assert abs(z - p.r0) < 1e-4

    def test_low_frequency_warburg_slope(self):
        p = RandlesParams()
        lo = abs(randles_impedance(1e-6, p) - p.r0)
        hi = abs(randles_impedance(4e-6, p) - p.r0)
        assert lo / hi == pytest.approx(2.0, rel=0.05)

    def test_one_hertz_against_direct_evaluation(self):
        p = RandlesParams(r0=0.025, rct=0.015, cdl=1.0, sigma_w=0.005)
        w = 2 * math.pi * 1.0
        zw = p.sigma_w / math.sqrt(w) * (1 - 1j)
        expected = p.r0 + 1 / (1 / (p.rct + zw) + 1j * w * p.cdl)
        got = randles_impedance(1.0, p)
        assert cmath.isclose(got, expected, rel_tol=1e-12)

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValueError):
            randles_impedance(0.0, RandlesParams())

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            RandlesParams(r0=0.0)


class TestSwitchRate:
    def test_constant_trace(self):
        trace = [parse_state("PPS+PS+")] * 100
        assert module_switch_rate(trace, FS, 0) == 0.0

    def test_alternating_terminal_element(self):
        a = parse_state("PPPPS+")
        b = parse_state("PPPPB")
        trace = [a if k % 2 == 0 else b for k in range(2000)]
        # the terminal element is adjacent to modules 1 and 5 (wrap); it
        # changes every tick after the first
        rate = module_switch_rate(trace, FS, 4)
        assert rate == pytest.approx((1999 / 2000) * FS / 2, rel=1e-9)
        # inner modules see no change
        assert module_switch_rate(trace, FS, 2) == 0.0

    def test_sparse_changes(self):
        a = parse_state("PPS+PS+")
        c = parse_state("PS+PPS+")  # elements 2 and 3 differ vs a
        trace = []
        for k in range(1000):
            trace.append(c if k % 100 == 0 and k > 0 else a)
        # module 3 (0-based 2) is adjacent to elements 2 and 3: both flips count
        changes = sum(
            1
            for x, y in zip(trace, trace[1:])
            if (x[1], x[2]) != (y[1], y[2])
        )
        assert module_switch_rate(trace, FS, 2) == pytest.approx(
            changes * FS / 1000 / 2
        )

    def test_input_validation(self):
        with pytest.raises(ValueError):
            module_switch_rate([parse_state("PP")], FS, 0)
        with pytest.raises(ValueError):
            module_switch_rate([parse_state("PP")] * 2, FS, 5)


class TestPatternAutocorrelation:
    def test_periodic_fundamental_is_removed(self):
        # a purely 50 Hz-periodic signal has no residual and no pattern
        x = tone(50.0, dc=5.0, seconds=1.0) + 0.3 * tone(100.0, seconds=1.0)
        peak, _ = pattern_autocorrelation(x, FS, 50.0)
        assert peak == 0.0

    def test_slow_square_modulation_detected(self):
        t = np.arange(int(FS)) / FS
        carrier = 5.0 + np.abs(np.sin(2 * np.pi * 50.0 * t))
        gate = np.where((t // 0.1).astype(int) % 2 == 0, 1.0, 0.6)
        peak, lag = pattern_autocorrelation(carrier * gate, FS, 50.0)
        assert peak >= 0.5
        assert lag == pytest.approx(0.2, abs=0.02)

    def test_white_noise_has_no_pattern(self):
        rng = np.random.default_rng(7)
        x = 5.0 + rng.normal(0, 1, int(FS))
        peak, _ = pattern_autocorrelation(x, FS, 50.0)
        assert peak < 0.1

    def test_requires_whole_periods(self):
        with pytest.raises(ValueError):
            pattern_autocorrelation(np.ones(450), FS, 50.0)
