"""Tests for starting-point construction: elliptic cores, allpass
augmentation, linear-phase FIR prototypes, and balanced truncation."""

import numpy as np
import pytest
import scipy.signal
from numpy.testing import assert_allclose, assert_array_less

from iirpl import metrics, seeding, sos
from iirpl.errors import InfeasibleSpec

PI = np.pi


class TestElliptic:
    def test_order_six_narrow_lowpass(self):
        # 0.36pi/0.44pi lowpass at 0.2 dB / 50 dB needs exactly order 6
        c = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        assert c.order == 6

    def test_order_six_bandpass(self):
        # 0.3pi-0.5pi passband inside 0.2pi/0.7pi stops, 1 dB / 41 dB
        c = seeding.design_elliptic("bandpass", (0.3 * PI, 0.5 * PI),
                                    (0.2 * PI, 0.7 * PI), 1.0, 41.0)
        assert c.order == 6

    def test_meets_magnitude_spec(self):
        c = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        pb = np.linspace(0.0, 0.36 * PI, 2048)
        sb = np.linspace(0.44 * PI, PI, 2048)
        g_pb = np.abs(sos.response(c, pb))
        ripple = 20.0 * np.log10(np.max(g_pb) / np.min(g_pb))
        assert ripple <= 0.2 + 1e-6
        atten = -20.0 * np.log10(np.max(np.abs(sos.response(c, sb))))
        assert atten >= 50.0 - 1e-6

    def test_order_rounded_to_even(self):
        # a lax spec that ellipord solves at odd order still yields biquads
        c = seeding.design_elliptic("lowpass", (0.3 * PI,), (0.7 * PI,), 1.0, 20.0)
        assert c.order % 2 == 0
        assert not any(c.zeroed)

    def test_highpass(self):
        c = seeding.design_elliptic("highpass", (0.6 * PI,), (0.4 * PI,), 0.5, 40.0)
        g_hi = np.abs(sos.response(c, np.linspace(0.6 * PI, PI, 512)))
        g_lo = np.abs(sos.response(c, np.linspace(0.0, 0.4 * PI, 512)))
        assert np.max(g_lo) < 0.011
        assert np.min(g_hi) > 0.9

    def test_unreachable_spec_raises(self):
        with pytest.raises(InfeasibleSpec):
            seeding.design_elliptic("lowpass", (0.49999 * PI,), (0.5 * PI,), 1e-5, 160.0)

    def test_unknown_kind_raises(self):
        with pytest.raises(ValueError):
            seeding.design_elliptic("bandstop", (0.3 * PI,), (0.5 * PI,), 1.0, 40.0)

    def test_stable(self):
        c = seeding.design_elliptic("bandpass", (0.3 * PI, 0.5 * PI),
                                    (0.2 * PI, 0.7 * PI), 1.0, 41.0)
        assert sos.max_pole_radius(c) < 1.0


class TestAugmentAllpass:
    def test_appended_sections_are_allpass(self):
        core = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        out = seeding.augment_allpass(core, 0.0, 0.36 * PI, 4)
        assert out.num_sections == core.num_sections + 4
        w = np.linspace(0.01, PI - 0.01, 256)
        for s in out.sections[core.num_sections:]:
            # poles r e^{+-j th} with zeros at 1/r: magnitude is b0 = r^2 flat
            one = sos.SosCascade(h0=s.b0, sections=(s,))
            assert_allclose(np.abs(sos.response(one, w)), 1.0, rtol=1e-9)

    def test_pole_radius_and_spread(self):
        core = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        out = seeding.augment_allpass(core, 0.0, 0.36 * PI, 3, pole_radius=0.8)
        new = out.sections[core.num_sections:]
        for k, s in enumerate(new):
            roots = np.roots([1.0, s.b1, s.b0])
            assert_allclose(np.abs(roots), 0.8, rtol=1e-12)
            th = 0.36 * PI * (k + 0.5) / 3
            assert_allclose(np.angle(roots[np.argmax(roots.imag)]), th, atol=1e-12)

    def test_gain_renormalized(self):
        core = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        out = seeding.augment_allpass(core, 0.0, 0.36 * PI, 4)
        g = np.abs(sos.response(out, np.linspace(0.0, 0.36 * PI, 1024)))
        assert_allclose((np.max(g) + np.min(g)) / 2.0, 1.0, rtol=1e-6)

    def test_zero_sections_is_identity_shape(self):
        core = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        out = seeding.augment_allpass(core, 0.0, 0.36 * PI, 0)
        assert out.num_sections == core.num_sections


class TestStartDelays:
    def test_matches_direct_computation(self):
        core = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
        seed = seeding.augment_allpass(core, 0.0, 0.36 * PI, 5)
        avg, hi, lo = seeding.start_delays(seed, 0.0, 0.36 * PI)
        w = np.linspace(0.0, 0.36 * PI, 1024)
        gd = sos.group_delay(seed, w)
        assert_allclose(hi, np.max(gd))
        assert_allclose(lo, np.min(gd))
        assert_allclose(avg, np.trapezoid(gd, w) / (0.36 * PI))
        assert lo <= avg <= hi


class TestFirPrototype:
    def test_exact_linear_phase(self):
        taps = seeding.design_fir_linear_phase(15.9, "lowpass", (0.5 * PI,), (0.6 * PI,))
        # symmetric odd-length taps give constant delay (L-1)/2 = ceil(tau)
        assert taps.size == 2 * 16 + 1
        assert_allclose(taps, taps[::-1], atol=1e-15)
        w = np.linspace(0.05, 0.45 * PI, 64)
        _, gd = scipy.signal.group_delay((taps, [1.0]), w=w)
        assert_allclose(gd, 16.0, atol=1e-8)

    def test_cutoff_midway(self):
        taps = seeding.design_fir_linear_phase(10.0, "lowpass", (0.4 * PI,), (0.6 * PI,))
        w = np.array([0.5 * PI])
        _, h = scipy.signal.freqz(taps, worN=w)
        assert_allclose(np.abs(h), 0.5, atol=0.05)

    def test_bandpass(self):
        taps = seeding.design_fir_linear_phase(
            12.0, "bandpass", (0.3 * PI, 0.5 * PI), (0.2 * PI, 0.7 * PI))
        _, h_pass = scipy.signal.freqz(taps, worN=np.array([0.4 * PI]))
        _, h_stop = scipy.signal.freqz(taps, worN=np.array([0.05 * PI]))
        assert np.abs(h_pass) > 0.9
        assert np.abs(h_stop) < 0.1


class TestBalancedTruncation:
    def _fir(self):
        return scipy.signal.firwin(31, 0.45, window="hamming")

    def test_full_order_round_trip(self):
        taps = self._fir()
        z, p, k = seeding.bmt_reduce(taps, 30)
        w = np.linspace(0.0, PI, 1024)
        _, h_fir = scipy.signal.freqz(taps, worN=w)
        b, a = scipy.signal.zpk2tf(z, p, k)
        _, h_red = scipy.signal.freqz(b, a, worN=w)
        assert np.max(np.abs(np.abs(h_fir) - np.abs(h_red))) <= 1e-8

    @pytest.mark.parametrize("order", [8, 12, 16])
    def test_truncated_seeds_are_stable(self, order):
        z, p, k = seeding.bmt_reduce(self._fir(), order)
        assert np.max(np.abs(p)) < 1.0

    def test_truncation_stays_close(self):
        # moderate truncation should track the FIR response closely
        taps = self._fir()
        z, p, k = seeding.bmt_reduce(taps, 12)
        w = np.linspace(0.0, PI, 512)
        _, h_fir = scipy.signal.freqz(taps, worN=w)
        b, a = scipy.signal.zpk2tf(z, p, k)
        _, h_red = scipy.signal.freqz(b, a, worN=w)
        assert np.max(np.abs(np.abs(h_fir) - np.abs(h_red))) < 5e-3

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            seeding.bmt_reduce(self._fir(), 0)
        with pytest.raises(ValueError):
            seeding.bmt_reduce(self._fir(), 31)


class TestRelocateWideZeros:
    def test_far_zeros_parked_at_origin(self):
        z = np.array([0.5 + 0.1j, 3.0 + 4.0j, -7.0])
        out = seeding.relocate_wide_zeros(z, max_radius=2.5)
        assert out[0] == z[0]
        assert out[1] == 0.0 and out[2] == 0.0

    def test_input_not_mutated(self):
        z = np.array([5.0 + 0.0j])
        seeding.relocate_wide_zeros(z)
        assert z[0] == 5.0
