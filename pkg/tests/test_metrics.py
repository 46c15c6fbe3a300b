"""Tests for design quality measurement and reporting."""

import json
from dataclasses import replace

import numpy as np
import pytest
import scipy.signal
from numpy.testing import assert_allclose

from iirpl import metrics, sampling, seeding, sos
from testutils import random_stable_cascade, transfer_polys

PI = np.pi


def elliptic_state():
    c = seeding.design_elliptic("lowpass", (0.36 * PI,), (0.44 * PI,), 0.2, 50.0)
    return sos.DesignState(cascade=c, tau=10.0)


def lp_grid(n=1024):
    bands = [sampling.passband(0.0, 0.36 * PI), sampling.stopband(0.44 * PI, PI)]
    return sampling.verification_grid(bands, points_per_band=n)


class TestQuality:
    def test_values_match_independent_evaluation(self):
        state = elliptic_state()
        grid = lp_grid()
        rep = metrics.quality(state, grid)

        b, a = transfer_polys(state.cascade)
        pb = grid.passband
        _, h_pb = scipy.signal.freqz(b, a, worN=pb)
        g = np.abs(h_pb)
        assert_allclose(rep.pb_ripple_db, 20 * np.log10(g.max() / g.min()), rtol=1e-9)
        _, h_sb = scipy.signal.freqz(b, a, worN=grid.stopband)
        assert_allclose(rep.sb_atten_db, -20 * np.log10(np.abs(h_sb).max()), rtol=1e-9)

        _, gd = scipy.signal.group_delay((b, a), w=pb)
        assert_allclose(rep.tau_min, gd.min(), rtol=1e-7)
        assert_allclose(rep.tau_max, gd.max(), rtol=1e-7)
        expect_q = 100.0 * (gd.max() - gd.min()) / (gd.max() + gd.min())
        assert_allclose(rep.q_tau, expect_q, rtol=1e-6)
        assert_allclose(rep.tau_avg, np.trapezoid(gd, pb) / (pb[-1] - pb[0]), rtol=1e-7)

    def test_operation_counts(self):
        # one gain plus 4 per section; an order-24 cascade (12 sections)
        # needs 49 multipliers, 48 adders, 24 delay elements
        secs = tuple(sos.Biquad(0.1, 0.2, 0.05, 0.01) for _ in range(12))
        c = sos.SosCascade(h0=1.0, sections=secs)
        assert c.order == 24
        rep = metrics.quality(sos.DesignState(cascade=c, tau=1.0), lp_grid(64))
        assert (rep.multipliers, rep.adders, rep.delays) == (49, 48, 24)

    @pytest.mark.parametrize("nsec,expect", [(1, (5, 4, 2)), (6, (25, 24, 12))])
    def test_operation_count_formula(self, nsec, expect):
        secs = tuple(sos.Biquad(0.1, 0.2, 0.05, 0.01) for _ in range(nsec))
        rep = metrics.quality(
            sos.DesignState(cascade=sos.SosCascade(h0=1.0, sections=secs), tau=1.0),
            lp_grid(64))
        assert (rep.multipliers, rep.adders, rep.delays) == expect

    def test_transition_gain_reported_when_band_present(self):
        state = elliptic_state()
        bands = [sampling.passband(0.0, 0.36 * PI),
                 sampling.transition(0.36 * PI, 0.44 * PI),
                 sampling.stopband(0.44 * PI, PI)]
        rep = metrics.quality(state, sampling.verification_grid(bands, 512))
        assert rep.tb_gain_db is not None
        tb = np.linspace(0.36 * PI, 0.44 * PI, 512)
        expect = 20 * np.log10(np.abs(sos.response(state.cascade, tb)).max())
        assert_allclose(rep.tb_gain_db, expect, rtol=1e-9)

    def test_without_transition_band(self):
        rep = metrics.quality(elliptic_state(), lp_grid(64))
        assert rep.tb_gain_db is None

    def test_needs_passband(self):
        grid = sampling.verification_grid([sampling.stopband(0.5, 1.0)], 64)
        with pytest.raises(ValueError):
            metrics.quality(elliptic_state(), grid)


class TestRenormalizeGain:
    def test_centers_ripple_about_one(self):
        rng = np.random.default_rng(61)
        c = random_stable_cascade(rng, nsec=3)
        w = np.linspace(0.1, 1.0, 512)
        out = metrics.renormalize_gain(c, w)
        g = np.abs(sos.response(out, w))
        assert_allclose((g.max() + g.min()) / 2.0, 1.0, rtol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(67)
        c = random_stable_cascade(rng, nsec=3)
        w = np.linspace(0.1, 1.0, 256)
        once = metrics.renormalize_gain(c, w)
        twice = metrics.renormalize_gain(once, w)
        assert_allclose(twice.h0, once.h0, rtol=1e-14)

    def test_only_gain_changes(self):
        rng = np.random.default_rng(71)
        c = random_stable_cascade(rng, nsec=2)
        out = metrics.renormalize_gain(c, np.linspace(0.1, 1.0, 64))
        assert out.sections == c.sections


class TestReportSerialization:
    def test_json_round_trip_keys(self):
        rep = metrics.quality(elliptic_state(), lp_grid(128))
        data = json.loads(metrics.report_to_json(rep))
        assert data["order"] == 6
        assert set(data) == {
            "q_tau", "tau_avg", "tau_min", "tau_max", "pb_ripple_db",
            "sb_atten_db", "tb_gain_db", "order", "multipliers",
            "adders", "delays",
        }

    def test_compare_table_layout(self):
        rep = metrics.quality(elliptic_state(), lp_grid(128))
        text = metrics.compare_table([rep, rep], labels=["ours", "baseline"])
        lines = text.splitlines()
        assert "ours" in lines[0] and "baseline" in lines[0]
        assert len(lines) == 10  # header plus nine metric rows
        assert any(ln.startswith("delay Q") for ln in lines)

    def test_compare_table_label_mismatch(self):
        rep = metrics.quality(elliptic_state(), lp_grid(64))
        with pytest.raises(ValueError):
            metrics.compare_table([rep], labels=["a", "b"])

    def test_response_csv(self):
        state = elliptic_state()
        grid = lp_grid(16)
        text = metrics.response_csv(state, grid)
        lines = text.strip().splitlines()
        assert lines[0] == "omega,band,mag_db,group_delay"
        assert len(lines) == 1 + 2 * 16
        # stopband rows leave the delay column empty
        last = lines[-1].split(",")
        assert last[1] == "stopband" and last[3] == ""
        first = lines[1].split(",")
        assert first[1] == "passband" and float(first[3]) > 0.0
