"""Tests for DNL/tDNL, truncated mean delay, jitter fits, pulse shape and QBER"""

import numpy as np
import pytest

from models import FWHM_FACTOR
from services import AnalysisError, TdcChannel, analysis, calib, delayline


class TestLinearity:
    def test_dnl_of_a_small_histogram(self):
        np.testing.assert_allclose(analysis.dnl([10, 20, 30]), [-0.5, 0.0, 0.5])
        np.testing.assert_allclose(analysis.dnl([10, 20, 30, 0, 0]), [-0.5, 0.0, 0.5])

    def test_dnl_sums_to_zero(self, rng):
        counts = rng.integers(0, 500, 140)
        counts[-1] = 3
        assert analysis.dnl(counts).sum() == pytest.approx(0.0, abs=1e-9)

    def test_empty_histogram(self):
        with pytest.raises(AnalysisError):
            analysis.dnl([0, 0, 0])

    def test_default_line_dnl_band(self, default_line):
        widths = delayline.true_bin_widths(default_line, 25.0)
        values = analysis.dnl(widths[:-1])
        assert -1.0 <= values.min() <= -0.9
        assert 2.0 <= values.max() <= 3.5
        assert 15 <= np.count_nonzero(values > 1.0) <= 30

    def test_measured_dnl_follows_the_true_widths(self, default_line, rng):
        channel = TdcChannel(default_line)
        table = calib.build_table(channel.histogram(rng.uniform(0, 1e9, 1 << 17), 25.0),
                                  default_line.coarse_period)
        report = analysis.linearity(table)
        truth = delayline.true_bin_widths(default_line, 25.0)
        assert report.dnl.size == table.n_c
        # the cut last bin may be too narrow to see
        assert truth.size - 1 <= table.n_c <= truth.size
        k = truth.size - 1
        np.testing.assert_allclose(table.bin_widths[:k], truth[:k], atol=6.0)
        assert report.bins_above_one == pytest.approx(
            np.count_nonzero(analysis.dnl(truth) > 1.0), abs=3)

    def test_flat_table_has_zero_tdnl(self):
        table = calib.build_table([7] * 8, 100.0)
        values = analysis.tdnl(table)
        assert values.size == 8
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_tdnl_of_uneven_bins(self):
        table = calib.build_table([1, 3], 100.0)
        # centers 0, 50, 100 against tau_res 50
        np.testing.assert_allclose(analysis.tdnl(table), [0.0, 0.0])
        report = analysis.linearity(calib.build_table([1, 1, 2], 100.0))
        assert report.csv_rows()[0][0] == 1
        assert set(report.to_dict()) >= {'dnl', 'tdnl', 'dnl_range', 'bins_above_one'}


class TestTruncatedMeanDelay:
    def test_mean_of_the_first_bins(self):
        assert analysis.truncated_mean_delay([1.0, 2.0, 3.0, 10.0], 3) == pytest.approx(2.0)

    def test_bins_shrink_as_the_line_warms(self, default_line):
        means = [analysis.truncated_mean_delay(delayline.true_bin_widths(default_line, t), 120)
                 for t in (5.0, 25.0, 55.0, 80.0)]
        assert all(a > b for a, b in zip(means, means[1:]))

    @pytest.mark.parametrize("k", [0, 5])
    def test_k_out_of_range(self, k):
        with pytest.raises(AnalysisError):
            analysis.truncated_mean_delay([1.0, 2.0, 3.0, 4.0], k)


class TestJitter:
    def test_recovers_a_known_sigma(self, rng):
        a = rng.normal(0.0, 10.0, 100_000)
        report = analysis.fwhm_jitter(a, np.zeros_like(a))
        assert report.fwhm == pytest.approx(FWHM_FACTOR * 10.0, abs=0.7)
        assert report.r_squared > 0.99
        assert report.n_samples == a.size
        assert not report.degenerate
        assert report.counts.sum() == a.size

    def test_offset_does_not_change_the_width(self, rng):
        a = rng.normal(0.0, 20.0, 50_000)
        shifted = analysis.fwhm_jitter(a + 1000.0, np.zeros_like(a))
        centred = analysis.fwhm_jitter(a, np.zeros_like(a))
        assert shifted.fit.mean == pytest.approx(centred.fit.mean + 1000.0, abs=0.5)
        assert shifted.fwhm == pytest.approx(centred.fwhm, rel=0.02)

    def test_identical_tags_are_degenerate(self):
        report = analysis.fwhm_jitter([1.0, 5.0, 9.0], [1.0, 5.0, 9.0])
        assert report.degenerate
        assert report.fwhm == 0.0
        assert report.to_dict()['degenerate'] is True

    @pytest.mark.parametrize("a,b", [([], []), ([1.0, 2.0], [1.0])])
    def test_invalid_inputs(self, a, b):
        with pytest.raises(AnalysisError):
            analysis.fwhm_jitter(a, b)


class TestPulseShape:
    PERIOD = 20_000.0

    def test_folded_pulse(self, rng):
        pulses = np.arange(100_000) * self.PERIOD
        tags = pulses + 300.0 + rng.normal(0.0, 50.0, pulses.size)
        report = analysis.pulse_shape(tags, self.PERIOD)
        assert not report.smeared
        assert report.fwhm == pytest.approx(FWHM_FACTOR * 50.0, rel=0.05)
        assert report.phase_origin + report.fit.mean == pytest.approx(300.0, abs=2.0)
        assert report.occupied_bins > 10

    def test_wrong_period_smears_the_pulse(self, rng):
        pulses = np.arange(100_000) * self.PERIOD
        tags = pulses + rng.normal(0.0, 50.0, pulses.size)
        report = analysis.pulse_shape(tags, self.PERIOD * (1 + 1e-3))
        assert report.smeared

    def test_single_phase(self):
        report = analysis.pulse_shape([0.0, self.PERIOD, 2 * self.PERIOD], self.PERIOD)
        assert report.fwhm == 0.0
        assert not report.smeared

    def test_invalid_inputs(self):
        with pytest.raises(AnalysisError):
            analysis.pulse_shape([], self.PERIOD)
        with pytest.raises(AnalysisError):
            analysis.pulse_shape([1.0], 0.0)


class TestQber:
    PERIOD = 20_000.0

    @staticmethod
    def own_channels(labels):
        return np.array([analysis.DEFAULT_BASIS_MAP[str(label)] for label in labels])

    def test_in_gate_wraps_around_the_period(self):
        times = np.array([0.0, 9_990.0, 10_010.0, 19_990.0])
        np.testing.assert_array_equal(analysis.in_gate(times, 0.0, 40.0, self.PERIOD),
                                      [True, False, False, True])

    def test_noiseless_channel(self, rng):
        labels = rng.choice(list("HVDA"), 10_000)
        times = np.arange(labels.size) * self.PERIOD + rng.normal(0.0, 50.0, labels.size)
        report = analysis.qber(times, self.own_channels(labels), labels, (0.0, 1000.0),
                               self.PERIOD)
        assert report.qber == 0.0
        assert report.gated == labels.size
        assert report.sifted_out == 0

    def test_other_basis_is_sifted_out(self):
        labels = np.array(["H", "H", "D", "D"])
        channels = np.array([0, 2, 2, 0])
        report = analysis.qber(np.zeros(4), channels, labels, (0.0, 100.0), self.PERIOD)
        assert report.gated == 2
        assert report.sifted_out == 2
        assert report.qber == 0.0

    def test_per_basis_errors(self):
        labels = np.array(["H", "V", "D", "A"])
        channels = np.array([1, 1, 2, 2])
        report = analysis.qber(np.zeros(4), channels, labels, (0.0, 100.0), self.PERIOD)
        assert report.qber == pytest.approx(0.5)
        assert report.per_basis == {'Z': 0.5, 'X': 0.5}

    def test_custom_labels_follow_their_channels(self):
        basis_map = {'0': 0, '1': 1, '+': 2, '-': 3}
        labels = np.array(['0', '1', '+', '-', '0', '+'])
        channels = np.array([0, 0, 2, 3, 2, 0])
        report = analysis.qber(np.zeros(6), channels, labels, (0.0, 100.0), self.PERIOD,
                               basis_map)
        assert report.gated == 4
        assert report.sifted_out == 2
        assert report.errors == 1
        assert report.per_basis == {'Z': 0.5, 'X': 0.0}

    def test_basis_of_pairs_the_channels(self):
        assert [analysis.basis_of(c) for c in range(6)] == ['Z', 'Z', 'X', 'X', 'B2', 'B2']

    def test_background_raises_qber_with_gate_width(self, rng):
        n_signal, n_background = 50_000, 20_000
        labels = rng.choice(list("HVDA"), n_signal + n_background)
        slots = np.arange(labels.size) * self.PERIOD
        offsets = np.concatenate((rng.normal(0.0, 100.0, n_signal),
                                  rng.uniform(-self.PERIOD / 2, self.PERIOD / 2, n_background)))
        channels = np.concatenate((self.own_channels(labels[:n_signal]),
                                   rng.integers(0, 4, n_background)))
        reports = analysis.qber_gate_sweep(slots + offsets, channels, labels, 0.0,
                                           [20_000.0, 250.0, 1000.0, 5000.0], self.PERIOD)
        assert [r.gate_width for r in reports] == [250.0, 1000.0, 5000.0, 20_000.0]
        rates = [r.qber for r in reports]
        assert all(a < b for a, b in zip(rates, rates[1:]))
        assert rates[0] < 0.01
        # the full-period gate: 5000 errors among 50000 signal + 10000 sifted background
        assert rates[-1] == pytest.approx(5000 / 60000, abs=0.01)

    def test_invalid_gates(self):
        with pytest.raises(AnalysisError):
            analysis.qber([0.0], [0], ["H"], (0.0, 30_000.0), self.PERIOD)
        with pytest.raises(AnalysisError):
            analysis.qber([5000.0], [0], ["H"], (0.0, 100.0), self.PERIOD)
        with pytest.raises(AnalysisError):
            analysis.qber([0.0, 1.0], [0], ["H"], (0.0, 100.0), self.PERIOD)
