"""Tests for static and steady code-density calibration"""

import numpy as np
import pytest

from models import CalibrationTable, ExperimentSpec, RawTag, SteadyState, SteadyStatus, TagBatch
from services import Bench, CalibrationError, SteadyCalibrator, TdcChannel, calib, delayline
from utils import FenwickTree


TAU = 100.0


class TestMinEvents:
    def test_default_line_needs_fewer_than_a_window(self):
        assert calib.min_events(0.02, 0.1, 135) == 73061
        assert calib.min_events(0.02, 0.1, 144) == 77932
        needed = calib.min_events(0.02, 0.1, 140)
        assert needed < 131072
        assert calib.next_power_of_two(needed) == 131072

    @pytest.mark.parametrize("alpha,beta,n_c,expected", [
        (0.05, 0.1, 100, 38415),
        (0.05, 0.05, 10, 15366),
        (0.01, 0.2, 50, 8294),
    ])
    def test_closed_form(self, alpha, beta, n_c, expected):
        assert abs(calib.min_events(alpha, beta, n_c) - expected) <= 1

    def test_tighter_precision_needs_more_events(self):
        assert calib.min_events(0.02, 0.05, 132) > calib.min_events(0.02, 0.1, 132)
        assert calib.min_events(0.01, 0.1, 132) > calib.min_events(0.02, 0.1, 132)

    @pytest.mark.parametrize("alpha,beta,n_c", [(0.0, 0.1, 10), (1.0, 0.1, 10),
                                                (0.02, 0.0, 10), (0.02, 0.1, 0)])
    def test_invalid_parameters(self, alpha, beta, n_c):
        with pytest.raises(CalibrationError):
            calib.min_events(alpha, beta, n_c)

    def test_next_power_of_two(self):
        assert calib.next_power_of_two(1) == 1
        assert calib.next_power_of_two(131072) == 131072
        assert calib.next_power_of_two(131073) == 262144


class TestBuildTable:
    def test_flat_histogram(self):
        table = calib.build_table([10, 10, 10, 10], TAU)
        assert table.n_c == 4
        assert table.tau_res == 25.0
        np.testing.assert_allclose(table.bin_widths, 25.0)
        np.testing.assert_allclose(table.cumulative, [0, 25, 50, 75, 100])
        np.testing.assert_allclose(table.centers, [0, 25, 50, 75, 100])

    def test_center_formula(self):
        table = calib.build_table([1, 3], TAU)
        # widths 25 and 75: c_1 = 37.5 + 12.5 + 0, c_2 = 37.5 + 37.5 + 25
        np.testing.assert_allclose(table.centers, [0.0, 50.0, 100.0])

    def test_mean_center_spacing_is_resolution(self, rng):
        for _ in range(1000):
            counts = rng.integers(1, 1000, int(rng.integers(2, 201)))
            table = CalibrationTable(counts, TAU)
            spacing = np.diff(table.centers).mean()
            assert spacing == pytest.approx(TAU / counts.size, rel=1e-9)

    def test_trailing_zeros_are_trimmed(self):
        table = calib.build_table([3, 0, 2, 0, 0], TAU)
        assert table.n_c == 3
        assert table.empty_bins == [2]
        assert table.centers[2] == table.centers[1]

    @pytest.mark.parametrize("counts", [[], [0, 0], [1, -1], [1.5, 2]])
    def test_invalid_histograms(self, counts):
        with pytest.raises(CalibrationError):
            calib.build_table(counts, TAU)

    def test_table_serialization(self):
        table = calib.build_table([4, 1, 0, 5], TAU)
        again = CalibrationTable.from_dict(table.to_dict())
        np.testing.assert_array_equal(again.centers, table.centers)
        assert table.csv_rows()[0][:2] == [1, 4]
        assert table.validate()


class TestCalibrateTags:
    def test_single_tag(self):
        table = calib.build_table([1, 1, 1, 1], TAU)
        assert calib.calibrate_tag(table, RawTag(3, 2)) == pytest.approx(250.0)
        assert calib.calibrate_tag(table, RawTag(3, 0)) == pytest.approx(300.0)
        with pytest.raises(CalibrationError):
            calib.calibrate_tag(table, RawTag(3, 5))

    def test_clamping(self):
        table = calib.build_table([1, 1, 1, 1], TAU)
        times, clamped = calib.calibrate_tags(table, TagBatch([1, 2], [1, 6]))
        assert clamped == 1
        np.testing.assert_allclose(times, [75.0, 100.0])
        with pytest.raises(CalibrationError):
            calib.calibrate_tags(table, TagBatch([1], [6]), clamp=False)

    def test_round_trip_with_the_true_table(self, toy_line, rng):
        times = rng.uniform(0, 1e6, 50_000)
        table = calib.build_table([1] * 10, toy_line.coarse_period)
        calibrated, _ = calib.calibrate_tags(table, TdcChannel(toy_line).acquire(times, 25.0))
        # centers carry a constant offset of half the last bin
        error = calibrated - times + table.bin_widths[-1] / 2
        assert np.abs(error).max() <= table.bin_widths.max() / 2 + 1e-9

    def test_measured_table_tracks_arrivals(self, toy_line, rng):
        times = rng.uniform(0, 1e6, 50_000)
        channel = TdcChannel(toy_line)
        table = calib.build_table(channel.histogram(times, 25.0), toy_line.coarse_period)
        calibrated, _ = calib.calibrate_tags(table, channel.acquire(times, 25.0))
        error = calibrated - times
        assert abs(error.mean() + 5.0) < 0.5
        assert np.abs(error + 5.0).max() < 6.0


class TestChiSquare:
    def test_identical_and_scaled(self):
        assert calib.chi_square([5, 6, 7], [5, 6, 7]) == 0.0
        assert calib.chi_square([5, 6, 7], [10, 12, 14]) == pytest.approx(0.0, abs=1e-15)

    def test_disjoint_histograms(self):
        assert calib.chi_square([1, 0], [0, 1]) == pytest.approx(2.0)

    def test_different_lengths_are_padded(self):
        assert calib.chi_square([1, 1], [1, 1, 0]) == 0.0

    def test_empty(self):
        with pytest.raises(CalibrationError):
            calib.chi_square([0, 0], [1, 1])


class TestSteady:
    def test_round_robin(self):
        np.testing.assert_array_equal(calib.round_robin([2, 0, 3]), [1, 3, 1, 3, 3])

    def test_init_statuses(self):
        assert calib.steady_init([5, 5], capacity=16, coarse_period=TAU).status is SteadyStatus.OK
        truncated = calib.steady_init([10, 10], capacity=16, coarse_period=TAU)
        assert truncated.status is SteadyStatus.TRUNCATED
        assert truncated.size == 16
        undersized = calib.steady_init([1, 1, 1, 1], capacity=2, coarse_period=TAU)
        assert undersized.status is SteadyStatus.UNDERSIZED

    def test_truncation_keeps_the_histogram_shape(self):
        state = calib.steady_init([100, 50, 100], capacity=30, coarse_period=TAU)
        assert state.counts.tolist() == [12, 6, 12]
        assert state.status is SteadyStatus.TRUNCATED

    def test_seeded_table_matches_static(self):
        counts = [7, 3, 0, 9, 4]
        state = calib.steady_init(counts, capacity=1024, coarse_period=TAU)
        np.testing.assert_array_equal(calib.steady_table(state).centers,
                                      calib.build_table(counts, TAU).centers)

    def test_push_evicts_oldest(self):
        state = calib.steady_init([1, 1], capacity=2, coarse_period=TAU)
        assert state.window.tolist() == [1, 2]
        assert state.push(2) == 1
        assert state.window.tolist() == [2, 2]
        assert state.counts.tolist() == [0, 2]

    def test_push_out_of_range(self):
        state = calib.steady_init([1, 1], capacity=4, coarse_period=TAU, max_bins=8)
        with pytest.raises(CalibrationError):
            calib.steady_push(state, 9)
        with pytest.raises(CalibrationError):
            calib.steady_push(state, 0)

    @pytest.mark.parametrize("capacity", [1, 2, 7, 16, 64])
    def test_prefix_structure_after_every_push(self, rng, capacity):
        state = SteadyState(capacity, TAU, max_bins=16)
        for fine in rng.integers(1, 17, 4 * capacity + 10):
            calib.steady_push(state, int(fine))
            expected = np.cumsum(np.bincount(state.window - 1, minlength=16))
            np.testing.assert_array_equal(state.tree.prefix_sums(16), expected)

    def test_push_many_matches_single_pushes(self, rng):
        single = SteadyState(100, TAU, max_bins=32)
        batched = SteadyState(100, TAU, max_bins=32)
        for size in [5, 50, 99, 1, 250, 100, 3]:
            fines = rng.integers(1, 33, size)
            for fine in fines:
                single.push(int(fine))
            batched.push_many(fines)
            np.testing.assert_array_equal(single.window, batched.window)
            np.testing.assert_array_equal(single.counts, batched.counts)
            assert single.tree.tree == batched.tree.tree
        assert single.pushes == batched.pushes

    def test_full_window_equals_static_calibration(self, default_line, rng):
        channel = TdcChannel(default_line)
        times = np.sort(rng.uniform(0, 1e9, 1 << 17))
        fines = channel.acquire(times, 40.0).fine
        state = calib.steady_init(channel.histogram(rng.uniform(0, 1e9, 5000), 25.0),
                                  capacity=1 << 17, coarse_period=default_line.coarse_period)
        for start in range(0, fines.size, 1024):
            state.push_many(fines[start:start + 1024])
        steady = calib.steady_table(state)
        static = calib.build_table(np.bincount(fines - 1), default_line.coarse_period)
        np.testing.assert_array_equal(steady.counts, static.counts)
        np.testing.assert_allclose(steady.centers, static.centers, rtol=1e-12)

    def test_table_is_cached_until_push(self):
        state = calib.steady_init([3, 3], capacity=8, coarse_period=TAU)
        assert calib.steady_table(state) is calib.steady_table(state)
        first = calib.steady_table(state)
        calib.steady_push(state, 1)
        assert calib.steady_table(state) is not first

    def test_fenwick_cumulative_counts(self):
        state = calib.steady_init([2, 0, 5], capacity=16, coarse_period=TAU)
        tree = FenwickTree.from_counts(state.counts)
        np.testing.assert_array_equal(state.tree.prefix_sums(3), tree.prefix_sums(3))


class TestSteadyCalibrator:
    def test_blocks_use_the_window_before_their_events(self):
        seed_counts = [10, 10, 10, 10]
        steady = SteadyCalibrator.from_counts(seed_counts, capacity=40, coarse_period=TAU, block=4)
        static = calib.build_table(seed_counts, TAU)
        tags = TagBatch(np.arange(1, 9), [1] * 8)
        times = steady.calibrate(tags)
        expected_first, _ = calib.calibrate_tags(static, tags.slice(0, 4))
        np.testing.assert_allclose(times[:4], expected_first)
        # the second block sees the first block's events
        assert times[4] - 5 * TAU != pytest.approx(times[0] - TAU)
        assert steady.state.window[-8:].tolist() == [1] * 8

    def test_stale_table_clamps(self):
        steady = SteadyCalibrator.from_counts([5, 5], capacity=10, coarse_period=TAU, block=2)
        steady.calibrate(TagBatch([1, 1], [3, 3]))
        assert steady.clamped == 2
        assert steady.table.n_c == 3

    def test_block_size_checked(self):
        state = calib.steady_init([1], capacity=4, coarse_period=TAU)
        with pytest.raises(CalibrationError):
            SteadyCalibrator(state, block=0)


@pytest.mark.slow
def test_code_density_matches_the_true_widths():
    bench = Bench(ExperimentSpec())
    events = 1 << 20
    counts = bench.ro_counts(0, 25.0, events)
    widths = delayline.true_bin_widths(bench.model, 25.0)
    assert counts.size == widths.size
    p = widths / bench.model.coarse_period
    sigma = np.sqrt(events * p * (1 - p))
    assert np.all(np.abs(counts - events * p) <= 5 * sigma)
