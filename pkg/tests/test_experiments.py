"""Tests for the experiment runner on reduced event counts"""

import json
from pathlib import Path

import numpy as np
import pytest

from models import ExperimentSpec, SourceConfig, SourceKind, Strategy, TemperatureRange
from services import (
    AnalysisError, Bench, CommensurabilityWarning, ConfigError, analyze_capture, load_spec,
    run_calib_compare, run_qkd, run_stream_bench, run_tempsweep, save_spec, simulate_capture,
    source_records
)
from services import experiments
from services.experiments import FIT_KEY, RO_KEY, derive_seed

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


class TestSpecFiles:
    def test_bundled_experiment_loads(self):
        spec = load_spec(DATA_DIR / "default_experiment.json")
        assert spec.validate()
        assert spec.strategies == list(Strategy)

    def test_save_and_load(self, small_spec, tmp_path):
        path = save_spec(small_spec, tmp_path / "spec.json")
        assert load_spec(path).to_dict() == small_spec.to_dict()

    @pytest.mark.parametrize("content", ["{not json", "[1, 2]", '{"bogus": 1}',
                                         '{"events_per_step": 0}'])
    def test_bad_documents(self, tmp_path, content):
        path = tmp_path / "bad.json"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ConfigError):
            load_spec(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_spec(tmp_path / "absent.json")


class TestSeeds:
    def test_derive_seed_is_stable_and_keyed(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert derive_seed(1, 2) != derive_seed(2, 2)

    def test_bench_sources_follow_the_clock(self, small_spec):
        bench = Bench(small_spec)
        cfg = bench.source('spd', 5)
        assert cfg.sampling_frequency == bench.model.f_s
        assert cfg.seed == derive_seed(small_spec.seed, 5)


class TestTempSweep:
    @pytest.fixture(scope="class")
    def sweep(self, tmp_path_factory):
        spec = ExperimentSpec(name="sweep", events_per_step=1 << 14, window=1 << 14,
                              temperatures=TemperatureRange(5, 80, 25), channel_noise_ps=8.0,
                              output_dir=str(tmp_path_factory.mktemp("sweep")), seed=99)
        return run_tempsweep(spec)

    def test_rows_cover_every_strategy_and_step(self, sweep):
        assert len(sweep.rows) == 4 * len(Strategy)
        assert set(sweep.summary()) == {s.value for s in Strategy}
        assert sorted(sweep.true_n_c) == [5.0, 30.0, 55.0, 80.0]
        assert sweep.channel_noise_ps == 8.0
        assert all(np.isfinite(row['fwhm_ps']) and row['fwhm_ps'] > 0 for row in sweep.rows)

    def test_strategies_agree_at_the_first_step(self, sweep):
        first = {row['strategy']: row for row in sweep.rows if row['temperature'] == 5.0}
        fixed_ro, per_step = first['fixed_ro_5C'], first['ro_per_step']
        assert fixed_ro['fwhm_ps'] == per_step['fwhm_ps']
        assert fixed_ro['n_c'] == per_step['n_c']
        assert first['steady']['fwhm_ps'] == pytest.approx(first['fixed_spd_5C']['fwhm_ps'],
                                                           rel=0.05)

    def test_fixed_tables_do_not_follow_temperature(self, sweep):
        assert len(set(sweep.series(Strategy.FIXED_RO_5C, 'n_c'))) == 1
        assert len(set(sweep.series(Strategy.FIXED_RO_5C, 'mean_truncated_delay_ps'))) == 1

    def test_fresh_tables_track_the_line(self, sweep):
        n_c = sweep.series(Strategy.RO_PER_STEP, 'n_c')
        delays = sweep.series(Strategy.RO_PER_STEP, 'mean_truncated_delay_ps')
        assert n_c[-1] > n_c[0]
        assert all(a > b for a, b in zip(delays, delays[1:]))
        assert sweep.true_n_c[80.0] > sweep.true_n_c[5.0]

    def test_result_serializes(self, sweep):
        document = json.loads(json.dumps(sweep.to_dict()))
        assert len(document['rows']) == len(sweep.rows)
        assert [len(row) for row in sweep.csv_rows()] == [len(sweep.HEADERS)] * len(sweep.rows)


class TestCalibCompare:
    def test_same_source_gives_zero_chi_square(self, small_spec):
        cfg = Bench(small_spec).source('ro', RO_KEY)
        result = run_calib_compare(small_spec, ro=cfg, spd=cfg)
        assert result['chi_square'] == 0.0
        assert result['uniform_sources']
        assert result['ro_counts'] == result['spd_counts']

    def test_default_sources(self, small_spec):
        result = run_calib_compare(small_spec)
        assert result['chi_square'] < 0.05
        assert 128 <= len(result['ro_counts']) <= 136
        assert sum(result['ro_counts']) == small_spec.window
        assert result['min_events'] > 0
        assert result['ro_phase_ks_pvalue'] > 1e-3

    def test_locked_laser_is_flagged(self, small_spec):
        locked = SourceConfig(SourceKind.LASER_SPD, clock_offset_ppm=0.0, jitter_sigma=0.0)
        with pytest.warns(CommensurabilityWarning):
            result = run_calib_compare(small_spec, spd=locked)
        assert not result['uniform_sources']
        assert np.count_nonzero(result['spd_counts']) <= 8
        assert result['chi_square'] > 0.5


class TestQkd:
    def test_qber_matches_the_routing_error(self, small_spec):
        small_spec.qkd.detections = 20_000
        result = run_qkd(small_spec)
        assert result['qber']['qber'] == pytest.approx(small_spec.qkd.routing_error, abs=0.008)
        assert result['detections'] == 20_000
        assert result['background_events'] == 0
        assert 200.0 < result['pulse']['fwhm_ps'] < 280.0
        assert not result['pulse']['smeared']
        assert len(result['gate_sweep']) == len(small_spec.qkd.gate_widths_ps)

    def test_background_shows_up_in_wide_gates(self, small_spec):
        small_spec.qkd.detections = 20_000
        small_spec.qkd.background_rate = 2e5
        result = run_qkd(small_spec)
        rates = [r['qber'] for r in result['gate_sweep']]
        assert result['background_events'] > 0
        assert rates[-1] > rates[0]


class TestStreamBench:
    def test_defaults_keep_up(self, small_spec):
        small_spec.stream.duration_s = 0.5
        result = run_stream_bench(small_spec, records=20_000)
        assert result['no_overflow_condition']
        assert result['predicted_first_overflow_s'] is None
        assert not result['buffer']['overflowed']
        assert result['loopback']['lossless']
        assert result['overflow_horizon_s'] == pytest.approx(2 ** 48 / 412.5e6)


class TestCaptures:
    def test_simulate_then_analyze(self, small_spec, tmp_path):
        path = tmp_path / "ro.tdcr"
        info = simulate_capture(small_spec, path, 'ro', 25.0, 20_000)
        assert info['records'] == 20_000
        result = analyze_capture(path)
        assert result['records'] == 20_000
        assert 128 <= result['table'].n_c <= 133
        assert result['wrapped_records'] == 0
        assert result['linearity'].dnl.size == result['table'].n_c

    def test_analyze_other_channel(self, small_spec, tmp_path):
        path = tmp_path / "ro.tdcr"
        simulate_capture(small_spec, path, 'ro', 25.0, 1000)
        with pytest.raises(AnalysisError):
            analyze_capture(path, channel=3)

    def test_unknown_role(self, small_spec, tmp_path):
        with pytest.raises(ConfigError):
            simulate_capture(small_spec, tmp_path / "x.tdcr", 'laser')
        with pytest.raises(ConfigError):
            list(source_records(small_spec, 'laser', count=10))

    def test_source_records_chunks(self, small_spec):
        chunks = list(source_records(small_spec, 'spd', 25.0, count=1000, chunk=300))
        assert [c.size for c in chunks] == [300, 300, 300, 100]


class TestChannelNoise:
    @pytest.fixture(scope="class")
    def jitter_at(self):
        spec = ExperimentSpec(events_per_step=1 << 16)
        bench = Bench(spec)
        events = bench.spd_events(25.0)
        tables = experiments.fit_tables(bench)
        seed = derive_seed(spec.seed, FIT_KEY)

        def fwhm(sigma):
            return bench.pair_fwhm(bench.acquire_pair(events, sigma, 25.0, seed), tables)
        return fwhm

    def test_channels_have_their_own_lines(self, small_spec):
        bench = Bench(small_spec)
        assert bench.model is bench.lines[0]
        assert not np.array_equal(bench.lines[0].base_delays, bench.lines[1].base_delays)
        assert bench.lines[1].temp_coeff > bench.lines[0].temp_coeff
        assert bench.channels[1].model is bench.lines[1]

    def test_jitter_grows_with_the_injected_noise(self, jitter_at):
        values = [jitter_at(sigma) for sigma in (0.0, 10.0, 20.0, 40.0)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert values[0] < ExperimentSpec().target_fwhm_ps

    def test_large_noise_dominates_the_jitter(self, jitter_at):
        expected = 2 * np.sqrt(2 * np.log(2)) * np.sqrt(2) * 40.0
        assert 0.98 * expected <= jitter_at(40.0) <= 1.1 * expected


@pytest.mark.slow
class TestAcceptanceScale:
    def test_noise_fit_hits_the_target_jitter(self):
        spec = ExperimentSpec()
        bench = Bench(spec)
        sigma = experiments.fit_channel_noise(bench)
        assert 0.0 < sigma < 40.0
        events = bench.spd_events(25.0)
        tags = bench.acquire_pair(events, sigma, 25.0, derive_seed(spec.seed, FIT_KEY))
        fwhm = bench.pair_fwhm(tags, experiments.fit_tables(bench))
        assert fwhm == pytest.approx(spec.target_fwhm_ps, abs=0.5)

    def test_qber_over_a_million_gated_events(self):
        spec = ExperimentSpec()
        spec.qkd.detections = 2_200_000
        result = run_qkd(spec)
        assert result['qber']['gated'] >= 1_000_000
        assert result['qber']['qber'] == pytest.approx(0.022, abs=0.001)


@pytest.mark.slow
class TestTempSweepAcceptance:
    """Full 5 to 80 C sweep at 1 C steps with the noise fitted at 25 C"""

    @pytest.fixture(scope="class")
    def sweep(self, tmp_path_factory):
        spec = ExperimentSpec(output_dir=str(tmp_path_factory.mktemp("acceptance")))
        return run_tempsweep(spec)

    def test_bin_count_range(self, sweep):
        assert sweep.true_n_c[5.0] == 129
        assert 134 <= sweep.true_n_c[80.0] <= 136
        measured = sweep.series(Strategy.RO_PER_STEP, "n_c")
        truth = [sweep.true_n_c[t] for t in sorted(sweep.true_n_c)]
        assert all(t - 1 <= m <= t for m, t in zip(measured, truth))
        assert len(set(sweep.series(Strategy.FIXED_SPD_5C, 'n_c'))) == 1

    def test_fixed_calibration_degrades_with_temperature(self, sweep):
        fixed = np.array(sweep.series(Strategy.FIXED_RO_5C))
        assert len(fixed) == 76
        # step to step within the fit noise of one run
        assert np.all(np.diff(fixed) > -0.75)
        blocks = [fixed[i:i + 15].mean() for i in range(0, 75, 15)]
        assert all(b > a for a, b in zip(blocks, blocks[1:]))
        assert fixed[-1] > fixed[0] + 2.0

    def test_steady_calibration_is_the_most_stable(self, sweep):
        summary = sweep.summary()
        assert summary['steady']['std_fwhm_ps'] < summary['ro_per_step']['std_fwhm_ps']
        assert summary['steady']['std_fwhm_ps'] < summary['fixed_ro_5C']['std_fwhm_ps']
