"""
Experiment runner: calibration source comparison, temperature sweep with four
calibration strategies, QKD time-filtering scenario, streaming benchmark and
capture simulation/analysis.
Demonstrates: Service orchestration, Deterministic seeding, JSON persistence
"""

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from models import (
    CalibrationTable, DelayLineModel, ExperimentSpec, OutputFormat, ServerConfig,
    SourceConfig, Strategy, TagBatch
)
from utils.export import spec_hash, write_csv, write_json
from utils.validators import ValidationError
from . import analysis, calib, delayline, sources, stream
from .errors import AnalysisError, ConfigError, CommensurabilityWarning
from .pipeline import TdcChannel
from .server import loopback_benchmark

logger = logging.getLogger(__name__)

NOISE_SEARCH_PS = (0.0, 40.0)
# ring-oscillator events behind the tables the channel noise is fitted against
FIT_RO_EVENTS = 1 << 20
FIT_TEMPERATURE = 25.0
CHANNELS = (0, 1)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible child seed for a (purpose, channel, step) key"""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def _temperature_key(temperature: float) -> int:
    return int(round(temperature * 1000))


# purpose keys for derive_seed
RO_KEY, SPD_KEY, NOISE_KEY, FIT_KEY, QKD_KEY, ROUTE_KEY, CAPTURE_KEY = range(1, 8)


def load_spec(path: Path) -> ExperimentSpec:
    """Read an experiment document; any problem becomes a ConfigError"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Failed to load config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    try:
        return ExperimentSpec.from_dict(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def save_spec(spec: ExperimentSpec, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(spec.to_dict(), f, indent=2, ensure_ascii=False, sort_keys=True)
    except OSError as exc:
        raise ConfigError(f"Failed to save config {path}: {exc}") from exc
    return path


def provenance(spec: ExperimentSpec, experiment: str, **extra: Any) -> Dict[str, Any]:
    data = {'spec_hash': spec_hash(spec.to_dict()), 'seed': spec.seed,
            'name': spec.name, 'experiment': experiment}
    data.update(extra)
    return data


def export_result(spec: ExperimentSpec, stem: str, headers: Sequence[str],
                  rows: Sequence[Sequence[Any]], payload: Dict[str, Any],
                  out_dir: Optional[Path] = None, **metadata: Any) -> Path:
    """Write rows as CSV or the payload as JSON, in the experiment's output format"""
    out_dir = Path(out_dir or spec.output_dir)
    meta = provenance(spec, stem, **metadata)
    try:
        if spec.format is OutputFormat.JSON:
            return write_json(out_dir / f"{stem}.json", payload, meta)
        return write_csv(out_dir / f"{stem}.csv", headers, rows, meta)
    except OSError as exc:
        raise ConfigError(f"Failed to write {stem} results to {out_dir}: {exc}") from exc


class Bench:
    """
    Two TDC channels, each behind its own carry chain built from the spec's
    profile, plus the seeded sources that drive them
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.lines: Dict[int, DelayLineModel] = {
            ch: delayline.make_delay_line(profile=spec.profile.for_channel(ch))
            for ch in CHANNELS}
        self.model: DelayLineModel = self.lines[0]
        self.channels = {ch: TdcChannel(self.lines[ch], channel=ch) for ch in CHANNELS}

    def source(self, role: str, *keys: int) -> SourceConfig:
        return self.spec.sources[role].with_overrides(
            seed=derive_seed(self.spec.seed, *keys),
            sampling_frequency=self.model.f_s)

    def ro_counts(self, channel: int, temperature: float, count: Optional[int] = None) -> np.ndarray:
        """Code-density histogram of a ring-oscillator run"""
        cfg = self.source('ro', RO_KEY, channel, _temperature_key(temperature))
        events = sources.next_events(cfg, count or self.spec.window)
        return self.channels[channel].histogram(events.times, temperature)

    def ro_table(self, channel: int, temperature: float,
                 count: Optional[int] = None) -> CalibrationTable:
        return calib.build_table(self.ro_counts(channel, temperature, count),
                                 self.model.coarse_period)

    def spd_events(self, temperature: float, count: Optional[int] = None):
        cfg = self.source('spd', SPD_KEY, _temperature_key(temperature))
        return sources.next_events(cfg, count or self.spec.events_per_step)

    def acquire_pair(self, events, noise_ps: float, temperature: float,
                     noise_seed: int) -> Tuple[TagBatch, TagBatch]:
        """Split events onto channels 0 and 1 with per-channel noise and tag them"""
        a, b = sources.split_two_channels(events, noise_ps, noise_seed)
        return (self.channels[0].acquire(a.times, temperature),
                self.channels[1].acquire(b.times, temperature))

    def pair_fwhm(self, tags: Tuple[TagBatch, TagBatch],
                  tables: Tuple[CalibrationTable, CalibrationTable]) -> float:
        times_a, _ = calib.calibrate_tags(tables[0], tags[0])
        times_b, _ = calib.calibrate_tags(tables[1], tags[1])
        return analysis.fwhm_jitter(times_a, times_b).fwhm


def fit_tables(bench: Bench, temperature: float = FIT_TEMPERATURE
               ) -> Tuple[CalibrationTable, CalibrationTable]:
    """Long-run RO tables for both channels, so table noise stays out of the fitted jitter"""
    return tuple(bench.ro_table(ch, temperature, FIT_RO_EVENTS) for ch in CHANNELS)


def fit_channel_noise(bench: Bench, target_fwhm: Optional[float] = None,
                      temperature: float = FIT_TEMPERATURE) -> float:
    """
    Per-channel Gaussian noise (ps) that makes the two-channel jitter equal
    ``target_fwhm`` at ``temperature``. The same events and normal draws are
    reused for every trial value so the objective is smooth in sigma.
    """
    spec = bench.spec
    target = target_fwhm or spec.target_fwhm_ps
    events = bench.spd_events(temperature)
    tables = fit_tables(bench, temperature)
    noise_seed = derive_seed(spec.seed, FIT_KEY)

    def objective(sigma: float) -> float:
        tags = bench.acquire_pair(events, sigma, temperature, noise_seed)
        try:
            fwhm = bench.pair_fwhm(tags, tables)
        except AnalysisError:
            fwhm = 0.0
        return fwhm - target

    low, high = NOISE_SEARCH_PS
    f_low, f_high = objective(low), objective(high)
    if f_low > 0 or f_high < 0:
        raise AnalysisError(f"target FWHM {target} ps is outside the reachable range "
                            f"[{f_low + target:.2f}, {f_high + target:.2f}] ps")
    sigma = float(brentq(objective, low, high, xtol=1e-3))
    logger.info("channel noise fitted: sigma=%.3f ps for FWHM %.2f ps", sigma, target)
    return sigma


@dataclass
class SweepResult:
    """Per-temperature rows of a strategy comparison"""
    rows: List[Dict[str, Any]]
    channel_noise_ps: float
    true_n_c: Dict[float, int] = field(default_factory=dict)

    HEADERS = ['temperature', 'strategy', 'fwhm_ps', 'mean_truncated_delay_ps', 'n_c']

    def series(self, strategy: Strategy, key: str = 'fwhm_ps') -> List[float]:
        return [row[key] for row in self.rows if row['strategy'] == strategy.value]

    def summary(self) -> Dict[str, Dict[str, float]]:
        result = {}
        for name in dict.fromkeys(row['strategy'] for row in self.rows):
            values = np.array([r['fwhm_ps'] for r in self.rows if r['strategy'] == name])
            result[name] = {'mean_fwhm_ps': float(values.mean()), 'std_fwhm_ps': float(values.std()),
                            'min_fwhm_ps': float(values.min()), 'max_fwhm_ps': float(values.max())}
        return result

    def csv_rows(self) -> List[List[Any]]:
        return [[row[h] for h in self.HEADERS] for row in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {'rows': self.rows, 'channel_noise_ps': self.channel_noise_ps,
                'true_n_c': {str(t): n for t, n in self.true_n_c.items()},
                'summary': self.summary()}


def run_tempsweep(spec: ExperimentSpec, bench: Optional[Bench] = None) -> SweepResult:
    """
    For every temperature and strategy: tag a two-channel laser/SPD run,
    calibrate it with the strategy's tables and report the jitter, the
    truncated mean bin width and N_c. The steady windows persist across steps.
    """
    bench = bench or Bench(spec)
    temperatures = spec.temperatures.values()
    noise = spec.channel_noise_ps
    if noise is None:
        noise = fit_channel_noise(bench)

    first = temperatures[0]
    fixed_ro = fixed_spd = steady = None
    strategies = spec.strategies
    if Strategy.FIXED_RO_5C in strategies:
        fixed_ro = tuple(bench.ro_table(ch, first) for ch in CHANNELS)

    rows: List[Dict[str, Any]] = []
    true_n_c: Dict[float, int] = {}
    for step, temperature in enumerate(temperatures):
        key = _temperature_key(temperature)
        events = bench.spd_events(temperature)
        tags = bench.acquire_pair(events, noise, temperature,
                                  derive_seed(spec.seed, NOISE_KEY, key))
        true_n_c[temperature] = delayline.active_bins(bench.model, temperature)

        if step == 0 and (Strategy.FIXED_SPD_5C in strategies or Strategy.STEADY in strategies):
            spd_counts = [np.bincount(t.fine - 1) for t in tags]
            fixed_spd = tuple(calib.build_table(c, bench.model.coarse_period) for c in spd_counts)
            if Strategy.STEADY in strategies:
                steady = tuple(calib.SteadyCalibrator.from_counts(
                    c, spec.window, bench.model.coarse_period, spec.steady_block)
                    for c in spd_counts)

        for strategy in strategies:
            if strategy is Strategy.STEADY:
                times = [steady[i].calibrate(tags[i]) for i in CHANNELS]
                tables = (steady[0].table, steady[1].table)
                fwhm = analysis.fwhm_jitter(times[0], times[1]).fwhm
            else:
                if strategy is Strategy.FIXED_RO_5C:
                    tables = fixed_ro
                elif strategy is Strategy.FIXED_SPD_5C:
                    tables = fixed_spd
                else:
                    tables = tuple(bench.ro_table(ch, temperature) for ch in CHANNELS)
                fwhm = bench.pair_fwhm(tags, tables)
            rows.append({
                'temperature': temperature,
                'strategy': strategy.value,
                'fwhm_ps': float(fwhm),
                'mean_truncated_delay_ps': analysis.truncated_mean_delay(
                    tables[0].bin_widths, min(spec.truncate_k, tables[0].n_c)),
                'n_c': tables[0].n_c,
            })
        logger.info("T=%.1f C done (%d/%d)", temperature, step + 1, len(temperatures))
    return SweepResult(rows, float(noise), true_n_c)


def run_calib_compare(spec: ExperimentSpec, temperature: float = FIT_TEMPERATURE,
                      ro: Optional[SourceConfig] = None,
                      spd: Optional[SourceConfig] = None) -> Dict[str, Any]:
    """
    Code-density histograms from the ring oscillator and from the laser/SPD
    on the same line, compared with chi_square. Explicit source configs are
    used as given (seed included).
    """
    bench = Bench(spec)
    key = _temperature_key(temperature)
    ro = ro or bench.source('ro', RO_KEY, 0, key)
    spd = spd or bench.source('spd', SPD_KEY, key)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CommensurabilityWarning)
        ro_events = sources.next_events(ro, spec.window)
        spd_events = sources.next_events(spd, spec.window)
    uniform = not any(issubclass(w.category, CommensurabilityWarning) for w in caught)
    for w in caught:
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)

    ro_hist = bench.channels[0].histogram(ro_events.times, temperature)
    spd_hist = bench.channels[0].histogram(spd_events.times, temperature)
    period = bench.model.coarse_period
    return {
        'temperature': temperature,
        'chi_square': calib.chi_square(ro_hist, spd_hist),
        'ro_counts': ro_hist.tolist(),
        'spd_counts': spd_hist.tolist(),
        'ro_phase_ks_pvalue': sources.phase_uniformity(ro_events.times, period)[1],
        'spd_phase_ks_pvalue': sources.phase_uniformity(spd_events.times, period)[1],
        'uniform_sources': uniform,
        'min_events': calib.min_events(0.02, 0.1, int(np.count_nonzero(ro_hist))),
        'window': spec.window,
    }


def run_qkd(spec: ExperimentSpec, bench: Optional[Bench] = None) -> Dict[str, Any]:
    """
    HVDD pattern through the detectors and the TDC: pulse shape of the
    calibrated arrivals, QBER at the configured gate and over a gate sweep.
    """
    bench = bench or Bench(spec)
    settings = spec.qkd
    temperature = settings.temperature
    cfg = bench.source('qkd', QKD_KEY).with_overrides(background_rate=settings.background_rate)
    events = sources.EventSource(cfg).next_events(settings.detections)
    channels = sources.route_qkd_detections(events, settings.routing_error,
                                            derive_seed(spec.seed, ROUTE_KEY))
    table = bench.ro_table(0, temperature)
    tags = bench.channels[0].acquire(events.times, temperature)
    times, _ = calib.calibrate_tags(table, tags)

    period = cfg.period_ps
    pulse = analysis.pulse_shape(times[events.is_signal], period)
    center = pulse.phase_origin + pulse.fit.mean
    report = analysis.qber(times, channels, events.labels,
                           (center, min(settings.gate_width_ps, period)), period)
    widths = [min(w, period) for w in settings.gate_widths_ps]
    sweep = analysis.qber_gate_sweep(times, channels, events.labels, center, widths, period)
    logger.info("QBER %.4f over %d gated detections", report.qber, report.gated)
    return {
        'qber': report.to_dict(),
        'gate_sweep': [r.to_dict() for r in sweep],
        'pulse': pulse.to_dict(),
        'period_ps': period,
        'detections': len(events),
        'background_events': int(np.count_nonzero(~events.is_signal)),
    }


def run_stream_bench(spec: ExperimentSpec, records: Optional[int] = None) -> Dict[str, Any]:
    """Buffer feasibility simulation plus a loopback throughput measurement"""
    settings = spec.stream
    report = stream.simulate_buffer(settings.buffer, settings.duration_s)
    server = ServerConfig.from_dict({**settings.server.to_dict(), 'endpoint': "127.0.0.1:0"})
    bench = loopback_benchmark(records or settings.bench_records, server)
    return {
        'buffer': report.to_dict(),
        'predicted_first_overflow_s': settings.buffer.predicted_first_overflow(),
        'no_overflow_condition': settings.buffer.no_overflow,
        'loopback': bench,
        'overflow_horizon_s': stream.overflow_horizon(spec.profile.sampling_frequency),
    }


def simulate_capture(spec: ExperimentSpec, path: Path, role: str = 'ro',
                     temperature: float = FIT_TEMPERATURE,
                     count: Optional[int] = None) -> Dict[str, Any]:
    """Tag a source on channel 0 and store the raw records as a capture file"""
    if role not in spec.sources:
        raise ConfigError(f"unknown source role {role!r}")
    bench = Bench(spec)
    cfg = bench.source(role, CAPTURE_KEY, _temperature_key(temperature))
    events = sources.next_events(cfg, count or spec.window)
    tags = bench.channels[0].acquire(events.times, temperature)
    stream.write_capture(path, stream.encode_batch(tags), bench.model.f_s)
    logger.info("wrote %d records to %s", len(tags), path)
    return {'path': str(path), 'records': len(tags), 'source': role, 'temperature': temperature,
            'f_s': bench.model.f_s}


def analyze_capture(path: Path, channel: int = 0) -> Dict[str, Any]:
    """Calibration table and linearity of the records of one channel in a capture"""
    f_s, words = stream.read_capture(path)
    coarse, fine, channels, _ = stream.decode_records(words)
    fine = fine[channels == channel]
    if fine.size == 0:
        raise AnalysisError(f"capture {path} has no records on channel {channel}")
    if np.any(fine < 1):
        raise AnalysisError("capture contains fine value 0, which is not a delay line bin")
    table = calib.build_table(np.bincount(fine - 1), 1e12 / f_s)
    report = analysis.linearity(table)
    _, wrapped = stream.unwrap_coarse(coarse[channels == channel])
    return {'table': table, 'linearity': report, 'f_s': f_s, 'records': int(fine.size),
            'wrapped_records': int(np.count_nonzero(wrapped))}


def source_records(spec: ExperimentSpec, role: str = 'ro', temperature: float = FIT_TEMPERATURE,
                   count: Optional[int] = None, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Encoded tag records of one source, chunk by chunk (``count`` None runs forever)"""
    if role not in spec.sources:
        raise ConfigError(f"unknown source role {role!r}")
    bench = Bench(spec)
    source = sources.EventSource(bench.source(role, CAPTURE_KEY, _temperature_key(temperature)))
    produced = 0
    while count is None or produced < count:
        size = chunk if count is None else min(chunk, count - produced)
        events = source.next_events(size)
        yield stream.encode_batch(bench.channels[0].acquire(events.times, temperature))
        produced += size
