#!/usr/bin/env python3
"""
Demo script for the TDC toolkit.
Walks through the delay line, decoder, calibration, sources, analysis and streaming.
"""

import tempfile
from pathlib import Path

import numpy as np

from models import DelayProfile, ExperimentSpec, TemperatureRange, ThermometerCode
from services import Bench, run_calib_compare, run_qkd, run_tempsweep, TDCError
from services import calib, decoder, delayline, stream
from services.server import loopback_benchmark
from utils import ReportFormatter, TableFormatter


def demo_tdc_toolkit():
    """Short tour of every feature with reduced event counts"""

    print("TDC TOOLKIT DEMO")
    print("=" * 60)
    print("Tapped delay line, code-density calibration and streaming")
    print("=" * 60)

    spec = ExperimentSpec(name="demo", events_per_step=1 << 15, window=1 << 15,
                          temperatures=TemperatureRange(5, 80, 25), channel_noise_ps=8.0)
    bench = Bench(spec)
    model = bench.model

    # Demo 1: Delay line
    print("\nDEMO 1: Delay line")
    print("-" * 40)
    rows = [[t, delayline.active_bins(model, t),
             float(delayline.true_bin_widths(model, t).mean())] for t in (5.0, 25.0, 80.0)]
    print(TableFormatter.format_table(["T [C]", "N_c", "mean width [ps]"], rows))
    coarse, code = delayline.sample(model, 12_345.6, 25.0)
    print(f"t=12345.6 ps -> coarse {coarse}, code {str(code)[:40]}...")

    # Demo 2: Decoder and bubbles
    print("\nDEMO 2: Adder-tree decoder")
    print("-" * 40)
    rng = np.random.default_rng(1)
    code = ThermometerCode.filled(57, model.n_taps)
    bubbly = delayline.inject_bubbles(code, 1.0, rng)
    print(f"clean ones: {decoder.decode(code)}, with bubble: {decoder.decode(bubbly)}, "
          f"monotone: {bubbly.is_monotone()}")

    # Demo 3: Calibration
    print("\nDEMO 3: Code-density calibration")
    print("-" * 40)
    table = bench.ro_table(0, 25.0)
    print(f"N_c={table.n_c}, tau_res={table.tau_res:.3f} ps, empty bins={table.empty_bins}")
    print(f"events for alpha=0.02, beta=0.1: {calib.min_events(0.02, 0.1, table.n_c)}")
    comparison = run_calib_compare(spec)
    print(f"chi^2 RO vs laser/SPD: {comparison['chi_square']:.4f}")

    # Demo 4: Temperature sweep
    print("\nDEMO 4: Temperature sweep")
    print("-" * 40)
    sweep = run_tempsweep(spec, bench)
    print(ReportFormatter.format_sweep(sweep.rows))

    # Demo 5: QKD time filter
    print("\nDEMO 5: QKD time filter")
    print("-" * 40)
    spec.qkd.detections = 50_000
    qkd = run_qkd(spec, bench)
    print(ReportFormatter.format_key_values(qkd['qber'], "QBER"))

    # Demo 6: Streaming
    print("\nDEMO 6: Streaming")
    print("-" * 40)
    print(f"coarse counter horizon: {stream.overflow_horizon(model.f_s) / 86400:.2f} days")
    result = loopback_benchmark(200_000)
    print(ReportFormatter.format_key_values(result, "Loopback"))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "demo.tdcr"
        tags = bench.channels[0].acquire(np.sort(rng.uniform(0, 1e9, 10_000)), 25.0)
        stream.write_capture(path, stream.encode_batch(tags), model.f_s)
        f_s, words = stream.read_capture(path)
        print(f"capture round trip: {words.size} records at f_s={f_s / 1e6:.1f} MHz")

    # Demo 7: Error handling
    print("\nDEMO 7: Error handling")
    print("-" * 40)
    try:
        delayline.make_delay_line(profile=DelayProfile(n_taps=0))
    except TDCError as e:
        print(f"Rejected profile: {e}")
    try:
        calib.build_table([0, 0, 0], model.coarse_period)
    except TDCError as e:
        print(f"Rejected histogram: {e}")

    print("\nDEMO COMPLETED")


if __name__ == "__main__":
    demo_tdc_toolkit()
