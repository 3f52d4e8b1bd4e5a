#!/usr/bin/env python3
"""
Command-line entry point for the TDC toolkit.
Demonstrates: CLI design, Command dispatch, Error handling, Exit codes
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from models import (
    CalibrationTable, ExperimentSpec, OutputFormat, ServerConfig, TemperatureRange, TransferMode
)
from services import (
    TDCError, ConfigError, TagServer, load_spec, run_tempsweep, run_calib_compare, run_qkd,
    run_stream_bench, simulate_capture, analyze_capture, source_records
)
from services.experiments import export_result, provenance, SweepResult
from utils import (
    ReportFormatter, TableFormatter, ValidationError, histogram_rows, write_csv, write_json
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdc", description="Tapped-delay-line TDC simulator, calibration and streaming toolkit")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("-v", "--verbose", action="store_true", help="shortcut for --log-level INFO")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment JSON document")
    common.add_argument("--out-dir", help="directory for CSV/JSON results")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--format", choices=[f.value for f in OutputFormat])

    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("tempsweep", parents=[common], help="jitter vs temperature per strategy")
    sweep.add_argument("--temperatures", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    sweep.add_argument("--events", type=int, help="events per step and calibration window")
    sweep.add_argument("--noise-ps", type=float, help="per-channel noise; fitted when omitted")

    compare = sub.add_parser("calib-compare", parents=[common],
                             help="ring oscillator vs laser/SPD code-density histograms")
    compare.add_argument("--temperature", type=float, default=25.0)

    sub.add_parser("qkd", parents=[common], help="QBER and pulse shape of the HVDD scenario")

    bench = sub.add_parser("stream-bench", parents=[common],
                           help="buffer simulation and loopback throughput")
    bench.add_argument("--records", type=int, help="records sent over loopback")

    simulate = sub.add_parser("simulate", parents=[common], help="write a capture file of raw tags")
    simulate.add_argument("--source", default="ro", help="source role (ro, spd, qkd)")
    simulate.add_argument("--temperature", type=float, default=25.0)
    simulate.add_argument("--count", type=int, help="number of tags")
    simulate.add_argument("--output", type=Path, help="capture path (default <out-dir>/capture.tdcr)")

    analyze = sub.add_parser("analyze", parents=[common], help="calibration and DNL of a capture")
    analyze.add_argument("input", type=Path, help="capture file")
    analyze.add_argument("--channel", type=int, default=0)

    serve = sub.add_parser("serve", parents=[common], help="stream tags over TCP")
    serve.add_argument("--endpoint", default="127.0.0.1:5555")
    serve.add_argument("--mode", choices=[m.value for m in TransferMode], default="continuous")
    serve.add_argument("--period-ms", type=float, default=50.0)
    serve.add_argument("--buffer-records", type=int, default=1 << 16)
    serve.add_argument("--rate", type=float, help="records per second (unpaced when omitted)")
    serve.add_argument("--source", default="ro")
    serve.add_argument("--temperature", type=float, default=25.0)
    serve.add_argument("--count", type=int, help="stop after this many records")
    serve.add_argument("--block", action="store_true", help="wait for slow clients instead of dropping")
    return parser


class TdcApp:
    """
    Dispatches subcommands and maps failures to exit codes.
    Demonstrates: Command pattern, Error translation
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.handlers: Dict[str, Callable[[ExperimentSpec], None]] = {
            'tempsweep': self.tempsweep,
            'calib-compare': self.calib_compare,
            'qkd': self.qkd,
            'stream-bench': self.stream_bench,
            'simulate': self.simulate,
            'analyze': self.analyze,
            'serve': self.serve,
        }

    def load(self) -> ExperimentSpec:
        """Spec from --config (or defaults) with the command-line overrides applied"""
        args = self.args
        spec = load_spec(args.config) if args.config else ExperimentSpec()
        if args.seed is not None:
            spec.seed = args.seed
        if args.out_dir:
            spec.output_dir = args.out_dir
        if args.format:
            spec.format = OutputFormat(args.format)
        if getattr(args, 'temperatures', None):
            start, stop, step = args.temperatures
            spec.temperatures = TemperatureRange(start, stop, step, spec.temperatures.order)
        if getattr(args, 'events', None) is not None:
            spec.events_per_step = spec.window = args.events
        if getattr(args, 'noise_ps', None) is not None:
            spec.channel_noise_ps = args.noise_ps
        spec.raise_if_invalid()
        return spec

    def run(self) -> int:
        try:
            spec = self.load()
            self.handlers[self.args.command](spec)
        except (ConfigError, ValidationError) as e:
            print(f"❌ Configuration error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except TDCError as e:
            print(f"❌ Error: {e}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    def _written(self, path: Path) -> None:
        print(f"✅ Results written to {path}")

    def tempsweep(self, spec: ExperimentSpec) -> None:
        result: SweepResult = run_tempsweep(spec)
        print(ReportFormatter.format_strategy_summary(result.summary()))
        print(f"\nchannel noise: {result.channel_noise_ps:.3f} ps")
        self._written(export_result(
            spec, "tempsweep", SweepResult.HEADERS, result.csv_rows(), result.to_dict(),
            channel_noise_ps=round(result.channel_noise_ps, 6),
            events_per_step=spec.events_per_step))

    def calib_compare(self, spec: ExperimentSpec) -> None:
        result = run_calib_compare(spec, self.args.temperature)
        print(ReportFormatter.format_key_values(result, "Calibration source comparison"))
        ro, spd = result['ro_counts'], result['spd_counts']
        size = max(len(ro), len(spd))
        rows = [[i + 1, ro[i] if i < len(ro) else 0, spd[i] if i < len(spd) else 0]
                for i in range(size)]
        self._written(export_result(spec, "calib_compare", ["bin", "ro_count", "spd_count"],
                                    rows, result, chi_square=result['chi_square']))

    def qkd(self, spec: ExperimentSpec) -> None:
        result = run_qkd(spec)
        print(ReportFormatter.format_key_values(result['qber'], "QBER"))
        sweep_rows = [[r['gate_width_ps'], r['qber'], r['gated'], r['errors']]
                      for r in result['gate_sweep']]
        print(TableFormatter.format_table(["gate [ps]", "QBER", "gated", "errors"], sweep_rows,
                                          "Gate sweep"))
        self._written(export_result(spec, "qkd", ["gate_width_ps", "qber", "gated", "errors"],
                                    sweep_rows, result, qber=result['qber']['qber']))
        pulse = result['pulse']
        if spec.format is OutputFormat.CSV:
            self._written(export_result(spec, "pulse_shape", ["time_ps", "count"],
                                        histogram_rows(pulse['edges_ps'], pulse['counts']), pulse,
                                        fwhm_ps=pulse['fwhm_ps']))

    def stream_bench(self, spec: ExperimentSpec) -> None:
        result = run_stream_bench(spec, self.args.records)
        flat = {**{f"buffer.{k}": v for k, v in result['buffer'].items()},
                **{f"loopback.{k}": v for k, v in result['loopback'].items()},
                'predicted_first_overflow_s': result['predicted_first_overflow_s'],
                'no_overflow_condition': result['no_overflow_condition'],
                'overflow_horizon_s': result['overflow_horizon_s']}
        print(ReportFormatter.format_key_values(flat, "Streaming benchmark"))
        rows = [[key, value] for key, value in sorted(flat.items())
                if not isinstance(value, (list, dict))]
        self._written(export_result(spec, "stream_bench", ["metric", "value"], rows, result))

    def simulate(self, spec: ExperimentSpec) -> None:
        args = self.args
        path = args.output or Path(spec.output_dir) / "capture.tdcr"
        result = simulate_capture(spec, path, args.source, args.temperature, args.count)
        print(ReportFormatter.format_key_values(result, "Capture"))
        self._written(path)

    def analyze(self, spec: ExperimentSpec) -> None:
        result = analyze_capture(self.args.input, self.args.channel)
        table: CalibrationTable = result['table']
        report = result['linearity']
        print(ReportFormatter.format_linearity(report.to_dict()))
        out_dir = Path(spec.output_dir)
        meta = provenance(spec, "analyze", capture=str(self.args.input), channel=self.args.channel)
        try:
            if spec.format is OutputFormat.JSON:
                path = write_json(out_dir / "analysis.json",
                                  {'table': table.to_dict(), 'linearity': report.to_dict(),
                                   'records': result['records'],
                                   'wrapped_records': result['wrapped_records']}, meta)
                self._written(path)
            else:
                self._written(write_csv(out_dir / "calibration_table.csv",
                                        CalibrationTable.CSV_HEADERS, table.csv_rows(), meta))
                self._written(write_csv(out_dir / "linearity.csv", ["bin", "dnl", "tdnl"],
                                        report.csv_rows(), meta))
        except OSError as exc:
            raise ConfigError(f"Failed to write analysis to {out_dir}: {exc}") from exc

    def serve(self, spec: ExperimentSpec) -> None:
        args = self.args
        try:
            config = ServerConfig.from_dict({
                'endpoint': args.endpoint, 'mode': args.mode, 'period_ms': args.period_ms,
                'buffer_records': args.buffer_records, 'rate': args.rate,
            })
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        records = source_records(spec, args.source, args.temperature, args.count)
        server = TagServer(config, records, block=args.block)
        print(f"Serving {args.source} tags on {config.endpoint} ({config.mode.value}); Ctrl+C to stop")
        server.serve_forever()


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    args = build_parser().parse_args(argv)
    level = "INFO" if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT)
    return TdcApp(args).run()


if __name__ == "__main__":
    sys.exit(main())
