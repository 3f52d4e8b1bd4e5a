"""End-to-end tests of the command-line entry point"""

import json

import pytest

from main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from services import save_spec
from utils import read_csv

FAST = ["--events", "16384", "--noise-ps", "8", "--temperatures", "5", "80", "25", "--seed", "5"]


@pytest.fixture
def config(small_spec, tmp_path):
    small_spec.qkd.detections = 20_000
    small_spec.stream.duration_s = 0.2
    small_spec.stream.bench_records = 10_000
    return str(save_spec(small_spec, tmp_path / "spec.json"))


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["tempsweep", "--temperatures", "5", "80", "1"])
        assert args.command == "tempsweep"
        assert args.temperatures == [5.0, 80.0, 1.0]

    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["calibrate"])


class TestCommands:
    def test_tempsweep_writes_csv_with_provenance(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["tempsweep", "--out-dir", str(out), *FAST]) == EXIT_OK
        metadata, headers, rows = read_csv(out / "tempsweep.csv")
        assert headers == ["temperature", "strategy", "fwhm_ps", "mean_truncated_delay_ps", "n_c"]
        assert len(rows) == 16
        assert metadata["seed"] == "5"
        assert metadata["experiment"] == "tempsweep"
        assert len(metadata["spec_hash"]) == 16
        assert "Results written to" in capsys.readouterr().out

    def test_reruns_are_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        assert main(["tempsweep", "--out-dir", str(out), *FAST]) == EXIT_OK
        first = (out / "tempsweep.csv").read_bytes()
        assert main(["tempsweep", "--out-dir", str(out), *FAST]) == EXIT_OK
        assert (out / "tempsweep.csv").read_bytes() == first

    def test_json_format(self, tmp_path):
        out = tmp_path / "out"
        assert main(["tempsweep", "--out-dir", str(out), "--format", "json", *FAST]) == EXIT_OK
        document = json.loads((out / "tempsweep.json").read_text(encoding="utf-8"))
        assert document["metadata"]["channel_noise_ps"] == 8.0
        assert len(document["rows"]) == 16

    def test_calib_compare(self, config, tmp_path):
        out = tmp_path / "out"
        assert main(["calib-compare", "--config", config, "--out-dir", str(out)]) == EXIT_OK
        _, headers, rows = read_csv(out / "calib_compare.csv")
        assert headers == ["bin", "ro_count", "spd_count"]
        assert len(rows) >= 128

    def test_qkd(self, config, tmp_path):
        out = tmp_path / "out"
        assert main(["qkd", "--config", config, "--out-dir", str(out)]) == EXIT_OK
        assert (out / "qkd.csv").exists()
        _, headers, rows = read_csv(out / "pulse_shape.csv")
        assert headers == ["time_ps", "count"]
        assert rows

    def test_stream_bench(self, config, tmp_path):
        out = tmp_path / "out"
        assert main(["stream-bench", "--config", config, "--out-dir", str(out)]) == EXIT_OK
        _, _, rows = read_csv(out / "stream_bench.csv")
        values = dict(rows)
        assert values["loopback.lossless"] == "True"
        assert values["buffer.overflowed"] == "False"

    def test_simulate_then_analyze(self, config, tmp_path):
        out = tmp_path / "out"
        capture = tmp_path / "run.tdcr"
        assert main(["simulate", "--config", config, "--count", "20000",
                     "--output", str(capture)]) == EXIT_OK
        assert capture.exists()
        assert main(["analyze", str(capture), "--config", config, "--out-dir", str(out)]) == EXIT_OK
        _, headers, rows = read_csv(out / "calibration_table.csv")
        assert len(rows) >= 128
        _, headers, rows = read_csv(out / "linearity.csv")
        assert headers == ["bin", "dnl", "tdnl"]


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        assert main(["tempsweep", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
        assert "Configuration error" in capsys.readouterr().err

    def test_invalid_override(self, tmp_path):
        assert main(["tempsweep", "--out-dir", str(tmp_path), "--noise-ps", "-1"]) == EXIT_CONFIG
        assert main(["tempsweep", "--out-dir", str(tmp_path), "--events", "0"]) == EXIT_CONFIG

    def test_unknown_source_role(self, config, tmp_path):
        assert main(["simulate", "--config", config, "--source", "laser",
                     "--output", str(tmp_path / "x.tdcr")]) == EXIT_CONFIG

    def test_runtime_failure(self, tmp_path, capsys):
        bogus = tmp_path / "bogus.tdcr"
        bogus.write_bytes(b"not a capture file at all")
        assert main(["analyze", str(bogus), "--out-dir", str(tmp_path)]) == EXIT_RUNTIME
        assert "Error" in capsys.readouterr().err
